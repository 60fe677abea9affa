"""Slice-wise background/skin/interior labelling and skin-surface extraction.

Each slice gets a label grid initialised to 2 (interior). A breadth-first
region growth starts from a background corner pixel: pixels below the skin
iso-value are labelled 0 (background) and their 4-neighbours join the visit
list; pixels at or above the iso-value are labelled 1 (skin) and are not
expanded. Pixels never enter the visit list twice. Whatever the growth cannot
reach keeps the initial 2, so the body is segmented as a whole by exclusion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from skimage import measure

from .errors import SegmentationError
from .mesh import TriangleMesh, remove_degenerate_triangles, vertex_normals
from .volume import Volume, pad_slices

BACKGROUND = 0
SKIN = 1
INTERIOR = 2


@dataclass(eq=False)
class LabelGrid:
    """Per-voxel classification {0 background, 1 skin, 2 interior}."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.uint8)
        if lab.ndim != 3:
            raise SegmentationError(f"label grid must be 3D, got shape {lab.shape}")
        self.labels = lab

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.labels.shape

    def counts(self) -> dict[int, int]:
        return {v: int((self.labels == v).sum()) for v in (BACKGROUND, SKIN, INTERIOR)}

    def validate(self) -> None:
        """Check the label invariants; raises SegmentationError on violation."""
        lab = self.labels
        if lab.max(initial=0) > INTERIOR:
            raise SegmentationError("labels must be one of {0, 1, 2}")
        for a, b in ((lab[:-1, :, :], lab[1:, :, :]), (lab[:, :-1, :], lab[:, 1:, :])):
            clash = ((a == BACKGROUND) & (b == INTERIOR)) | ((a == INTERIOR) & (b == BACKGROUND))
            if clash.any():
                raise SegmentationError(
                    "label grid has a 4-connected in-slice background/interior pair"
                )


def _require_iso(iso: float) -> float:
    iso = float(iso)
    if not math.isfinite(iso):
        raise SegmentationError(f"iso-value must be finite, got {iso!r}")
    return iso


def segment_slice(slice_values: np.ndarray, iso: float, seed: tuple[int, int] = (0, 0)) -> np.ndarray:
    """Label one slice by region growth from a background seed pixel.

    Returns a uint8 array of the slice shape with values in {0, 1, 2}. The
    growth is breadth first over 4-connected neighbours, realised one frontier
    wave at a time; the result only depends on reachability, not visit order.
    """
    iso = _require_iso(iso)
    vals = np.asarray(slice_values)
    if vals.ndim != 2:
        raise SegmentationError(f"slice must be 2D, got shape {vals.shape}")
    ni, nj = vals.shape
    si, sj = int(seed[0]), int(seed[1])
    if not (0 <= si < ni and 0 <= sj < nj):
        raise SegmentationError(f"seed {seed!r} outside slice of shape {vals.shape}")
    if vals[si, sj] >= iso:
        raise SegmentationError(
            f"seed pixel {seed!r} has value {vals[si, sj]} >= iso {iso}; "
            "it is not background, pick another corner"
        )
    below = vals < iso
    labels = np.full(vals.shape, INTERIOR, dtype=np.uint8)
    enqueued = np.zeros(vals.shape, dtype=bool)
    enqueued[si, sj] = True
    fi = np.array([si], dtype=np.intp)
    fj = np.array([sj], dtype=np.intp)
    while fi.size:
        bg = below[fi, fj]
        labels[fi[bg], fj[bg]] = BACKGROUND
        labels[fi[~bg], fj[~bg]] = SKIN
        ci, cj = fi[bg], fj[bg]
        if ci.size == 0:
            break
        nbr_i = np.concatenate((ci - 1, ci + 1, ci, ci))
        nbr_j = np.concatenate((cj, cj, cj - 1, cj + 1))
        ok = (nbr_i >= 0) & (nbr_i < ni) & (nbr_j >= 0) & (nbr_j < nj)
        nbr_i, nbr_j = nbr_i[ok], nbr_j[ok]
        fresh = ~enqueued[nbr_i, nbr_j]
        flat = np.unique(nbr_i[fresh] * nj + nbr_j[fresh])  # a pixel enters the list once
        fi, fj = flat // nj, flat % nj
        enqueued[fi, fj] = True
    return labels


_CORNER_OFFSETS = ((0, 0), (-1, 0), (0, -1), (-1, -1))


def segment_volume(vol: Volume, iso: float, pad_width: int = 1) -> LabelGrid:
    """Label a whole volume slice by slice.

    Slices are padded with the global minimum value first so the growth can
    route around a body touching the slice border; the returned grid is
    cropped back to the input extent. Each slice tries the four corner pixels
    as seeds in turn and fails if none is background.
    """
    iso = _require_iso(iso)
    padded = pad_slices(vol, pad_width) if pad_width >= 1 else vol
    nx, ny, nz = padded.dims
    labels = np.empty((nx, ny, nz), dtype=np.uint8)
    for k in range(nz):
        sl = padded.data[:, :, k]
        for oi, oj in _CORNER_OFFSETS:
            corner = (oi % nx, oj % ny)
            if sl[corner] < iso:
                labels[:, :, k] = segment_slice(sl, iso, corner)
                break
        else:
            raise SegmentationError(
                f"slice {k}: all four corner pixels have values >= iso {iso}, "
                "no background seed available"
            )
    if pad_width >= 1:
        labels = labels[pad_width:-pad_width, pad_width:-pad_width, :]
    return LabelGrid(labels)


def extract_skin_mesh(labels, spacing, origin, axes=None) -> TriangleMesh:
    """Triangulate the background/body interface of a label grid.

    Marching cubes runs on the binary indicator (1 where the label is skin or
    interior) at level 0.5, which puts vertices at the midpoints of indicator
    edges. The field is wrapped in one layer of zeros so surfaces close at the
    volume boundary. Vertex coordinates are in patient millimetres; triangles
    are wound consistently outward. An all-background grid yields an
    explicitly empty mesh.
    """
    lab = labels.labels if isinstance(labels, LabelGrid) else np.asarray(labels)
    if isinstance(labels, LabelGrid):
        labels.validate()
    spacing = np.asarray(spacing, dtype=np.float64).reshape(3)
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    axes = np.eye(3) if axes is None else np.asarray(axes, dtype=np.float64).reshape(3, 3)
    body = lab > BACKGROUND
    if not body.any():
        return TriangleMesh.empty()
    field = np.pad(body, 1).astype(np.float32)
    verts, faces, _, _ = measure.marching_cubes(field, level=0.5, allow_degenerate=False)
    idx = verts.astype(np.float64) - 1.0  # undo the closing border
    points = origin + (idx * spacing) @ axes.T
    faces = faces[:, ::-1]  # flip to outward winding (positive enclosed volume)
    mesh = remove_degenerate_triangles(TriangleMesh(points, faces))
    mesh.normals = vertex_normals(mesh)
    return mesh
