"""Volumetric scalar image: representation, I/O, padding, subsampling, reformatting.

The on-disk format is a text header next to a raw binary file. The header holds
``key: value`` lines (``dims``, ``spacing_mm``, ``origin_mm``, ``axes`` as nine
row-major floats, ``dtype``, ``byte_order``, optional ``data_file``). The raw
file stores voxels little-endian with x varying fastest, then y, then z.

Voxel values are kept as signed 32-bit integers: wide enough for the CT
Hounsfield range and typical MR intensities, with no float ambiguity when
thresholding. Positions refer to voxel centres: voxel (i, j, k) sits at
``origin + axes @ (spacing * (i, j, k))`` in patient millimetres.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import VolumeError
from .rigid import RigidTransform

_DTYPES = {
    "int8": np.dtype("<i1"),
    "uint8": np.dtype("<u1"),
    "int16": np.dtype("<i2"),
    "uint16": np.dtype("<u2"),
    "int32": np.dtype("<i4"),
}

_AXES_TOL = 1e-8


def _check_axes(axes: np.ndarray) -> np.ndarray:
    axes = np.array(axes, dtype=np.float64)
    if axes.shape != (3, 3):
        raise VolumeError(f"axes must be 3x3, got shape {axes.shape}")
    if np.abs(axes.T @ axes - np.eye(3)).max() > _AXES_TOL:
        raise VolumeError("axes must be orthonormal")
    if abs(float(np.linalg.det(axes)) - 1.0) > _AXES_TOL:
        raise VolumeError("axes must have determinant +1")
    return axes


@dataclass(frozen=True, eq=False)
class Volume:
    """3D scalar grid with physical geometry.

    data:    (nx, ny, nz) int32 array, data[i, j, k] is voxel (i, j, k)
    spacing: mm per voxel along each axis
    origin:  mm position of the centre of voxel (0, 0, 0)
    axes:    columns are the patient-frame unit directions of the voxel axes
             (x and y span a slice, z indexes the slice stack)
    """

    data: np.ndarray
    spacing: np.ndarray
    origin: np.ndarray
    axes: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise VolumeError(f"volume data must be 3D with all dims >= 1, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.integer):
            raise VolumeError(f"volume data must be integer valued, got dtype {data.dtype}")
        data = data.astype(np.int32, copy=True)
        spacing = np.array(self.spacing, dtype=np.float64).reshape(3)
        if np.any(spacing <= 0):
            raise VolumeError(f"spacing must be positive, got {spacing.tolist()}")
        origin = np.array(self.origin, dtype=np.float64).reshape(3)
        axes = _check_axes(self.axes)
        for arr in (data, spacing, origin, axes):
            arr.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "axes", axes)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def n_voxels(self) -> int:
        return int(self.data.size)

    def voxel_to_mm(self, indices: np.ndarray) -> np.ndarray:
        """Map fractional voxel indices (n, 3) to patient millimetres."""
        idx = np.asarray(indices, dtype=np.float64)
        return self.origin + (idx * self.spacing) @ self.axes.T

    def mm_to_voxel(self, points: np.ndarray) -> np.ndarray:
        """Map patient millimetres to fractional voxel indices."""
        pts = np.asarray(points, dtype=np.float64)
        return ((pts - self.origin) @ self.axes) / self.spacing


@dataclass(frozen=True, eq=False)
class PlaneSpec:
    """Sampling plane for an oblique reformat.

    origin_mm is the position of the first pixel, u and v the orthonormal
    in-plane directions, extent_mm the (width, height) covered along (u, v),
    resolution_px_per_mm the pixel density.
    """

    origin_mm: np.ndarray
    u: np.ndarray
    v: np.ndarray
    extent_mm: np.ndarray
    resolution_px_per_mm: float

    def __post_init__(self):
        origin = np.array(self.origin_mm, dtype=np.float64).reshape(3)
        u = np.array(self.u, dtype=np.float64).reshape(3)
        v = np.array(self.v, dtype=np.float64).reshape(3)
        extent = np.array(self.extent_mm, dtype=np.float64).reshape(2)
        if abs(np.linalg.norm(u) - 1.0) > 1e-9 or abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise VolumeError("plane directions u and v must be unit length")
        if abs(float(u @ v)) > 1e-9:
            raise VolumeError("plane directions u and v must be perpendicular")
        if np.any(extent <= 0):
            raise VolumeError("plane extent must be positive")
        if self.resolution_px_per_mm <= 0:
            raise VolumeError("plane resolution must be positive")
        for arr in (origin, u, v, extent):
            arr.setflags(write=False)
        object.__setattr__(self, "origin_mm", origin)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "extent_mm", extent)

    @property
    def shape(self) -> tuple[int, int]:
        """(rows, cols) of the sampled image."""
        w = max(1, int(round(self.extent_mm[0] * self.resolution_px_per_mm)))
        h = max(1, int(round(self.extent_mm[1] * self.resolution_px_per_mm)))
        return h, w

    def pixel_positions(self) -> np.ndarray:
        """(rows, cols, 3) mm position of each pixel."""
        h, w = self.shape
        step = 1.0 / self.resolution_px_per_mm
        cols = np.arange(w) * step
        rows = np.arange(h) * step
        return (
            self.origin_mm
            + cols[None, :, None] * self.u[None, None, :]
            + rows[:, None, None] * self.v[None, None, :]
        )

    @staticmethod
    def from_dict(d: dict) -> "PlaneSpec":
        try:
            return PlaneSpec(
                origin_mm=d["origin_mm"],
                u=d["u"],
                v=d["v"],
                extent_mm=d["extent_mm"],
                resolution_px_per_mm=float(d["resolution_px_per_mm"]),
            )
        except KeyError as e:
            raise VolumeError(f"plane spec is missing key {e}") from e


def _parse_header(path: Path) -> dict:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise VolumeError(f"{path}:{lineno}: expected 'key: value', got {line!r}")
        key, value = line.split(":", 1)
        entries[key.strip()] = value.strip()
    return entries


def load_volume(path) -> Volume:
    """Load a header+raw volume pair. Values are preserved exactly."""
    path = Path(path)
    if not path.is_file():
        raise VolumeError(f"volume header not found: {path}")
    hdr = _parse_header(path)
    for key in ("dims", "spacing_mm", "origin_mm", "axes", "dtype", "byte_order"):
        if key not in hdr:
            raise VolumeError(f"{path}: missing header key {key!r}")
    try:
        dims = tuple(int(v) for v in hdr["dims"].split())
        spacing = [float(v) for v in hdr["spacing_mm"].split()]
        origin = [float(v) for v in hdr["origin_mm"].split()]
        axes = np.array([float(v) for v in hdr["axes"].split()]).reshape(3, 3)
    except (ValueError, TypeError) as e:
        raise VolumeError(f"{path}: malformed header field: {e}") from e
    if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
        raise VolumeError(f"{path}: dims, spacing_mm and origin_mm must each hold 3 values")
    if hdr["byte_order"] != "little":
        raise VolumeError(f"{path}: unsupported byte_order {hdr['byte_order']!r}")
    if hdr["dtype"] not in _DTYPES:
        raise VolumeError(f"{path}: unsupported dtype {hdr['dtype']!r}")
    dtype = _DTYPES[hdr["dtype"]]
    raw_path = path.parent / hdr.get("data_file", path.stem + ".raw")
    if not raw_path.is_file():
        raise VolumeError(f"raw data file not found: {raw_path}")
    blob = raw_path.read_bytes()
    expected = dims[0] * dims[1] * dims[2] * dtype.itemsize
    if len(blob) != expected:
        raise VolumeError(
            f"{raw_path}: size mismatch, header implies {expected} bytes "
            f"({dims[0]}x{dims[1]}x{dims[2]} {hdr['dtype']}), file has {len(blob)}"
        )
    flat = np.frombuffer(blob, dtype=dtype)
    data = flat.reshape(dims, order="F").astype(np.int32)
    return Volume(data, spacing, origin, axes)


def write_volume(vol: Volume, header_path, dtype: str = "int32") -> Path:
    """Write a header+raw pair next to each other; returns the header path."""
    if dtype not in _DTYPES:
        raise VolumeError(f"unsupported dtype {dtype!r}")
    dt = _DTYPES[dtype]
    info = np.iinfo(dt)
    lo, hi = int(vol.data.min()), int(vol.data.max())
    if lo < info.min or hi > info.max:
        raise VolumeError(f"values [{lo}, {hi}] do not fit dtype {dtype}")
    header_path = Path(header_path)
    raw_name = header_path.stem + ".raw"
    lines = [
        "dims: " + " ".join(str(d) for d in vol.dims),
        "spacing_mm: " + " ".join(repr(v) for v in vol.spacing),
        "origin_mm: " + " ".join(repr(v) for v in vol.origin),
        "axes: " + " ".join(repr(v) for v in vol.axes.ravel()),
        f"dtype: {dtype}",
        "byte_order: little",
        f"data_file: {raw_name}",
    ]
    header_path.parent.mkdir(parents=True, exist_ok=True)
    header_path.write_text("\n".join(lines) + "\n")
    (header_path.parent / raw_name).write_bytes(
        vol.data.astype(dt).ravel(order="F").tobytes()
    )
    return header_path


def pad_slices(vol: Volume, width: int = 1) -> Volume:
    """Grow each slice by `width` voxels on all four in-plane sides.

    New voxels take the global minimum value of the input so they are always
    classified as background. The origin shifts so that pre-existing voxels
    keep their physical positions.
    """
    if width < 1:
        raise VolumeError(f"pad width must be >= 1, got {width}")
    fill = int(vol.data.min())
    data = np.pad(vol.data, ((width, width), (width, width), (0, 0)), constant_values=fill)
    origin = vol.origin - vol.axes @ (vol.spacing * np.array([width, width, 0.0]))
    return Volume(data, vol.spacing, origin, vol.axes)


def subsample(vol: Volume, factor) -> Volume:
    """Keep every factor-th voxel per axis, starting at index 0.

    Spacing is multiplied by the factor; kept voxels keep their physical
    positions (plain decimation, no averaging).
    """
    f = tuple(int(v) for v in factor)
    if len(f) != 3 or min(f) < 1:
        raise VolumeError(f"subsample factors must be 3 positive integers, got {factor!r}")
    data = vol.data[:: f[0], :: f[1], :: f[2]].copy()
    spacing = vol.spacing * np.array(f, dtype=np.float64)
    return Volume(data, spacing, vol.origin, vol.axes)


def reformat_slice(vol: Volume, xform: RigidTransform, plane: PlaneSpec) -> np.ndarray:
    """Resample the transformed volume on an arbitrary plane.

    Each output pixel is the trilinear interpolation of the volume, placed in
    patient space by `xform`, at the pixel's mm position. Positions outside
    the voxel-centre hull produce the volume minimum (background fill).
    """
    pts = plane.pixel_positions()
    h, w = pts.shape[:2]
    local = (pts.reshape(-1, 3) - xform.t) @ xform.R  # inverse of p -> R p + t
    idx = vol.mm_to_voxel(local)
    dims = np.asarray(vol.dims, dtype=np.float64)
    inside = np.all((idx >= 0.0) & (idx <= dims - 1.0), axis=1)
    sampled = map_coordinates(
        vol.data.astype(np.float64), idx.T, order=1, mode="nearest"
    )
    fill = float(vol.data.min())
    return np.where(inside, sampled, fill).reshape(h, w)
