"""Triangle meshes, vertex normals, the anterior cut, and exact nearest neighbours."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import MeshError

# Worker cap for batch nearest-neighbour queries; results are identical for
# any value. Set via the CLI --threads flag.
QUERY_WORKERS = 1


@dataclass(eq=False)
class TriangleMesh:
    """Indexed triangle surface in millimetres.

    vertices:  (n, 3) float64
    triangles: (m, 3) int32 vertex indices
    normals:   (n, 3) unit per-vertex normals, zero rows for isolated vertices,
               or None when not yet computed
    """

    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int32).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError(f"triangle indices out of range for {len(v)} vertices")
        self.vertices = v
        self.triangles = t
        if self.normals is not None:
            n = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(n) != len(v):
                raise MeshError("normals must align with vertices")
            self.normals = n

    @staticmethod
    def empty() -> "TriangleMesh":
        return TriangleMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int32))

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) == 0

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def transformed(self, xform) -> "TriangleMesh":
        """Mesh with vertices (and normals) mapped through a rigid transform."""
        normals = None if self.normals is None else self.normals @ xform.R.T
        return TriangleMesh(xform.apply(self.vertices), self.triangles.copy(), normals)


def remove_degenerate_triangles(mesh: TriangleMesh, eps: float = 1e-12) -> TriangleMesh:
    """Drop triangles whose area is (numerically) zero."""
    if mesh.n_triangles == 0:
        return mesh
    v = mesh.vertices
    t = mesh.triangles
    cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    keep = np.linalg.norm(cross, axis=1) > eps
    return TriangleMesh(v, t[keep], mesh.normals)


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted average of incident face normals, normalised per vertex.

    The cross product of two triangle edges weights each face by twice its
    area, so summing raw cross products realises the area weighting. Vertices
    with no incident (non-degenerate) face get a zero row.
    """
    if mesh.is_empty:
        return np.empty((0, 3))
    acc = np.zeros_like(mesh.vertices)
    t = mesh.triangles
    if t.size:
        v = mesh.vertices
        face = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        for corner in range(3):
            np.add.at(acc, t[:, corner], face)
    norms = np.linalg.norm(acc, axis=1)
    out = np.zeros_like(acc)
    nz = norms > 0
    out[nz] = acc[nz] / norms[nz, None]
    return out


def front_cut(mesh: TriangleMesh, anterior_axis) -> TriangleMesh:
    """Keep the front-facing part of a closed body surface.

    A vertex survives when the angle between its normal and the anterior axis
    is strictly below 90 degrees (dot product > 0); vertices at exactly 90
    degrees and vertices with undefined (zero) normals are dropped. Triangles
    survive only when all three corners do. Surviving vertices keep their
    original normals, which makes the cut idempotent.
    """
    axis = np.asarray(anterior_axis, dtype=np.float64).reshape(3)
    n = np.linalg.norm(axis)
    if n == 0:
        raise MeshError("anterior axis must be nonzero")
    axis = axis / n
    normals = mesh.normals if mesh.normals is not None else vertex_normals(mesh)
    if mesh.is_empty:
        return TriangleMesh.empty()
    keep = (normals @ axis) > 0.0
    if not keep.any():
        return TriangleMesh.empty()
    remap = np.full(mesh.n_vertices, -1, dtype=np.int32)
    remap[keep] = np.arange(int(keep.sum()), dtype=np.int32)
    tri_keep = keep[mesh.triangles].all(axis=1) if mesh.triangles.size else np.zeros(0, bool)
    return TriangleMesh(
        mesh.vertices[keep],
        remap[mesh.triangles[tri_keep]],
        normals[keep],
    )


class KdTreeIndex:
    """Exact nearest-neighbour index over a fixed point set.

    Immutable after build; concurrent queries are safe. Distances returned by
    `query` and `nearest` are recomputed as sqrt(sum of squared coordinate
    differences) in float64, so they agree bit for bit with a brute-force scan
    over the same points.
    """

    def __init__(self, points):
        pts = np.array(points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            raise MeshError("cannot build a nearest-neighbour index over an empty point set")
        pts.setflags(write=False)
        self.points = pts
        self._tree = cKDTree(pts)

    def __len__(self) -> int:
        return len(self.points)

    def query(self, points, workers: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Batch exact nearest neighbours: (distances, indices)."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        _, idx = self._tree.query(pts, workers=workers if workers else QUERY_WORKERS)
        dist = np.sqrt(((pts - self.points[idx]) ** 2).sum(axis=1))
        return dist, idx

    def nearest(self, q) -> tuple[int, float]:
        """Single-point exact nearest neighbour, ties broken by lowest id."""
        q = np.asarray(q, dtype=np.float64).reshape(3)
        d, i = self._tree.query(q)
        ties = self._tree.query_ball_point(q, r=float(d))
        if ties:
            i = min(ties)
        dist = float(np.sqrt(((q - self.points[i]) ** 2).sum()))
        return int(i), dist


def build_kdtree(points) -> KdTreeIndex:
    return KdTreeIndex(points)


def nearest(index: KdTreeIndex, q) -> tuple[int, float]:
    """(point id, distance mm) of the exact nearest indexed point to q."""
    return index.nearest(q)
