"""Surface-to-surface distance maps: directed distances, Hausdorff, colouring.

Distances are point-to-point over the vertex sets; for each point of one set
the exact nearest Euclidean distance to the other set is found with a kd-tree.
The Hausdorff distance is the larger of the two directed maxima. Note the
vertex-set formulation slightly over-estimates surface distance on coarse
meshes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ErrorMapError
from .mesh import KdTreeIndex, build_kdtree


@dataclass(frozen=True)
class DistanceSummary:
    mean: float
    median: float
    p95: float
    max: float

    @staticmethod
    def of(distances: np.ndarray) -> "DistanceSummary":
        return DistanceSummary(
            mean=float(distances.mean()),
            median=float(np.median(distances)),
            p95=float(np.percentile(distances, 95)),
            max=float(distances.max()),
        )

    def to_dict(self) -> dict:
        return {"mean": self.mean, "median": self.median, "p95": self.p95, "max": self.max}


@dataclass(eq=False)
class ErrorMap:
    """Per-vertex distances between two co-registered surfaces.

    distances_a holds, for every point of surface A, the distance to the
    nearest point of surface B; distances_b is the opposite direction.
    hausdorff is the max of the two directed maxima.
    """

    distances_a: np.ndarray
    distances_b: np.ndarray
    hausdorff: float
    summary_a: DistanceSummary
    summary_b: DistanceSummary

    def to_report(self) -> dict:
        return {
            "hausdorff_mm": self.hausdorff,
            "a_to_b": self.summary_a.to_dict(),
            "b_to_a": self.summary_b.to_dict(),
        }


def _as_points(points, side: str) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ErrorMapError(f"point set {side!r} is empty")
    return pts


def directed_distance(from_points, to_index: KdTreeIndex) -> tuple[np.ndarray, float]:
    """Exact nearest distance per source point, plus the directed maximum."""
    pts = _as_points(from_points, "from")
    dist, _ = to_index.query(pts)
    return dist, float(dist.max())


def hausdorff(x1, x2) -> ErrorMap:
    """Symmetric distance map between two point sets (surface vertex sets)."""
    a = _as_points(x1, "x1")
    b = _as_points(x2, "x2")
    d_ab, max_ab = directed_distance(a, build_kdtree(b))
    d_ba, max_ba = directed_distance(b, build_kdtree(a))
    return ErrorMap(
        distances_a=d_ab,
        distances_b=d_ba,
        hausdorff=max(max_ab, max_ba),
        summary_a=DistanceSummary.of(d_ab),
        summary_b=DistanceSummary.of(d_ba),
    )


def colorize(distances, saturation_mm: float = 5.0) -> np.ndarray:
    """Map distances to RGB: 0 mm is blue, >= saturation_mm is red.

    Straight blue-to-red interpolation in between (no green), rounded to
    uint8; the red channel is monotone in the distance.
    """
    if saturation_mm <= 0:
        raise ErrorMapError(f"saturation must be positive, got {saturation_mm}")
    d = np.asarray(distances, dtype=np.float64).reshape(-1)
    t = np.clip(d / float(saturation_mm), 0.0, 1.0)
    rgb = np.zeros((len(d), 3), dtype=np.uint8)
    rgb[:, 0] = np.rint(255.0 * t).astype(np.uint8)
    rgb[:, 2] = np.rint(255.0 * (1.0 - t)).astype(np.uint8)
    return rgb
