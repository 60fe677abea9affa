"""Rigid co-registration of the segmented skin surface to a camera surface.

Pipeline: anterior cut of the segmented surface, principal-axes alignment with
a virtual-landmark translation, selection of a region of interest around the
landmark, then two trimmed ICP refinements. The second run keeps only the best
80% of the points used by the first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RegistrationError
from .errormap import ErrorMap, hausdorff
from .mesh import KdTreeIndex, TriangleMesh, build_kdtree, front_cut
from .rigid import RigidTransform, compose, invert  # re-exported  # noqa: F401

LANDMARK_SURFACE_TOL_MM = 2.0

# Fraction of the first-run source points carried into the refinement run.
STAGE2_SOURCE_FRACTION = 0.8

# Sign flips applied to the source principal axes; products are +1 so every
# candidate is a proper rotation.
_SIGN_COMBOS = ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))


@dataclass(frozen=True)
class Landmark:
    """A corresponding point pair: one on the segmented surface, one on the
    camera surface. Purely virtual, used only to initialise the alignment."""

    seg_mm: np.ndarray
    cam_mm: np.ndarray

    def __post_init__(self):
        for name in ("seg_mm", "cam_mm"):
            v = np.array(getattr(self, name), dtype=np.float64).reshape(3)
            v.setflags(write=False)
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class IcpParams:
    """Iteration budget, convergence threshold and per-stage trim fractions.

    trim_stage2 defaults to 0.8 of trim_stage1. The convergence threshold is
    the change in the trimmed RMS residual (mm) below which iteration stops.
    """

    max_iterations: int = 60
    convergence_mm: float = 0.01
    trim_stage1: float = 0.8
    trim_stage2: float | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise RegistrationError("max_iterations must be >= 1")
        if self.convergence_mm < 0 or not math.isfinite(self.convergence_mm):
            raise RegistrationError("convergence threshold must be finite and >= 0")
        for name, value in (("trim_stage1", self.trim_stage1), ("trim_stage2", self.resolved_trim_stage2())):
            if not 0.0 < value <= 1.0:
                raise RegistrationError(f"{name} must be in (0, 1], got {value}")

    def resolved_trim_stage2(self) -> float:
        return 0.8 * self.trim_stage1 if self.trim_stage2 is None else self.trim_stage2


def principal_axes(points) -> tuple[np.ndarray, np.ndarray]:
    """Centroid and principal directions of a point set.

    Returns (centroid, axes) with axes columns ordered by decreasing variance,
    signs made canonical (largest-magnitude component positive) and the basis
    flipped to determinant +1. Raises on fewer than 3 points or (near)
    collinear sets, where the second principal direction is undefined.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 3:
        raise RegistrationError(f"need at least 3 points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    centred = pts - centroid
    cov = centred.T @ centred / len(pts)
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = eigvals[::-1]
    axes = eigvecs[:, ::-1].copy()
    if eigvals[1] <= max(eigvals[0] * 1e-10, 1e-12):
        raise RegistrationError("degenerate geometry: points are (near) collinear")
    for col in range(3):
        lead = np.argmax(np.abs(axes[:, col]))
        if axes[lead, col] < 0:
            axes[:, col] *= -1.0
    if np.linalg.det(axes) < 0:
        axes[:, 2] *= -1.0
    return centroid, axes


def pca_candidate_rotations(source, target) -> list[np.ndarray]:
    """The four proper rotations mapping source principal axes onto target's.

    Principal directions have a sign ambiguity; with proper rotations only,
    four sign combinations remain and the caller picks one (pca_align does it
    with the landmark pair)."""
    _, a_src = principal_axes(source)
    _, a_tgt = principal_axes(target)
    return [a_tgt @ np.diag(s) @ a_src.T for s in _SIGN_COMBOS]


def pca_align(source, target, landmark: Landmark) -> RigidTransform:
    """Initial alignment from principal axes plus the landmark translation.

    Among the four sign-candidate rotations the one that brings the landmark
    pair closest together (after centroid alignment) wins; ties keep the first
    candidate. The translation then puts the transformed source landmark
    exactly onto the target landmark.
    """
    src = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    tgt = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    c_src, a_src = principal_axes(src)
    c_tgt, a_tgt = principal_axes(tgt)
    best_R = None
    best_d = np.inf
    for s in _SIGN_COMBOS:
        R = a_tgt @ np.diag(s) @ a_src.T
        moved = R @ landmark.seg_mm + (c_tgt - R @ c_src)
        d = float(np.linalg.norm(moved - landmark.cam_mm))
        if d < best_d:
            best_d = d
            best_R = R
    t = landmark.cam_mm - best_R @ landmark.seg_mm
    return RigidTransform(best_R, t)


def solve_rigid_pairs(source, target) -> RigidTransform:
    """Least-squares rigid transform mapping paired source points onto targets.

    Cross-covariance SVD with a determinant correction so reflections are
    never returned."""
    src = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    tgt = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if len(src) != len(tgt) or len(src) < 3:
        raise RegistrationError(f"need >= 3 point pairs, got {len(src)} and {len(tgt)}")
    c_src = src.mean(axis=0)
    c_tgt = tgt.mean(axis=0)
    H = (src - c_src).T @ (tgt - c_tgt)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.diag([1.0, 1.0, d if d != 0 else 1.0])
    R = Vt.T @ D @ U.T
    return RigidTransform(R, c_tgt - R @ c_src)


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    iterations: int
    residuals: tuple[float, ...]  # trimmed RMS per iteration, non-increasing

    @property
    def final_rms(self) -> float:
        return self.residuals[-1]


def icp_trimmed(source, target, init: RigidTransform | None = None,
                params: IcpParams | None = None, trim: float = 1.0) -> IcpResult:
    """Trimmed point-to-point ICP.

    Per iteration: nearest target point per transformed source point, keep the
    `trim` fraction with the smallest distances (ties by lowest source index),
    solve the rigid alignment on the kept pairs against the original source
    coordinates. Stops when the trimmed RMS residual improves by less than the
    convergence threshold or after max_iterations. The residual sequence is
    non-increasing.
    """
    params = params or IcpParams()
    if not 0.0 < trim <= 1.0:
        raise RegistrationError(f"trim fraction must be in (0, 1], got {trim}")
    src = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    index = target if isinstance(target, KdTreeIndex) else build_kdtree(target)
    n = len(src)
    k = int(round(trim * n))
    if k < 3:
        raise RegistrationError(
            f"insufficient correspondences: trim {trim} of {n} source points keeps {k} < 3"
        )
    T = init or RigidTransform.identity()
    residuals: list[float] = []
    prev_rms = np.inf
    for _ in range(params.max_iterations):
        dist, idx = index.query(T.apply(src))
        kept = np.argsort(dist, kind="stable")[:k]
        rms = float(np.sqrt(np.mean(dist[kept] ** 2)))
        residuals.append(rms)
        T = solve_rigid_pairs(src[kept], index.points[idx[kept]])
        if prev_rms - rms < params.convergence_mm:
            break
        prev_rms = rms
    return IcpResult(transform=T, iterations=len(residuals), residuals=tuple(residuals))


@dataclass(frozen=True)
class StageReport:
    name: str
    points: int
    iterations: int | None = None
    final_rms: float | None = None

    def to_dict(self) -> dict:
        d: dict = {"name": self.name, "points": self.points}
        if self.iterations is not None:
            d["iterations"] = self.iterations
        if self.final_rms is not None:
            d["final_rms_mm"] = self.final_rms
        return d


@dataclass(eq=False)
class CoregResult:
    """Transform from segmented-surface space to camera-surface space, plus
    the error map of the final pose and per-stage diagnostics."""

    transform: RigidTransform
    error_map: ErrorMap
    stages: tuple[StageReport, ...]
    front_mesh: TriangleMesh
    roi_index: np.ndarray


def _check_landmark(landmark: Landmark, seg_tree: KdTreeIndex, cam_tree: KdTreeIndex) -> None:
    _, d_seg = seg_tree.nearest(landmark.seg_mm)
    _, d_cam = cam_tree.nearest(landmark.cam_mm)
    if d_seg > LANDMARK_SURFACE_TOL_MM or d_cam > LANDMARK_SURFACE_TOL_MM:
        raise RegistrationError(
            "stage 'landmark': landmark points must lie within "
            f"{LANDMARK_SURFACE_TOL_MM} mm of their surfaces "
            f"(got {d_seg:.2f} mm to segmented, {d_cam:.2f} mm to camera)"
        )


def coregister(seg_mesh: TriangleMesh, cam_mesh: TriangleMesh, landmark: Landmark,
               params: IcpParams | None = None, *,
               anterior_axis=(0.0, 1.0, 0.0), roi_mm: float = 150.0,
               stage2_fraction: float = STAGE2_SOURCE_FRACTION) -> CoregResult:
    """Full co-registration of a segmented skin mesh to a camera surface.

    anterior_axis selects the front of the segmented body (defaults to the
    +y patient direction); roi_mm is the radius around the segmented-surface
    landmark whose points take part in the ICP runs. The returned error map
    compares the transformed anterior surface with the camera mesh.
    """
    params = params or IcpParams()
    if seg_mesh.is_empty:
        raise RegistrationError("stage 'input': segmented mesh is empty")
    if cam_mesh.is_empty:
        raise RegistrationError("stage 'input': camera mesh is empty")
    if not 0.0 < stage2_fraction <= 1.0:
        raise RegistrationError(f"stage2_fraction must be in (0, 1], got {stage2_fraction}")
    cam_tree = build_kdtree(cam_mesh.vertices)
    _check_landmark(landmark, build_kdtree(seg_mesh.vertices), cam_tree)

    front = front_cut(seg_mesh, anterior_axis)
    if front.is_empty:
        raise RegistrationError("stage 'front_cut': no vertex faces the anterior axis")

    try:
        init = pca_align(front.vertices, cam_mesh.vertices, landmark)
    except RegistrationError as e:
        raise RegistrationError(f"stage 'pca_align': {e}") from e

    roi_index = np.flatnonzero(
        np.linalg.norm(front.vertices - landmark.seg_mm, axis=1) <= roi_mm
    )
    if len(roi_index) < 3:
        raise RegistrationError(
            f"stage 'roi': fewer than 3 anterior vertices within {roi_mm} mm of the landmark"
        )
    src1 = front.vertices[roi_index]

    try:
        run1 = icp_trimmed(src1, cam_tree, init=init, params=params, trim=params.trim_stage1)
    except RegistrationError as e:
        raise RegistrationError(f"stage 'icp_stage1': {e}") from e

    # Fig-3 style tuning: only the best stage2_fraction of the first run's
    # source points, ranked by their final residuals, enter the refinement.
    dist1, _ = cam_tree.query(run1.transform.apply(src1))
    k2 = int(round(stage2_fraction * len(src1)))
    if k2 < 3:
        raise RegistrationError("stage 'icp_stage2': fewer than 3 points after tuning")
    keep2 = np.sort(np.argsort(dist1, kind="stable")[:k2])
    src2 = src1[keep2]

    try:
        run2 = icp_trimmed(src2, cam_tree, init=run1.transform, params=params,
                           trim=params.resolved_trim_stage2())
    except RegistrationError as e:
        raise RegistrationError(f"stage 'icp_stage2': {e}") from e

    final = run2.transform
    error_map = hausdorff(final.apply(front.vertices), cam_mesh.vertices)
    stages = (
        StageReport("front_cut", points=front.n_vertices),
        StageReport("pca_align", points=front.n_vertices),
        StageReport("icp_stage1", points=len(src1), iterations=run1.iterations,
                    final_rms=run1.final_rms),
        StageReport("icp_stage2", points=len(src2), iterations=run2.iterations,
                    final_rms=run2.final_rms),
    )
    return CoregResult(transform=final, error_map=error_map, stages=stages,
                       front_mesh=front, roi_index=roi_index)
