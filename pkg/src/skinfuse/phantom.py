"""Synthetic test data: analytic body volumes, simulated partial camera
surfaces with view-dependent noise, and known-transform scenarios.

The body is an ellipsoid, by default with two spherical surface bumps that
break its symmetry (symmetric bodies are a known failure mode for surface
registration, so both variants are available). Camera surfaces are vertex
subsets of a posed skin mesh: only vertices facing the viewpoint and inside
the field of view survive, each perturbed along its view ray by seeded
Gaussian noise whose magnitude grows with distance and with deviation from
the 45-degree incidence the depth sensor is rated for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PhantomError
from .mesh import TriangleMesh, vertex_normals
from .registration import Landmark
from .rigid import RigidTransform
from .segmentation import extract_skin_mesh, segment_volume
from .volume import Volume

IDEAL_TILT_DEG = 45.0


@dataclass(frozen=True)
class Bump:
    """Spherical bulge; place the centre on the ellipsoid surface for a bump
    of height roughly equal to the radius."""

    center_mm: tuple[float, float, float]
    radius_mm: float


def _default_bumps(center, semi_axes) -> tuple[Bump, ...]:
    bumps = []
    for direction, radius in (((0.35, 0.25, 0.90), 22.0), ((-0.55, 0.20, 0.81), 16.0)):
        u = np.asarray(direction, dtype=np.float64)
        u = u / np.linalg.norm(u)
        scale = 1.0 / math.sqrt(float(np.sum((u / semi_axes) ** 2)))
        p = np.asarray(center, dtype=np.float64) + scale * u
        bumps.append(Bump(tuple(float(v) for v in p), radius))
    return tuple(bumps)


@dataclass(frozen=True)
class PhantomSpec:
    """Analytic body in a voxel grid.

    bumps=None picks two default surface bumps (asymmetric body); pass an
    empty tuple for the plain symmetric ellipsoid. origin_mm=None centres the
    grid on center_mm.
    """

    dims: tuple[int, int, int] = (112, 80, 64)
    spacing_mm: tuple[float, float, float] = (2.5, 2.5, 2.5)
    center_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    semi_axes_mm: tuple[float, float, float] = (100.0, 60.0, 40.0)
    bumps: tuple[Bump, ...] | None = None
    interior_value: int = 100
    exterior_value: int = 0
    origin_mm: tuple[float, float, float] | None = None

    def __post_init__(self):
        if self.interior_value <= self.exterior_value:
            raise PhantomError("interior value must exceed exterior value")
        if min(self.dims) < 1 or min(self.spacing_mm) <= 0:
            raise PhantomError("dims must be >= 1 and spacing positive")
        semi = np.asarray(self.semi_axes_mm, dtype=np.float64)
        if np.any(semi < 0):
            raise PhantomError("semi-axes must be >= 0")
        if self.bumps is None and np.all(semi > 0):
            object.__setattr__(self, "bumps", _default_bumps(self.center_mm, semi))
        elif self.bumps is None:
            object.__setattr__(self, "bumps", ())
        half = (np.asarray(self.dims) - 1) * np.asarray(self.spacing_mm) / 2.0
        if np.any(semi > half):
            raise PhantomError(
                f"semi-axes {semi.tolist()} do not fit the volume half-extent {half.tolist()}"
            )

    @property
    def iso(self) -> float:
        """Threshold separating exterior from body."""
        return (self.interior_value + self.exterior_value) / 2.0

    def resolved_origin(self) -> np.ndarray:
        if self.origin_mm is not None:
            return np.asarray(self.origin_mm, dtype=np.float64)
        half = (np.asarray(self.dims) - 1) * np.asarray(self.spacing_mm) / 2.0
        return np.asarray(self.center_mm, dtype=np.float64) - half

    @staticmethod
    def from_dict(d: dict) -> "PhantomSpec":
        kwargs = dict(d)
        if "bumps" in kwargs and kwargs["bumps"] is not None:
            kwargs["bumps"] = tuple(
                Bump(tuple(b["center_mm"]), float(b["radius_mm"])) for b in kwargs["bumps"]
            )
        for key in ("dims", "spacing_mm", "center_mm", "semi_axes_mm", "origin_mm"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(kwargs[key])
        return PhantomSpec(**kwargs)


def make_phantom(spec: PhantomSpec) -> Volume:
    """Voxelise the body: interior value inside the implicit shape, exterior
    elsewhere. Voxel centres are tested."""
    origin = spec.resolved_origin()
    spacing = np.asarray(spec.spacing_mm, dtype=np.float64)
    center = np.asarray(spec.center_mm, dtype=np.float64)
    semi = np.asarray(spec.semi_axes_mm, dtype=np.float64)
    grids = [origin[a] + spacing[a] * np.arange(spec.dims[a]) for a in range(3)]
    X, Y, Z = np.meshgrid(*grids, indexing="ij")
    inside = np.zeros(spec.dims, dtype=bool)
    if np.all(semi > 0):
        inside = (
            ((X - center[0]) / semi[0]) ** 2
            + ((Y - center[1]) / semi[1]) ** 2
            + ((Z - center[2]) / semi[2]) ** 2
        ) <= 1.0
    for bump in spec.bumps:
        c = np.asarray(bump.center_mm, dtype=np.float64)
        inside |= ((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2) <= bump.radius_mm ** 2
    data = np.where(inside, np.int32(spec.interior_value), np.int32(spec.exterior_value))
    return Volume(data, spacing, origin)


def skin_surface(spec: PhantomSpec, pad_width: int = 1) -> tuple[Volume, TriangleMesh]:
    """Phantom volume plus its segmented skin mesh (the scenario building
    blocks, exposed so repeated scenarios can reuse them)."""
    vol = make_phantom(spec)
    labels = segment_volume(vol, spec.iso, pad_width=pad_width)
    mesh = extract_skin_mesh(labels, vol.spacing, vol.origin, vol.axes)
    if mesh.is_empty:
        raise PhantomError("phantom produced an empty skin surface")
    return vol, mesh


@dataclass(frozen=True)
class CameraSimSpec:
    """Simulated depth-camera acquisition.

    Vertices visible from viewpoint_mm (normal facing the viewer, inside the
    field-of-view cone around view_dir) are kept and perturbed along their
    view rays by N(0, sigma) with

        sigma = noise_sigma_mm
                * (distance / noise_ref_mm       when noise_ref_mm is set)
                * (1 + tilt_noise_gain * |tilt_deg - 45| / 45)

    then a `dropout` fraction of them is discarded at random. All randomness
    comes from `seed`.
    """

    viewpoint_mm: tuple[float, float, float]
    view_dir: tuple[float, float, float]
    fov_deg: float = 70.0
    tilt_deg: float = IDEAL_TILT_DEG
    noise_sigma_mm: float = 0.0
    noise_ref_mm: float | None = None
    tilt_noise_gain: float = 1.0
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma_mm < 0:
            raise PhantomError("noise sigma must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise PhantomError("dropout must be in [0, 1)")
        if not 0.0 < self.fov_deg <= 360.0:
            raise PhantomError("field of view must be in (0, 360] degrees")
        if self.noise_ref_mm is not None and self.noise_ref_mm <= 0:
            raise PhantomError("noise reference distance must be positive")

    def sigma_at(self, distance_mm: np.ndarray) -> np.ndarray:
        sigma = np.full_like(np.asarray(distance_mm, dtype=np.float64), self.noise_sigma_mm)
        if self.noise_ref_mm is not None:
            sigma = sigma * (np.asarray(distance_mm, dtype=np.float64) / self.noise_ref_mm)
        tilt_penalty = 1.0 + self.tilt_noise_gain * abs(self.tilt_deg - IDEAL_TILT_DEG) / IDEAL_TILT_DEG
        return sigma * tilt_penalty

    @staticmethod
    def from_dict(d: dict) -> "CameraSimSpec":
        kwargs = dict(d)
        for key in ("viewpoint_mm", "view_dir"):
            kwargs[key] = tuple(kwargs[key])
        return CameraSimSpec(**kwargs)


def simulate_camera(mesh: TriangleMesh, spec: CameraSimSpec) -> TriangleMesh:
    """Partial, noisy view of a mesh as a depth camera would capture it."""
    if mesh.is_empty:
        raise PhantomError("cannot image an empty mesh")
    viewpoint = np.asarray(spec.viewpoint_mm, dtype=np.float64)
    view_dir = np.asarray(spec.view_dir, dtype=np.float64)
    n = np.linalg.norm(view_dir)
    if n == 0:
        raise PhantomError("view direction must be nonzero")
    view_dir = view_dir / n
    normals = mesh.normals if mesh.normals is not None else vertex_normals(mesh)
    to_viewer = viewpoint - mesh.vertices
    dist = np.linalg.norm(to_viewer, axis=1)
    dist = np.where(dist == 0, 1e-12, dist)
    facing = np.einsum("ij,ij->i", normals, to_viewer) > 0.0
    cos_fov = math.cos(math.radians(spec.fov_deg / 2.0))
    in_fov = (-to_viewer / dist[:, None]) @ view_dir >= cos_fov
    keep = facing & in_fov
    if not keep.any():
        raise PhantomError("no vertex is visible from the camera viewpoint")

    rng = np.random.default_rng(spec.seed)
    kept_idx = np.flatnonzero(keep)
    rays = -to_viewer[kept_idx] / dist[kept_idx, None]  # viewpoint -> vertex
    sigma = spec.sigma_at(dist[kept_idx])
    verts = mesh.vertices[kept_idx] + rays * (rng.standard_normal(len(kept_idx)) * sigma)[:, None]
    if spec.dropout > 0.0:
        survive = rng.random(len(kept_idx)) >= spec.dropout
        if not survive.any():
            raise PhantomError("dropout removed every visible vertex")
        kept_idx = kept_idx[survive]
        verts = verts[survive]

    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[kept_idx] = np.arange(len(kept_idx))
    keep_mask = remap >= 0
    tri_keep = keep_mask[mesh.triangles].all(axis=1) if mesh.triangles.size else np.zeros(0, bool)
    out = TriangleMesh(verts, remap[mesh.triangles[tri_keep]].astype(np.int32))
    out.normals = vertex_normals(out)
    return out


@dataclass(eq=False)
class ScenarioData:
    """Everything a registration experiment needs.

    The ground-truth transform is returned only for scoring; the registration
    inputs are the volume (or its skin mesh), the camera mesh and the
    landmark pair.
    """

    volume: Volume
    iso: float
    seg_mesh: TriangleMesh
    cam_mesh: TriangleMesh
    landmark: Landmark
    truth: RigidTransform
    anterior_axis: tuple[float, float, float]


# Direction used to pick the scenario landmark: upper anterior, off-centre so
# body symmetries cannot swap it.
_LANDMARK_DIR = (0.25, 0.15, 0.95)


def _pick_landmark(seg_mesh: TriangleMesh, cam_mesh: TriangleMesh,
                   truth: RigidTransform) -> Landmark:
    d = np.asarray(_LANDMARK_DIR, dtype=np.float64)
    d /= np.linalg.norm(d)
    seg_point = seg_mesh.vertices[int(np.argmax(seg_mesh.vertices @ d))]
    # The operator marks the matching spot on the camera surface; the nearest
    # camera vertex stands in for that imperfect manual pick.
    target = truth.apply(seg_point)
    cam_point = cam_mesh.vertices[
        int(np.argmin(np.linalg.norm(cam_mesh.vertices - target, axis=1)))
    ]
    return Landmark(seg_point, cam_point)


def scenario(spec: PhantomSpec, cam: CameraSimSpec, ground_truth: RigidTransform,
             *, surface: tuple[Volume, TriangleMesh] | None = None,
             anterior_axis=(0.0, 0.0, 1.0)) -> ScenarioData:
    """Build a full experiment: phantom volume, camera surface of the posed
    skin, landmark pair and the scoring transform.

    Pass `surface` (from skin_surface) to reuse a segmented phantom across
    scenarios.
    """
    vol, seg_mesh = surface if surface is not None else skin_surface(spec)
    posed = seg_mesh.transformed(ground_truth)
    cam_mesh = simulate_camera(posed, cam)
    landmark = _pick_landmark(seg_mesh, cam_mesh, ground_truth)
    return ScenarioData(
        volume=vol,
        iso=spec.iso,
        seg_mesh=seg_mesh,
        cam_mesh=cam_mesh,
        landmark=landmark,
        truth=ground_truth,
        anterior_axis=tuple(float(v) for v in anterior_axis),
    )


def aim_camera(spec: PhantomSpec, seg_mesh: TriangleMesh, truth: RigidTransform,
               distance_mm: float, azimuth_deg: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Viewpoint and view direction for a camera at `distance_mm` from the
    posed body surface, swung `azimuth_deg` away from the anterior (+z) axis
    toward +x (0 = frontal, 90 = fully lateral)."""
    az = math.radians(azimuth_deg)
    direction = np.array([math.sin(az), 0.0, math.cos(az)])
    support = float(np.max(seg_mesh.vertices @ direction))  # surface extent along the view axis
    stand_off = support + distance_mm
    viewpoint = truth.apply(np.asarray(spec.center_mm, dtype=np.float64) + stand_off * direction)
    view_dir = truth.R @ (-direction)
    return viewpoint, view_dir


def make_scenario(spec: PhantomSpec | None = None, truth: RigidTransform | None = None,
                  *, distance_mm: float = 250.0, azimuth_deg: float = 0.0,
                  tilt_deg: float = IDEAL_TILT_DEG, fov_deg: float = 70.0,
                  noise_sigma_mm: float = 0.0, noise_ref_mm: float | None = None,
                  dropout: float = 0.0, seed: int = 0,
                  surface: tuple[Volume, TriangleMesh] | None = None) -> ScenarioData:
    """Scenario with the camera placed by distance and azimuth around the
    posed phantom (anterior axis +z)."""
    spec = spec or PhantomSpec()
    truth = truth or RigidTransform.identity()
    if surface is None:
        surface = skin_surface(spec)
    _, seg_mesh = surface
    viewpoint, view_dir = aim_camera(spec, seg_mesh, truth, distance_mm, azimuth_deg)
    cam = CameraSimSpec(
        viewpoint_mm=tuple(float(v) for v in viewpoint),
        view_dir=tuple(float(v) for v in view_dir),
        fov_deg=fov_deg,
        tilt_deg=tilt_deg,
        noise_sigma_mm=noise_sigma_mm,
        noise_ref_mm=noise_ref_mm,
        dropout=dropout,
        seed=seed,
    )
    return scenario(spec, cam, truth, surface=surface, anterior_axis=(0.0, 0.0, 1.0))
