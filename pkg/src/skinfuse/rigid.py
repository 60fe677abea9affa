"""Rigid transforms in millimetre coordinates: rotation matrix plus translation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RegistrationError

ORTHONORMAL_TOL = 1e-9


def _check_rotation(R: np.ndarray) -> np.ndarray:
    R = np.array(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise RegistrationError(f"rotation must be 3x3, got shape {R.shape}")
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err > ORTHONORMAL_TOL:
        raise RegistrationError(f"rotation is not orthonormal: max |R'R - I| = {err:.3e}")
    det = float(np.linalg.det(R))
    if abs(det - 1.0) > ORTHONORMAL_TOL:
        raise RegistrationError(f"rotation determinant is {det!r}, expected +1")
    return R


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation R (orthonormal, det +1) and translation t, acting as p -> R p + t."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = _check_rotation(self.R)
        t = np.array(self.t, dtype=np.float64).reshape(3)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (n, 3) stack of points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.R.T + self.t

    def to_dict(self) -> dict:
        """Row-major 3x3 rotation and 3-vector translation, JSON friendly."""
        return {"R": [float(v) for v in self.R.ravel()], "t": [float(v) for v in self.t]}

    @staticmethod
    def from_dict(d: dict) -> "RigidTransform":
        R = np.asarray(d["R"], dtype=np.float64).reshape(3, 3)
        t = np.asarray(d["t"], dtype=np.float64).reshape(3)
        return RigidTransform(R, t)

    def __repr__(self):
        return f"RigidTransform(R={self.R.tolist()}, t={self.t.tolist()})"


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform applying b first, then a."""
    return RigidTransform(a.R @ b.R, a.R @ b.t + a.t)


def invert(a: RigidTransform) -> RigidTransform:
    return RigidTransform(a.R.T, -(a.R.T @ a.t))


def rotation_about_axis(axis, angle_deg: float) -> np.ndarray:
    """Rotation matrix for a right-handed rotation of angle_deg about axis."""
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    n = np.linalg.norm(a)
    if n == 0.0:
        raise ValueError("rotation axis must be nonzero")
    a = a / n
    theta = np.radians(angle_deg)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def rotation_angle_deg(R: np.ndarray) -> float:
    """Magnitude in degrees of the rotation represented by R."""
    c = (float(np.trace(R)) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def relative_rotation_deg(a: RigidTransform, b: RigidTransform) -> float:
    """Angle of the rotation separating two transforms."""
    return rotation_angle_deg(a.R.T @ b.R)
