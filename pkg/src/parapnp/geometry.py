"""Pinhole camera primitives, ZXZ Euler angles and rigid point-set alignment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import BehindCameraError, DegenerateConfigurationError

# sin(beta) below this is treated as gimbal lock
_GIMBAL_EPS = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels, optionally with physical cell size and focal length (mm)."""

    fx: float
    fy: float
    u0: float
    v0: float
    cell_size: Optional[float] = None
    focal_mm: Optional[float] = None

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        for name in ("cell_size", "focal_mm"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive when given, got {value}")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.u0], [0.0, self.fy, self.v0], [0.0, 0.0, 1.0]])

    @classmethod
    def identity(cls) -> "CameraIntrinsics":
        return cls(1.0, 1.0, 0.0, 0.0)


# Intrinsics used for all synthetic experiments unless a protocol overrides them.
DEFAULT_INTRINSICS = CameraIntrinsics(fx=1301.473508, fy=1300.926193, u0=653.0, v0=508.0)


def _det3(A) -> float:
    # scalar triple product; np.linalg.det carries LU overhead for 3x3 inputs
    return float(
        A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
        - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
        + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0])
    )


@dataclass(frozen=True, eq=False)
class RigidPose:
    """World-to-camera transform: ``P_cam = rotation @ P_world + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose contains non-finite values")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9 or abs(_det3(R) - 1.0) > 1e-9:
            raise ValueError("rotation is not a proper orthonormal matrix")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls(np.eye(3), np.zeros(3))

    def transform(self, points) -> np.ndarray:
        """Map world points (n, 3) or (3,) into the camera frame."""
        P = np.asarray(points, dtype=float)
        return P @ self.rotation.T + self.translation

    def inverse(self) -> "RigidPose":
        Rt = self.rotation.T
        return RigidPose(Rt, -Rt @ self.translation)

    def compose(self, other: "RigidPose") -> "RigidPose":
        """Return ``self ∘ other`` (apply ``other`` first)."""
        return RigidPose(
            self.rotation @ other.rotation, self.rotation @ other.translation + self.translation
        )


class Correspondence(NamedTuple):
    world: np.ndarray
    pixel: np.ndarray


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Ordered 3D-2D pairs stored as ``world`` (n, 3) mm and ``pixels`` (n, 2) px."""

    world: np.ndarray
    pixels: np.ndarray

    def __post_init__(self):
        W = np.array(self.world, dtype=float).reshape(-1, 3)
        p = np.array(self.pixels, dtype=float).reshape(-1, 2)
        if len(W) != len(p):
            raise ValueError(f"{len(W)} world points but {len(p)} pixels")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(p))):
            raise ValueError("correspondences must have finite coordinates")
        if len(W) > 1:
            order = np.lexsort(W.T[::-1])
            same = np.all(W[order[1:]] == W[order[:-1]], axis=1)
            if same.any():
                k = int(np.argmax(same))
                i, j = sorted((int(order[k]), int(order[k + 1])))
                raise ValueError(f"world points {i} and {j} coincide")
        W.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "world", W)
        object.__setattr__(self, "pixels", p)

    @classmethod
    def from_pairs(cls, items: Sequence[Correspondence]) -> "CorrespondenceSet":
        return cls([c.world for c in items], [c.pixel for c in items])

    def __len__(self) -> int:
        return len(self.world)

    def __getitem__(self, i) -> Correspondence:
        return Correspondence(self.world[i], self.pixels[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def with_pixels(self, pixels) -> "CorrespondenceSet":
        return CorrespondenceSet(self.world, pixels)

    def subset(self, index) -> "CorrespondenceSet":
        return CorrespondenceSet(self.world[index], self.pixels[index])


def project(intr: CameraIntrinsics, pose: RigidPose, world) -> np.ndarray:
    """Project one world point (3,) or many (n, 3) to pixels.

    Raises BehindCameraError naming the first point with non-positive depth.
    """
    W = np.asarray(world, dtype=float)
    single = W.ndim == 1
    Pc = pose.transform(W.reshape(-1, 3))
    bad = np.flatnonzero(Pc[:, 2] <= 0)
    if bad.size:
        i = int(bad[0])
        raise BehindCameraError(
            f"point {i} at {W.reshape(-1, 3)[i].tolist()} has camera depth {Pc[i, 2]:.6g} <= 0", i
        )
    uv = project_camera_points(intr, Pc)
    return uv[0] if single else uv


def project_camera_points(intr: CameraIntrinsics, Pc: np.ndarray) -> np.ndarray:
    """Pinhole projection of camera-frame points without a depth check."""
    Pc = np.asarray(Pc, dtype=float).reshape(-1, 3)
    z = Pc[:, 2]
    return np.column_stack((intr.u0 + intr.fx * Pc[:, 0] / z, intr.v0 + intr.fy * Pc[:, 1] / z))


def normalize_pixel(intr: CameraIntrinsics, pixel) -> np.ndarray:
    """Map pixel coordinates (2,) or (n, 2) to unit-focal image coordinates."""
    p = np.asarray(pixel, dtype=float)
    return np.stack(((p[..., 0] - intr.u0) / intr.fx, (p[..., 1] - intr.v0) / intr.fy), axis=-1)


def rot_x(deg: float) -> np.ndarray:
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg: float) -> np.ndarray:
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(deg: float) -> np.ndarray:
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_zxz_to_rotation(alpha: float, beta: float, theta: float) -> np.ndarray:
    """Rotation about Z by ``alpha``, then the new X by ``beta``, then the new Z by ``theta``.

    Angles in degrees. Equivalent to ``rot_z(alpha) @ rot_x(beta) @ rot_z(theta)``,
    written out entrywise.
    """
    a, b, t = np.radians([alpha, beta, theta])
    ca, sa, cb, sb, ct, st = np.cos(a), np.sin(a), np.cos(b), np.sin(b), np.cos(t), np.sin(t)
    return np.array(
        [
            [ca * ct - sa * cb * st, -ca * st - sa * cb * ct, sa * sb],
            [sa * ct + ca * cb * st, -sa * st + ca * cb * ct, -ca * sb],
            [sb * st, sb * ct, cb],
        ]
    )


class EulerZXZ(NamedTuple):
    alpha: float
    beta: float
    theta: float
    degenerate: bool


def rotation_to_euler_zxz(R) -> EulerZXZ:
    """Inverse of :func:`euler_zxz_to_rotation`; angles in degrees, ``beta`` in [0, 180].

    At gimbal lock (beta of 0 or 180) only ``alpha ± theta`` is observable; the
    result then has ``theta = 0`` and ``degenerate=True``.
    """
    R = np.asarray(R, dtype=float)
    sb = np.hypot(R[2, 0], R[2, 1])
    beta = np.degrees(np.arctan2(sb, R[2, 2]))
    if sb < _GIMBAL_EPS:
        alpha = np.degrees(np.arctan2(R[1, 0], R[0, 0]))
        return EulerZXZ(float(alpha), 0.0 if R[2, 2] > 0 else 180.0, 0.0, True)
    alpha = np.degrees(np.arctan2(R[0, 2], -R[1, 2]))
    theta = np.degrees(np.arctan2(R[2, 0], R[2, 1]))
    return EulerZXZ(float(alpha), float(beta), float(theta), False)


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def nearest_rotation(A) -> np.ndarray:
    """Closest proper rotation to ``A`` in the Frobenius norm."""
    U, _, Vt = np.linalg.svd(np.asarray(A, dtype=float))
    if _det3(U @ Vt) < 0:
        U = U * (1.0, 1.0, -1.0)
    return U @ Vt


def _check_spread(points: np.ndarray, what: str, min_rank: int) -> None:
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s[0] == 0.0 or s[min_rank - 1] <= 1e-9 * s[0]:
        raise DegenerateConfigurationError(f"{what} points are degenerate (singular values {s})")


def absolute_orientation(world, camera) -> RigidPose:
    """Least-squares rigid transform mapping ``world`` onto ``camera`` (no scale).

    Centroid-subtracted cross-covariance, SVD, and a determinant correction so the
    result is always a proper rotation.
    """
    W = np.asarray(world, dtype=float).reshape(-1, 3)
    C = np.asarray(camera, dtype=float).reshape(-1, 3)
    if len(W) != len(C):
        raise ValueError(f"{len(W)} world points but {len(C)} camera points")
    if len(W) < 3:
        raise DegenerateConfigurationError(f"need at least 3 points, got {len(W)}")
    if not np.all(np.isfinite(C)):
        raise DegenerateConfigurationError("camera points are not finite")
    cw, cc = W.mean(axis=0), C.mean(axis=0)
    # rank(H) < 2 covers collinear world points as well as collapsed camera points
    H = (C - cc).T @ (W - cw)
    U, s, Vt = np.linalg.svd(H)
    if s[0] == 0.0 or s[1] <= 1e-12 * s[0]:
        raise DegenerateConfigurationError(f"point sets are degenerate (singular values {s})")
    if _det3(U @ Vt) < 0:
        U = U * (1.0, 1.0, -1.0)
    R = U @ Vt
    return RigidPose(R, cc - R @ cw)
