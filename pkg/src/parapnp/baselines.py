"""Reference solvers: known-intrinsics DLT and a weak-perspective fit."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .epnp import SolveReport, reprojection_rms
from .errors import DegenerateConfigurationError, InsufficientPointsError
from .geometry import (
    CameraIntrinsics,
    CorrespondenceSet,
    RigidPose,
    _check_spread,
    nearest_rotation,
    normalize_pixel,
)
from .paraperspective import affine_fit


def solve_dlt(corr: CorrespondenceSet, intr: CameraIntrinsics) -> SolveReport:
    """Linear estimate of ``[R | t]`` from normalized image coordinates.

    World points are centred and scaled before the homogeneous solve; the
    result is rescaled so the rows of R have unit geometric-mean norm, signed
    for positive mean depth, projected onto SO(3), and t is re-solved with R fixed.
    """
    n = len(corr)
    if n < 6:
        raise InsufficientPointsError(f"DLT needs at least 6 correspondences, got {n}")
    W = corr.world
    _check_spread(W, "world", 3)
    xn = normalize_pixel(intr, corr.pixels)

    c = W.mean(axis=0)
    s = np.sqrt(np.mean(np.sum((W - c) ** 2, axis=1)))
    Xh = np.column_stack(((W - c) / s, np.ones(n)))
    A = np.zeros((2 * n, 12))
    A[0::2, 0:4] = Xh
    A[0::2, 8:12] = -xn[:, :1] * Xh
    A[1::2, 4:8] = Xh
    A[1::2, 8:12] = -xn[:, 1:] * Xh
    _, sv, Vt = np.linalg.svd(A, full_matrices=False)
    if sv[-2] <= 1e-12 * sv[0]:
        raise DegenerateConfigurationError("DLT system has a multi-dimensional null space")
    P = Vt[-1].reshape(3, 4)
    # undo the world normalization: X' = (X - c) / s
    T = np.zeros((4, 4))
    T[:3, :3] = np.eye(3) / s
    T[:3, 3] = -c / s
    T[3, 3] = 1.0
    P = P @ T

    scale = np.cbrt(np.prod(np.linalg.norm(P[:, :3], axis=1)))
    if scale == 0.0:
        raise DegenerateConfigurationError("DLT rotation block vanished")
    P = P / scale
    if np.mean(W @ P[2, :3] + P[2, 3]) < 0:
        P = -P
    R = nearest_rotation(P[:, :3])

    # t from x_i (r3.X + tz) = r1.X + tx, y_i (r3.X + tz) = r2.X + ty
    RW = W @ R.T
    B = np.zeros((2 * n, 3))
    B[0::2, 0] = 1.0
    B[0::2, 2] = -xn[:, 0]
    B[1::2, 1] = 1.0
    B[1::2, 2] = -xn[:, 1]
    rhs = np.empty(2 * n)
    rhs[0::2] = xn[:, 0] * RW[:, 2] - RW[:, 0]
    rhs[1::2] = xn[:, 1] * RW[:, 2] - RW[:, 1]
    t = np.linalg.lstsq(B, rhs, rcond=None)[0]

    pose = RigidPose(R, t)
    return SolveReport(pose, reprojection_rms(intr, pose, corr), 0, "dlt", False)


def solve_weak_perspective(
    corr: CorrespondenceSet, intr: CameraIntrinsics, origin_index: Optional[int] = None
) -> SolveReport:
    """Scaled-orthographic pose: ``x_i - x0 = i . (P_i - P0) / tz``, no refinement."""
    ref, a, b, x0, y0 = affine_fit(corr, intr, origin_index)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    tz = 2.0 / (na + nb)
    i, j = a / na, b / nb
    R = nearest_rotation(np.vstack([i, j, np.cross(i, j)]))
    pose = RigidPose(R, np.array([x0 * tz, y0 * tz, tz]) - R @ ref)
    return SolveReport(pose, reprojection_rms(intr, pose, corr), 0, "weak_perspective", False)
