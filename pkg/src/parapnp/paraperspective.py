"""Paraperspective pose initialization and the parallel-perspective solvers.

Under paraperspective projection about a reference point ``P0`` whose
normalized image position is ``(x0, y0)`` and whose camera depth is ``tz``::

    x_i - x0 = Ip . (P_i - P0),    Ip = (i - x0 k) / tz
    y_i - y0 = Jp . (P_i - P0),    Jp = (j - y0 k) / tz

where ``i, j, k`` are the rows of the rotation. ``Ip`` and ``Jp`` come from a
linear least-squares fit; the pose follows in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .epnp import ControlFrame, SolveReport, make_frame, refine_and_recover, reprojection_rms
from .errors import DegenerateConfigurationError, InsufficientPointsError
from .geometry import (
    CameraIntrinsics,
    CorrespondenceSet,
    RigidPose,
    _check_spread,
    nearest_rotation,
    normalize_pixel,
    skew,
)


@dataclass(frozen=True, eq=False)
class ParaperspectiveFit:
    Ip: np.ndarray
    Jp: np.ndarray
    origin_norm: np.ndarray  # (x0, y0)
    tz: float
    pose: RigidPose
    reference_world: np.ndarray
    i: np.ndarray
    j: np.ndarray
    k: np.ndarray


def default_origin_index(world) -> Optional[int]:
    """Index of the correspondence at the world origin, or None if there is none."""
    W = np.asarray(world, dtype=float)
    hits = np.flatnonzero(np.all(W == 0.0, axis=1))
    return int(hits[0]) if hits.size else None


def affine_fit(corr: CorrespondenceSet, intr: CameraIntrinsics, origin_index=None):
    """Least-squares fit of ``x_i - x0 = Ip . (P_i - P0)`` (and likewise for y).

    With ``origin_index`` (or a correspondence at the world origin) the reference
    is that observed point. Otherwise the reference is the world centroid and its
    image position ``(x0, y0)`` is estimated jointly as the fit intercept.

    Returns ``(reference_world, Ip, Jp, x0, y0)``.
    """
    if len(corr) < 4:
        raise InsufficientPointsError(f"need at least 4 correspondences, got {len(corr)}")
    W = corr.world
    _check_spread(W, "world", 2)
    xn = normalize_pixel(intr, corr.pixels)
    if origin_index is None:
        origin_index = default_origin_index(W)

    if origin_index is not None:
        ref = W[origin_index]
        x0, y0 = xn[origin_index]
        A = W - ref
        sol = np.linalg.lstsq(A, xn - (x0, y0), rcond=None)[0]
        Ip, Jp = sol[:, 0], sol[:, 1]
    else:
        ref = W.mean(axis=0)
        A = np.column_stack((W - ref, np.ones(len(W))))
        sol = np.linalg.lstsq(A, xn, rcond=None)[0]
        Ip, Jp = sol[:3, 0], sol[:3, 1]
        x0, y0 = sol[3]
    if np.linalg.norm(Ip) == 0.0 or np.linalg.norm(Jp) == 0.0:
        raise DegenerateConfigurationError("image of the target has zero extent")
    return ref, Ip, Jp, float(x0), float(y0)


def fit_paraperspective(
    corr: CorrespondenceSet, intr: CameraIntrinsics, origin_index: Optional[int] = None
) -> ParaperspectiveFit:
    ref, Ip, Jp, x0, y0 = affine_fit(corr, intr, origin_index)

    tz = 0.5 * (np.sqrt(1.0 + x0**2) / np.linalg.norm(Ip) + np.sqrt(1.0 + y0**2) / np.linalg.norm(Jp))
    A = np.eye(3) - tz * y0 * skew(Ip) + tz * x0 * skew(Jp)
    if np.linalg.cond(A) > 1e12:
        raise DegenerateConfigurationError("paraperspective k-system is singular")
    k = np.linalg.solve(A, tz**2 * np.cross(Ip, Jp))
    i = tz * Ip + x0 * k
    j = tz * Jp + y0 * k

    R = nearest_rotation(np.vstack([i, j, k]))
    t_ref = np.array([x0 * tz, y0 * tz, tz])
    pose = RigidPose(R, t_ref - R @ ref)
    return ParaperspectiveFit(Ip, Jp, np.array([x0, y0]), float(tz), pose, ref, i, j, k)


def solve_paraperspective(
    corr: CorrespondenceSet, intr: CameraIntrinsics, origin_index: Optional[int] = None
) -> SolveReport:
    """Closed-form paraperspective pose without iterative refinement."""
    fit = fit_paraperspective(corr, intr, origin_index)
    return SolveReport(fit.pose, reprojection_rms(intr, fit.pose, corr), 0, "paraperspective", False)


def init_betas(fit_or_pose, frame: ControlFrame) -> np.ndarray:
    """Project the control points placed by a pose onto the frame's null-space basis."""
    pose = getattr(fit_or_pose, "pose", fit_or_pose)
    x0 = pose.transform(frame.control_world).ravel()
    return np.asarray(frame.basis) @ x0


def solve_parallel(
    corr: CorrespondenceSet,
    intr: CameraIntrinsics,
    weighted: bool = True,
    control_points=None,
    origin_index: Optional[int] = None,
) -> SolveReport:
    """Paraperspective initialization followed by (optionally weighted) Gauss-Newton."""
    frame = make_frame(corr, intr, control_points)
    fit = fit_paraperspective(corr, intr, origin_index)
    betas0 = init_betas(fit, frame)
    weights = None
    if weighted:
        from .error_transfer import gn_weights

        weights = gn_weights(frame, fit.pose, intr)
    return refine_and_recover(frame, betas0, corr, intr, weights, "paraperspective")
