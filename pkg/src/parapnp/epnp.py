"""EPnP machinery: control points, the projection system, null-space betas and
Gauss-Newton refinement of the control-point inter-distances.

The 12-vector ``x`` stacks the camera-frame control points ``(C1x, C1y, C1z, ..., C4z)``.
A *basis* is a (k, 12) array whose rows are orthonormal null-space directions.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    CheiralityError,
    DegenerateConfigurationError,
    InsufficientPointsError,
    NumericalFailureError,
)
from .geometry import (
    CameraIntrinsics,
    CorrespondenceSet,
    RigidPose,
    _det3,
    absolute_orientation,
    project_camera_points,
)

log = logging.getLogger(__name__)

PAIRS = tuple(itertools.combinations(range(4), 2))
GN_MAX_ITERATIONS = 15
GN_REL_TOL = 1e-12
# objective below this fraction of its value at beta = 0 is rounding noise
_GN_FLOOR = 1e-28

INITIALIZERS = ("epnp_closed_form", "weak_perspective", "paraperspective")


@dataclass(frozen=True, eq=False)
class ControlFrame:
    control_world: np.ndarray  # (4, 3)
    alphas: np.ndarray  # (n, 4)
    basis: Optional[np.ndarray] = None  # (k, 12)
    betas: Optional[np.ndarray] = None  # (4,)

    @property
    def pair_distances_sq(self) -> np.ndarray:
        return control_distances_sq(self.control_world)


@dataclass(frozen=True, eq=False)
class SolveReport:
    pose: RigidPose
    reprojection_rms: float
    gn_iterations: int = 0
    initializer: str = "epnp_closed_form"
    weighted: bool = False
    betas: Optional[np.ndarray] = None


def control_distances_sq(control) -> np.ndarray:
    C = np.asarray(control, dtype=float).reshape(4, 3)
    return np.array([np.sum((C[i] - C[j]) ** 2) for i, j in PAIRS])


def tetra_volume(control) -> float:
    """Signed volume of the tetrahedron spanned by four points."""
    C = np.asarray(control, dtype=float).reshape(4, 3)
    return _det3(C[1:] - C[0]) / 6.0


def choose_control_points(world, mode="centroid_pca") -> np.ndarray:
    """Pick four non-coplanar control points.

    ``mode`` is ``"centroid_pca"`` (centroid plus one point along each principal
    axis at one standard deviation) or an explicit (4, 3) array returned verbatim.
    """
    W = np.asarray(world, dtype=float).reshape(-1, 3)
    if not isinstance(mode, str):
        C = np.array(mode, dtype=float).reshape(4, 3)
        if abs(tetra_volume(C)) <= 1e-12 * max(np.ptp(C, axis=0).max(), 1.0) ** 3:
            raise DegenerateConfigurationError("explicit control points are coplanar")
        return C
    if mode != "centroid_pca":
        raise ValueError(f"unknown control point mode {mode!r}")
    if len(W) < 4:
        raise InsufficientPointsError(f"need at least 4 points, got {len(W)}")
    centroid = W.mean(axis=0)
    cov = (W - centroid).T @ (W - centroid) / len(W)
    evals, evecs = np.linalg.eigh(cov)
    std = np.sqrt(np.clip(evals, 0.0, None))[::-1]
    axes = evecs[:, ::-1].T
    if std[2] < 1e-9 * std[0]:
        raise DegenerateConfigurationError(
            f"world points are (nearly) coplanar: principal std devs {std}"
        )
    return np.vstack([centroid, centroid + std[:, None] * axes])


def barycentric_coords(world, control) -> np.ndarray:
    """Coefficients ``a`` with ``sum(a) = 1`` and ``a @ control = world``.

    Accepts one point (3,) or many (n, 3); returns (4,) or (n, 4).
    """
    C = np.asarray(control, dtype=float).reshape(4, 3)
    P = np.asarray(world, dtype=float)
    A = np.vstack([C.T, np.ones(4)])
    if abs(np.linalg.det(A)) <= 1e-12 * max(np.abs(C).max(), 1.0) ** 3:
        raise DegenerateConfigurationError("control points are coplanar")
    rhs = np.vstack([P.reshape(-1, 3).T, np.ones(P.reshape(-1, 3).shape[0])])
    alphas = np.linalg.solve(A, rhs).T
    return alphas[0] if P.ndim == 1 else alphas


def build_M(corr: CorrespondenceSet, alphas, intr: CameraIntrinsics) -> np.ndarray:
    """Stack the two projection equations of every point into a (2n, 12) matrix."""
    a = np.asarray(alphas, dtype=float)
    n = len(corr)
    if a.shape != (n, 4):
        raise ValueError(f"alphas shape {a.shape} does not match {n} correspondences")
    u, v = corr.pixels[:, 0], corr.pixels[:, 1]
    M = np.zeros((2 * n, 12))
    M[0::2, 0::3] = a * intr.fx
    M[0::2, 2::3] = a * (intr.u0 - u)[:, None]
    M[1::2, 1::3] = a * intr.fy
    M[1::2, 2::3] = a * (intr.v0 - v)[:, None]
    return M


def null_space_basis(M, count: int = 4) -> np.ndarray:
    """Right singular vectors of ``M`` with the ``count`` smallest singular values, ascending."""
    if not 1 <= count <= 4:
        raise ValueError(f"count must be in 1..4, got {count}")
    M = np.asarray(M, dtype=float)
    # SVD of M itself, not M^T M, to avoid squaring the condition number
    _, _, Vt = np.linalg.svd(M, full_matrices=M.shape[0] < 12)
    return Vt[::-1][:count].copy()


def singular_values(M) -> np.ndarray:
    return np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)


def _pad_basis(basis) -> np.ndarray:
    B = np.asarray(basis, dtype=float).reshape(-1, 12)
    if len(B) > 4:
        raise ValueError("basis has more than 4 vectors")
    if len(B) < 4:
        B = np.vstack([B, np.zeros((4 - len(B), 12))])
    return B


def control_points_from_betas(betas, basis) -> np.ndarray:
    B = np.asarray(basis, dtype=float).reshape(-1, 12)
    b = np.asarray(betas, dtype=float)[: len(B)]
    return (b @ B).reshape(4, 3)


def _mean_depth(Cc, alphas) -> float:
    return float(np.mean(np.asarray(alphas) @ Cc[:, 2]))


def reprojection_rms(intr: CameraIntrinsics, pose: RigidPose, corr: CorrespondenceSet) -> float:
    uv = project_camera_points(intr, pose.transform(corr.world))
    return float(np.sqrt(np.mean(np.sum((uv - corr.pixels) ** 2, axis=1))))


def _betas_n1(B, dw) -> np.ndarray:
    v = B[0].reshape(4, 3)
    dv = np.array([np.linalg.norm(v[i] - v[j]) for i, j in PAIRS])
    return np.array([np.dot(dv, dw) / np.dot(dv, dv), 0.0, 0.0, 0.0])


def _betas_n2(B, dw) -> np.ndarray:
    v1, v2 = B[0].reshape(4, 3), B[1].reshape(4, 3)
    L = np.empty((6, 3))
    for k, (i, j) in enumerate(PAIRS):
        a, b = v1[i] - v1[j], v2[i] - v2[j]
        L[k] = [a @ a, 2.0 * (a @ b), b @ b]
    b11, b12, b22 = np.linalg.lstsq(L, dw**2, rcond=None)[0]
    # sign of b11 fixes the branch; b12 carries the relative sign of beta1, beta2
    if b11 < 0:
        beta1, beta2 = np.sqrt(-b11), (np.sqrt(-b22) if b22 < 0 else 0.0)
    else:
        beta1, beta2 = np.sqrt(b11), (np.sqrt(b22) if b22 > 0 else 0.0)
    if b12 < 0:
        beta1 = -beta1
    return np.array([beta1, beta2, 0.0, 0.0])


def _orient(betas, B, control_world, alphas):
    """Flip ``betas`` to positive mean depth; report whether handedness matches the world."""
    Cc = control_points_from_betas(betas, B)
    if _mean_depth(Cc, alphas) < 0:
        betas, Cc = -betas, -Cc
    same_hand = np.sign(tetra_volume(Cc)) == np.sign(tetra_volume(control_world))
    return betas, same_hand and _mean_depth(Cc, alphas) > 0


def solve_betas_closed_form(
    basis,
    control_world,
    alphas=None,
    corr: Optional[CorrespondenceSet] = None,
    intr: Optional[CameraIntrinsics] = None,
) -> np.ndarray:
    """EPnP closed-form betas for one and two null-space directions.

    Each candidate is sign-fixed to positive mean depth (of the points when
    ``alphas`` is given, else of the control points) and rejected if the
    reconstructed control tetrahedron is mirrored. Among the survivors the one
    with the lowest reprojection error wins when ``corr``/``intr`` are given,
    otherwise the one that best fits the control-point distances.
    """
    return _closed_form(basis, control_world, alphas, corr, intr)[0]


def _closed_form(basis, control_world, alphas, corr, intr):
    """Best closed-form betas and, when scored by reprojection, their SolveReport."""
    B = _pad_basis(basis)
    Cw = np.asarray(control_world, dtype=float).reshape(4, 3)
    a = np.eye(4) if alphas is None else np.asarray(alphas, dtype=float)
    dw2 = control_distances_sq(Cw)
    dw = np.sqrt(dw2)
    n_real = int(np.sum(np.any(B != 0, axis=1)))

    candidates = [_betas_n1(B, dw)]
    if n_real >= 2:
        candidates.append(_betas_n2(B, dw))

    best, best_rep, best_score = None, None, np.inf
    for betas in candidates:
        if not np.all(np.isfinite(betas)) or not np.any(betas):
            continue
        betas, valid = _orient(betas, B, Cw, a)
        if not valid:
            continue
        rep = None
        if corr is not None and intr is not None:
            try:
                rep = recover_pose(betas, B, ControlFrame(Cw, a), corr, intr)
            except DegenerateConfigurationError:
                continue
            score = rep.reprojection_rms
        else:
            score = distance_objective(betas, B, dw2)
        if score < best_score:
            best, best_rep, best_score = betas, rep, score
    if best is None:
        raise CheiralityError("no beta candidate puts the scene in front of the camera")
    return best, best_rep


def distance_objective(betas, basis, dw2, weights=None) -> float:
    r = _distance_residuals(np.asarray(betas, dtype=float), _pair_diffs(_pad_basis(basis)), dw2)
    w = np.ones(6) if weights is None else np.asarray(weights, dtype=float)
    return float(np.sum(w * r * r))


def _pair_diffs(B) -> np.ndarray:
    """(6, 3, 4) array D with ``C_i - C_j = D[k] @ betas`` for pair k."""
    V = B.reshape(4, 4, 3)  # basis index, control point, coordinate
    return np.stack([(V[:, i] - V[:, j]).T for i, j in PAIRS])


def _distance_residuals(betas, D, dw2) -> np.ndarray:
    diff = D @ betas
    return np.einsum("kc,kc->k", diff, diff) - dw2


def gauss_newton_refine(
    betas0, basis, control_world, weights=None, return_info: bool = False
):
    """Refine betas by Gauss-Newton on squared control-point distance residuals.

    Minimizes ``sum_ij w_ij (|C_i - C_j|^2 - |Cw_i - Cw_j|^2)^2`` over the four
    betas (``w = 1`` when ``weights`` is None). Stops after 15 iterations or when
    the relative decrease drops below 1e-12; a step that does not decrease the
    objective is halved up to 10 times and otherwise rejected.
    """
    B = _pad_basis(basis)
    D = _pair_diffs(B)
    dw2 = control_distances_sq(control_world)
    w = np.ones(6) if weights is None else np.asarray(weights, dtype=float).reshape(6)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    sw = np.sqrt(w)
    floor = _GN_FLOOR * float(np.sum(w * dw2 * dw2))

    beta = np.zeros(4)
    beta[: len(np.ravel(betas0))] = np.ravel(betas0)
    r = _distance_residuals(beta, D, dw2)
    f = float(np.sum(w * r * r))
    if not np.isfinite(f):
        raise NumericalFailureError("initial objective is not finite")

    it = 0
    while it < GN_MAX_ITERATIONS and f > floor:
        J = 2.0 * np.einsum("kcb,kc->kb", D, D @ beta)
        step = np.linalg.lstsq(sw[:, None] * J, -sw * r, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            raise NumericalFailureError("Gauss-Newton step is not finite")
        scale, accepted = 1.0, False
        for _ in range(11):
            trial = beta + scale * step
            r_trial = _distance_residuals(trial, D, dw2)
            f_trial = float(np.sum(w * r_trial * r_trial))
            if not np.isfinite(f_trial):
                raise NumericalFailureError("objective became non-finite")
            if f_trial < f:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break
        decrease = f - f_trial
        beta, r, f = trial, r_trial, f_trial
        it += 1
        if decrease < GN_REL_TOL * (f + decrease):
            break
    if return_info:
        return beta, it, f
    return beta


def recover_pose(
    betas, basis, frame: ControlFrame, corr: CorrespondenceSet, intr: CameraIntrinsics
) -> SolveReport:
    """Rebuild camera-frame points from betas and align them to the world points."""
    betas = np.asarray(betas, dtype=float)
    if not np.all(np.isfinite(betas)):
        raise NumericalFailureError("betas are not finite")
    Cc = control_points_from_betas(betas, _pad_basis(basis))
    Pc = np.asarray(frame.alphas) @ Cc
    pose = absolute_orientation(corr.world, Pc)
    return SolveReport(pose, reprojection_rms(intr, pose, corr), betas=betas)


def make_frame(corr: CorrespondenceSet, intr: CameraIntrinsics, control_points=None):
    """Control points, barycentric coordinates, M and its 4-vector null-space basis."""
    if len(corr) < 4:
        raise InsufficientPointsError(f"need at least 4 correspondences, got {len(corr)}")
    Cw = choose_control_points(
        corr.world, "centroid_pca" if control_points is None else control_points
    )
    alphas = barycentric_coords(corr.world, Cw)
    M = build_M(corr, alphas, intr)
    basis = null_space_basis(M, 4)
    return ControlFrame(Cw, alphas, basis)


def orient_betas(betas, frame: ControlFrame) -> np.ndarray:
    """Global sign of betas giving positive mean point depth."""
    Cc = control_points_from_betas(betas, frame.basis)
    return -betas if _mean_depth(Cc, frame.alphas) < 0 else betas


def refine_and_recover(
    frame: ControlFrame,
    betas0,
    corr: CorrespondenceSet,
    intr: CameraIntrinsics,
    weights=None,
    initializer: str = "epnp_closed_form",
) -> SolveReport:
    betas, it, _ = gauss_newton_refine(
        betas0, frame.basis, frame.control_world, weights, return_info=True
    )
    betas = orient_betas(betas, frame)
    rep = recover_pose(betas, frame.basis, frame, corr, intr)
    return SolveReport(
        rep.pose, rep.reprojection_rms, it, initializer, weights is not None, betas
    )


def solve_epnp(
    corr: CorrespondenceSet,
    intr: CameraIntrinsics,
    refine: bool = False,
    weighting: str = "none",
    control_points=None,
) -> SolveReport:
    """EPnP with optional Gauss-Newton refinement.

    ``weighting="error_transfer"`` weights the refinement by the error-transfer
    model evaluated at the closed-form pose.
    """
    if weighting not in ("none", "error_transfer"):
        raise ValueError(f"unknown weighting {weighting!r}")
    frame = make_frame(corr, intr, control_points)
    betas0, rep = _closed_form(frame.basis, frame.control_world, frame.alphas, corr, intr)
    if not refine:
        return SolveReport(rep.pose, rep.reprojection_rms, 0, "epnp_closed_form", False, betas0)
    weights = None
    if weighting == "error_transfer":
        from .error_transfer import gn_weights

        weights = gn_weights(frame, rep.pose, intr)
    return refine_and_recover(frame, betas0, corr, intr, weights, "epnp_closed_form")
