"""Error-transfer models relating image measurement noise to target geometry errors.

Segment quantities follow the paraperspective model about the target origin
``P0`` (camera coordinates ``(tx, ty, tz)``, normalized image ``(x0, y0)``)::

    tz * u_ix = d_Pix - x0 * d_Piz
    tz * v_ix = d_Piy - y0 * d_Piz

from which ``(d_io sin(beta))^2 = tz^2 m_io^2 + m_o^2 d_Piz^2
+ 2 (u_ix x0 + v_ix y0) tz d_Piz``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .epnp import PAIRS
from .errors import BehindCameraError, DomainError
from .geometry import CameraIntrinsics, Correspondence, RigidPose

WEIGHT_EPS = 1e-6


@dataclass(frozen=True)
class SegmentGeometry:
    d_io: float
    m_io: float
    m_o: float
    beta_angle: float  # degrees
    tz: float
    d_piz: float
    d_pix: float
    d_piy: float
    u_ix: float
    v_ix: float
    x0: float
    y0: float


@dataclass(frozen=True)
class ErrorRatios:
    d_wrt_mio: float
    d_wrt_mo: float
    d_wrt_beta: float
    beta_wrt_mio: float
    beta_wrt_mo: float


def planar_error_ratios(cell_size_a, focal_f, depth_d, spacing_l, pitch_theta, tilt_phi):
    """Azimuth, pitch and tilt error over image extraction error for a planar 4-point target.

    Angles in degrees. Returns ``(sigma_gamma, sigma_theta, sigma_phi) / sigma_p``.
    """
    for name, value in (("cell size", cell_size_a), ("focal length", focal_f),
                        ("depth", depth_d), ("spacing", spacing_l)):
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value}")
    base = cell_size_a / (2.0 * focal_f) * (depth_d / spacing_l)
    sq = base * (depth_d / spacing_l)
    return (
        base,
        sq * np.cos(np.radians(pitch_theta)),
        sq * np.cos(np.radians(tilt_phi)),
    )


def segment_geometry(
    corr_origin: Correspondence, corr_i: Correspondence, intr: CameraIntrinsics, pose: RigidPose
) -> SegmentGeometry:
    """Geometry of the segment from the target origin to point i under ``pose``.

    Only the world coordinates of the correspondences are used; the image
    quantities are those predicted by the paraperspective model at ``pose``, so
    that the segment identity holds exactly. ``intr`` is accepted for
    interface symmetry; normalized coordinates do not depend on it.
    """
    P0 = pose.transform(np.asarray(corr_origin[0], dtype=float))
    Pi = pose.transform(np.asarray(corr_i[0], dtype=float))
    for name, P in (("origin", P0), ("segment end", Pi)):
        if P[2] <= 0:
            raise BehindCameraError(f"{name} has camera depth {P[2]:.6g} <= 0")
    tz = P0[2]
    x0, y0 = P0[0] / tz, P0[1] / tz
    d = Pi - P0
    u_ix = (d[0] - x0 * d[2]) / tz
    v_ix = (d[1] - y0 * d[2]) / tz
    d_io = float(np.linalg.norm(d))
    if d_io == 0.0:
        raise DomainError("segment has zero length")
    beta = np.degrees(np.arctan2(np.hypot(d[0], d[1]), d[2]))
    return SegmentGeometry(
        d_io=d_io,
        m_io=float(np.hypot(u_ix, v_ix)),
        m_o=float(np.hypot(x0, y0)),
        beta_angle=float(beta),
        tz=float(tz),
        d_piz=float(d[2]),
        d_pix=float(d[0]),
        d_piy=float(d[1]),
        u_ix=float(u_ix),
        v_ix=float(v_ix),
        x0=float(x0),
        y0=float(y0),
    )


def segment_identity_sides(geom: SegmentGeometry):
    """Both sides of the segment-length identity: ``(d_io sin(beta))^2`` and its image form."""
    sb = np.sin(np.radians(geom.beta_angle))
    lhs = (geom.d_io * sb) ** 2
    rhs = (
        geom.tz**2 * geom.m_io**2
        + geom.m_o**2 * geom.d_piz**2
        + 2.0 * (geom.u_ix * geom.x0 + geom.v_ix * geom.y0) * geom.tz * geom.d_piz
    )
    return lhs, rhs


def _sin_cos_deg(beta):
    # exact zero cosine at 90 degrees so boundary values are not polluted by rounding
    if beta == 90.0:
        return 1.0, 0.0
    b = np.radians(beta)
    return np.sin(b), np.cos(b)


def length_error_ratios(geom: SegmentGeometry):
    """Sensitivities of the segment length: ``(dd/dm_io, dd/dm_o, dd/dbeta)``."""
    beta = geom.beta_angle
    if not 0.0 < beta < 180.0:
        raise DomainError("length ratios undefined: sin(beta) = 0 (segment along the optical axis)")
    if beta > 90.0:
        raise DomainError("dd/dbeta undefined: cos(beta) < 0")
    sb, cb = _sin_cos_deg(beta)
    denom = geom.d_io * sb**2
    return (
        geom.tz**2 * geom.m_io / denom,
        geom.d_piz**2 * geom.m_o / denom,
        geom.d_io * np.sqrt(cb) / sb,
    )


def angle_error_ratios(geom: SegmentGeometry):
    """Sensitivities of the segment angle: ``(dbeta/dm_io, dbeta/dm_o)``."""
    if not 0.0 < geom.beta_angle < 90.0:
        raise DomainError(
            f"dbeta/dm_io and dbeta/dm_o undefined at beta = {geom.beta_angle:.6g} deg "
            "(need 0 < beta < 90)"
        )
    sb, cb = _sin_cos_deg(geom.beta_angle)
    denom = geom.d_io**2 * sb * np.sqrt(cb)
    return geom.tz**2 * geom.m_io / denom, geom.d_piz**2 * geom.m_o / denom


def segment_error_ratios(geom: SegmentGeometry) -> ErrorRatios:
    """All five ratios; raises DomainError naming the undefined ones outside 0 < beta < 90."""
    d_mio, d_mo, d_beta = length_error_ratios(geom)
    b_mio, b_mo = angle_error_ratios(geom)
    return ErrorRatios(d_mio, d_mo, d_beta, b_mio, b_mo)


def angle_amplification(beta_deg):
    """``1 / (sin(beta) sqrt(cos(beta)))``, the angular factor of the angle ratios."""
    b = np.radians(beta_deg)
    return 1.0 / (np.sin(b) * np.sqrt(np.cos(b)))


def gn_weights(frame, coarse_pose: RigidPose, intr: CameraIntrinsics) -> np.ndarray:
    """Per control-point-pair weights ``d_ij^2 / (tz^2 m_o m_ij)``, normalized to unit mean.

    ``m_ij`` is the normalized-image length of pair (i, j) under ``coarse_pose``,
    ``m_o`` the normalized distance of the projected world origin from the
    principal point and ``tz`` the origin's depth. ``m_o`` and ``m_ij`` are
    clamped below at 1e-6. If a control point falls behind the camera the
    image lengths are meaningless and uniform weights are returned.
    """
    Cw = np.asarray(frame.control_world, dtype=float).reshape(4, 3)
    Cc = coarse_pose.transform(Cw)
    if np.any(Cc[:, 2] <= 0):
        return np.ones(len(PAIRS))
    xy = Cc[:, :2] / Cc[:, 2:3]
    t = coarse_pose.translation
    tz = abs(t[2]) if t[2] != 0 else WEIGHT_EPS
    m_o = max(np.hypot(t[0], t[1]) / tz, WEIGHT_EPS)
    w = np.empty(len(PAIRS))
    for k, (i, j) in enumerate(PAIRS):
        d2 = float(np.sum((Cw[i] - Cw[j]) ** 2))
        m_ij = max(float(np.linalg.norm(xy[i] - xy[j])), WEIGHT_EPS)
        w[k] = d2 / (tz**2 * m_o * m_ij)
    return w / w.mean()
