"""Perspective-n-point pose estimation with paraperspective initialization."""

from .baselines import solve_dlt, solve_weak_perspective
from .epnp import SolveReport, solve_epnp
from .errors import (
    BehindCameraError,
    CheiralityError,
    DegenerateConfigurationError,
    DomainError,
    InsufficientPointsError,
    NumericalFailureError,
    PoseError,
)
from .geometry import DEFAULT_INTRINSICS, CameraIntrinsics, CorrespondenceSet, RigidPose, project
from .paraperspective import solve_paraperspective, solve_parallel
from .solvers import DEFAULT_SOLVERS, SOLVERS, solve

__all__ = [
    "BehindCameraError",
    "CameraIntrinsics",
    "CheiralityError",
    "CorrespondenceSet",
    "DEFAULT_INTRINSICS",
    "DEFAULT_SOLVERS",
    "DegenerateConfigurationError",
    "DomainError",
    "InsufficientPointsError",
    "NumericalFailureError",
    "PoseError",
    "RigidPose",
    "SOLVERS",
    "SolveReport",
    "project",
    "solve",
    "solve_dlt",
    "solve_epnp",
    "solve_parallel",
    "solve_paraperspective",
    "solve_weak_perspective",
]
