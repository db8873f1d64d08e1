"""Solver registry keyed by the labels used on the command line and in CSV output."""

from __future__ import annotations

from typing import Callable, Dict

from .baselines import solve_dlt, solve_weak_perspective
from .epnp import SolveReport, solve_epnp
from .geometry import CameraIntrinsics, CorrespondenceSet
from .paraperspective import solve_paraperspective, solve_parallel


def _dlt(corr, intr, control_points=None):
    return solve_dlt(corr, intr)


def _weak(corr, intr, control_points=None):
    return solve_weak_perspective(corr, intr)


def _epnp(corr, intr, control_points=None):
    return solve_epnp(corr, intr, refine=False, control_points=control_points)


def _epnp_gn(corr, intr, control_points=None):
    return solve_epnp(corr, intr, refine=True, control_points=control_points)


def _parallel(corr, intr, control_points=None):
    return solve_parallel(corr, intr, weighted=False, control_points=control_points)


def _parallel_weight(corr, intr, control_points=None):
    return solve_parallel(corr, intr, weighted=True, control_points=control_points)


def _parallel_raw(corr, intr, control_points=None):
    return solve_paraperspective(corr, intr)


SOLVERS: Dict[str, Callable[..., SolveReport]] = {
    "dlt": _dlt,
    "epnp": _epnp,
    "epnp-gn": _epnp_gn,
    "parallel": _parallel,
    "parallel-weight": _parallel_weight,
    "parallel-raw": _parallel_raw,
    "weak": _weak,
}

DEFAULT_SOLVERS = ("dlt", "epnp", "epnp-gn", "parallel", "parallel-weight")


def solve(
    label: str, corr: CorrespondenceSet, intr: CameraIntrinsics, control_points=None
) -> SolveReport:
    try:
        fn = SOLVERS[label]
    except KeyError:
        raise ValueError(f"unknown solver {label!r}; choose from {sorted(SOLVERS)}") from None
    return fn(corr, intr, control_points)
