"""Synthetic scenes, error metrics and the Monte-Carlo experiment protocols."""

from __future__ import annotations

import csv
import gc
import io
import logging
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, PoseError
from .geometry import (
    DEFAULT_INTRINSICS,
    CameraIntrinsics,
    CorrespondenceSet,
    RigidPose,
    euler_zxz_to_rotation,
    project_camera_points,
    rot_y,
)
from .solvers import DEFAULT_SOLVERS, solve

log = logging.getLogger(__name__)

CSV_HEADER = (
    "protocol", "sweep_value", "trial", "solver",
    "rot_error_deg", "trans_error_pct", "solve_time_s", "status",
)
MAX_POSE_RESAMPLES = 100


class ConfigurationError(PoseError, ValueError):
    """A scene configuration cannot be realized."""


@dataclass(frozen=True)
class SceneConfig:
    """Synthetic scene description. Lengths in mm, angles in degrees.

    ``box`` bounds the camera-frame sampling region of random clouds;
    ``origin_region`` bounds the target origin. A ``fixed_rotation`` overrides
    the Euler-angle sampling.
    """

    n_points: int = 10
    box: Tuple[Tuple[float, float], ...] = ((-500.0, 500.0), (-500.0, 500.0), (500.0, 1500.0))
    target_kind: str = "random_cloud"
    L: float = 50.0
    euler_ranges: Tuple[Tuple[float, float], ...] = ((-180.0, 180.0), (0.0, 180.0), (-180.0, 180.0))
    origin_region: Tuple[Tuple[float, float], ...] = (
        (-500.0, 500.0), (-500.0, 500.0), (500.0, 1500.0)
    )
    fixed_rotation: Optional[Tuple[Tuple[float, ...], ...]] = None
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS
    noise_sigma: float = 0.0
    trials: int = 1
    seed: int = 0
    min_depth: float = 1.0

    def __post_init__(self):
        box = np.asarray(self.box, dtype=float)
        if box.shape != (3, 2) or np.any(box[:, 1] <= box[:, 0]):
            raise ConfigurationError(f"box must have positive extent on every axis: {self.box}")
        if box[2, 0] <= 0:
            raise ConfigurationError("box depth range must be strictly positive")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.target_kind not in ("random_cloud", "biprism"):
            raise ConfigurationError(f"unknown target kind {self.target_kind!r}")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be >= 0")
        if self.target_kind == "random_cloud" and self.n_points < 1:
            raise ConfigurationError("n_points must be positive")


@dataclass(frozen=True, eq=False)
class Scene:
    corr: CorrespondenceSet
    pose: RigidPose
    control_points: Optional[np.ndarray] = None


@dataclass(frozen=True)
class TrialResult:
    solver_name: str
    rot_error_deg: float
    trans_error_pct: float
    solve_time: float = 0.0
    trial_index: int = 0
    sweep_value: float = 0.0
    status: str = "ok"


def biprism_target(L: float = 50.0):
    """Vertices of the 6-point biprism and its 4 control points.

    Returns ``(vertices, control_points)`` with vertices ordered P1..P6:
    +z, +x, -z, -x, +y, -y at distance ``L`` from the centroid (the origin).
    """
    if not L > 0:
        raise DomainError(f"L must be positive, got {L}")
    vertices = np.array(
        [[0, 0, L], [L, 0, 0], [0, 0, -L], [-L, 0, 0], [0, L, 0], [0, -L, 0]], dtype=float
    )
    control = np.array([[L, 0, 0], [0, L, 0], [0, 0, L], [0, 0, 0]], dtype=float)
    return vertices, control


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(s) for s in stream]])


def _sample_rotation(cfg: SceneConfig, rng) -> np.ndarray:
    if cfg.fixed_rotation is not None:
        return np.asarray(cfg.fixed_rotation, dtype=float)
    lo, hi = np.asarray(cfg.euler_ranges, dtype=float).T
    return euler_zxz_to_rotation(*rng.uniform(lo, hi))


def generate_scene(cfg: SceneConfig, trial: int, cell: Sequence[int] = ()) -> Scene:
    """Deterministic noise-free scene for ``(cfg.seed, *cell, trial)``."""
    rng = _rng(cfg.seed, *cell, trial)
    lo, hi = np.asarray(cfg.origin_region, dtype=float).T
    if cfg.target_kind == "random_cloud":
        R = _sample_rotation(cfg, rng)
        t = rng.uniform(lo, hi)
        blo, bhi = np.asarray(cfg.box, dtype=float).T
        Pc = rng.uniform(blo, bhi, size=(cfg.n_points, 3))
        world = (Pc - t) @ R
        pose = RigidPose(R, t)
        control = None
    else:
        world, control = biprism_target(cfg.L)
        for _ in range(MAX_POSE_RESAMPLES):
            R = _sample_rotation(cfg, rng)
            t = rng.uniform(lo, hi)
            Pc = world @ R.T + t
            if np.all(Pc[:, 2] > cfg.min_depth):
                break
        else:
            raise ConfigurationError(
                f"could not place the target in front of the camera in {MAX_POSE_RESAMPLES} tries"
            )
        pose = RigidPose(R, t)
    pixels = project_camera_points(cfg.intrinsics, Pc)
    return Scene(CorrespondenceSet(world, pixels), pose, control)


def add_noise(pixels, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Independent zero-mean Gaussian noise of std ``sigma`` on every coordinate."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    p = np.asarray(pixels, dtype=float)
    if sigma == 0:
        return p.copy()
    return p + rng.normal(0.0, sigma, size=p.shape)


def _vector_angle_deg(a, b) -> float:
    # atan2 form of arccos(a.b) for unit vectors; accurate near 0 and 180
    return float(np.degrees(np.arctan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b))))


def rotation_error(R_true, R_est) -> float:
    """Largest angle in degrees between corresponding columns of the two rotations."""
    A = np.asarray(R_true, dtype=float)
    B = np.asarray(R_est, dtype=float)
    return max(_vector_angle_deg(A[:, k], B[:, k]) for k in range(3))


def translation_error(t_true, t_est) -> float:
    """``100 |t_true - t_est| / |t_true|`` (percent)."""
    t_true = np.asarray(t_true, dtype=float)
    norm = np.linalg.norm(t_true)
    if norm == 0:
        raise DomainError("relative translation error undefined for a zero true translation")
    return float(100.0 * np.linalg.norm(t_true - np.asarray(t_est, dtype=float)) / norm)


def evaluate_sequence(poses, true_relative) -> List[TrialResult]:
    """Score consecutive relative motions against known true steps.

    ``poses`` holds n estimates (SolveReport or RigidPose); ``true_relative``
    holds the n - 1 true steps, each a RigidPose whose rotation is
    ``R_{i-1}^T R_i`` and whose translation is the movement ``t_i - t_{i-1}``.
    Translation error is NaN for steps with zero true movement.
    """
    est = [getattr(p, "pose", p) for p in poses]
    if len(true_relative) != len(est) - 1:
        raise ValueError(f"{len(est)} poses need {len(est) - 1} true steps, got {len(true_relative)}")
    out = []
    for i in range(1, len(est)):
        truth = true_relative[i - 1]
        R_rel = est[i - 1].rotation.T @ est[i].rotation
        move = est[i].translation - est[i - 1].translation
        try:
            te = translation_error(truth.translation, move)
        except DomainError:
            te = float("nan")
        out.append(TrialResult("sequence", rotation_error(truth.rotation, R_rel), te, trial_index=i))
    return out


# ---------------------------------------------------------------------------
# experiment protocols


@dataclass(frozen=True)
class Protocol:
    name: str
    sweep: Tuple[float, ...]
    base: SceneConfig
    description: str
    size_note: str = ""


def _grid(start, stop, step) -> Tuple[float, ...]:
    n = int(round((stop - start) / step))
    return tuple(float(round(start + k * step, 10)) for k in range(n + 1))


FOCAL_500 = CameraIntrinsics(500.0, 500.0, DEFAULT_INTRINSICS.u0, DEFAULT_INTRINSICS.v0)

PROTOCOLS: Dict[str, Protocol] = {
    "feature_count": Protocol(
        "feature_count", _grid(4, 20, 1),
        SceneConfig(noise_sigma=0.2, trials=200),
        "number of random-cloud points",
    ),
    "noise": Protocol(
        "noise", _grid(0, 10, 0.5),
        SceneConfig(n_points=10, trials=500),
        "gaussian pixel noise sigma",
    ),
    "timing": Protocol(
        "timing", _grid(4, 104, 4),
        SceneConfig(
            box=((-100.0, 100.0), (-100.0, 100.0), (400.0, 800.0)),
            origin_region=((-100.0, 100.0), (-100.0, 100.0), (400.0, 800.0)),
            noise_sigma=0.2, trials=500,
        ),
        "number of random-cloud points (solve time)",
    ),
    "depth_ratio": Protocol(
        "depth_ratio",
        tuple(d / 50.0 for d in _grid(100, 500, 100) + _grid(1000, 10000, 500)),
        SceneConfig(target_kind="biprism", intrinsics=FOCAL_500, noise_sigma=0.2, trials=100),
        "depth / target size",
        "biprism size = L; random cloud size = largest box edge",
    ),
    "off_axis": Protocol(
        "off_axis", tuple(y / 50.0 for y in _grid(1, 476, 25)),
        SceneConfig(target_kind="biprism", noise_sigma=0.2, trials=100),
        "origin distance from optical axis / L (origin z = 100 mm)",
    ),
    "angle": Protocol(
        "angle", _grid(-90, 90, 1),
        SceneConfig(target_kind="biprism", intrinsics=FOCAL_500, noise_sigma=0.2, trials=100),
        "target rotation about camera Y (deg), origin (0, 0, 500)",
    ),
}


def protocol_id(name: str) -> int:
    return zlib.crc32(name.encode())


def cell_config(protocol: Protocol, value: float, cfg: SceneConfig, origin_z: float = 100.0) -> SceneConfig:
    """Scene configuration for one sweep value."""
    name = protocol.name
    if name in ("feature_count", "timing"):
        return replace(cfg, n_points=int(value))
    if name == "noise":
        return replace(cfg, noise_sigma=float(value))
    if name == "depth_ratio":
        if cfg.target_kind == "biprism":
            d = value * cfg.L
            return replace(cfg, origin_region=((0.0, 0.0), (0.0, 0.0), (d, d)))
        box = np.asarray(cfg.box, dtype=float)
        size = float(np.max(box[:, 1] - box[:, 0]))
        depth_extent = box[2, 1] - box[2, 0]
        near = value * size
        return replace(
            cfg,
            box=(tuple(box[0]), tuple(box[1]), (near, near + depth_extent)),
            origin_region=(tuple(box[0]), tuple(box[1]), (near, near + depth_extent)),
        )
    if name == "off_axis":
        y = value * cfg.L
        return replace(cfg, origin_region=((0.0, 0.0), (y, y), (origin_z, origin_z)))
    if name == "angle":
        return replace(
            cfg,
            fixed_rotation=tuple(map(tuple, rot_y(value))),
            origin_region=((0.0, 0.0), (0.0, 0.0), (500.0, 500.0)),
        )
    raise ConfigurationError(f"unknown protocol {name!r}")


def run_trial(cfg: SceneConfig, trial: int, cell: Sequence[int], solvers, sweep_value=0.0):
    """Generate one noisy scene and run every solver on it."""
    scene = generate_scene(cfg, trial, cell)
    noisy = add_noise(scene.corr.pixels, cfg.noise_sigma, _rng(cfg.seed, *cell, trial, 1))
    corr = scene.corr.with_pixels(noisy)
    results = []
    for label in solvers:
        t0 = time.perf_counter()
        try:
            rep = solve(label, corr, cfg.intrinsics, scene.control_points)
            elapsed = time.perf_counter() - t0
            re = rotation_error(scene.pose.rotation, rep.pose.rotation)
            te = translation_error(scene.pose.translation, rep.pose.translation)
            status = "ok"
        except (PoseError, np.linalg.LinAlgError, ValueError) as exc:
            elapsed = time.perf_counter() - t0
            re = te = float("nan")
            status = f"error:{type(exc).__name__}"
        results.append(TrialResult(label, re, te, elapsed, trial, float(sweep_value), status))
    return results


def _run_cell(args):
    cfg, cell, solvers, value = args
    rows = []
    for trial in range(cfg.trials):
        rows.extend(run_trial(cfg, trial, cell, solvers, value))
    return rows


def _run_interleaved(jobs):
    """Trial-major order with GC paused, so slow drift of the host does not correlate with the sweep."""
    chunks = [[] for _ in jobs]
    trials = max(job[0].trials for job in jobs)
    enabled = gc.isenabled()
    gc.disable()
    try:
        for trial in range(trials):
            for k, (cfg, cell, solvers, value) in enumerate(jobs):
                if trial < cfg.trials:
                    chunks[k].extend(run_trial(cfg, trial, cell, solvers, value))
    finally:
        if enabled:
            gc.enable()
    return chunks


@dataclass
class ExperimentResult:
    protocol: str
    rows: List[TrialResult]
    meta: Dict[str, str] = field(default_factory=dict)

    def trial_rows(self, solver=None, sweep_value=None) -> List[TrialResult]:
        return [
            r for r in self.rows
            if (solver is None or r.solver_name == solver)
            and (sweep_value is None or r.sweep_value == sweep_value)
        ]

    def median_rotation(self, solver, sweep_value) -> float:
        """Median over all trials; failed trials count as +inf."""
        vals = [r.rot_error_deg if r.status == "ok" else np.inf
                for r in self.trial_rows(solver, sweep_value)]
        return float(np.median(vals))

    def sweep_values(self) -> List[float]:
        return sorted({r.sweep_value for r in self.rows})

    def to_csv(self, include_timing: bool = True) -> str:
        return rows_to_csv(self.protocol, self.rows, include_timing)


def run_experiment(
    protocol: str,
    overrides: Optional[dict] = None,
    solvers: Sequence[str] = DEFAULT_SOLVERS,
    sweep: Optional[Sequence[float]] = None,
    origin_z: float = 100.0,
    workers: int = 1,
) -> ExperimentResult:
    """Run a protocol sweep; one TrialResult per (sweep value, trial, solver).

    ``overrides`` replaces SceneConfig fields; ``sweep`` replaces the grid.
    Trials are seeded per cell from ``(seed, protocol, sweep index, trial)``.
    Failed solves are recorded with status ``error:<type>``.
    """
    if protocol not in PROTOCOLS:
        raise ConfigurationError(f"unknown protocol {protocol!r}; choose from {sorted(PROTOCOLS)}")
    if not solvers:
        raise ConfigurationError("at least one solver is required")
    proto = PROTOCOLS[protocol]
    base = replace(proto.base, **(overrides or {}))
    grid = tuple(float(v) for v in (proto.sweep if sweep is None else sweep))
    pid = protocol_id(protocol)
    jobs = [
        (cell_config(proto, v, base, origin_z), (pid, idx), tuple(solvers), v)
        for idx, v in enumerate(grid)
    ]
    if protocol == "timing":
        chunks = _run_interleaved(jobs)
    elif workers <= 1:
        chunks = [_run_cell(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cell, jobs))
    rows = [r for chunk in chunks for r in chunk]

    c = base.intrinsics
    meta = {
        "protocol": protocol,
        "seed": str(base.seed),
        "intrinsics": f"fx={c.fx!r} fy={c.fy!r} u0={c.u0!r} v0={c.v0!r}",
        "noise_model": "gaussian_sigma_px",
        "noise_sigma": repr(base.noise_sigma),
        "target_kind": base.target_kind,
        "n_points": str(base.n_points),
        "trials": str(base.trials),
        "solvers": ",".join(solvers),
        "grid": ",".join(_fmt(v) for v in grid),
        "sweep": proto.description,
    }
    if proto.size_note:
        meta["size_definition"] = proto.size_note
    if protocol == "off_axis":
        meta["origin_z"] = repr(float(origin_z))
    failures = {}
    for r in rows:
        if r.status != "ok":
            key = f"failures.{r.solver_name}"
            failures[key] = failures.get(key, 0) + 1
    meta.update({k: str(v) for k, v in sorted(failures.items())})
    return ExperimentResult(protocol, rows, meta)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def aggregate_rows(protocol: str, rows: Sequence[TrialResult]):
    """Mean and median over the successful trials of each (sweep value, solver) cell."""
    cells: Dict[Tuple[float, str], List[TrialResult]] = {}
    for r in rows:
        cells.setdefault((r.sweep_value, r.solver_name), []).append(r)
    out = []
    for (value, solver), rs in cells.items():
        ok = [r for r in rs if r.status == "ok"]
        re = np.array([r.rot_error_deg for r in ok]) if ok else np.array([np.nan])
        te = np.array([r.trans_error_pct for r in ok]) if ok else np.array([np.nan])
        st = np.array([r.solve_time for r in rs])
        out.append((value, solver, "aggregate_mean", re.mean(), te.mean(), st.mean()))
        out.append((value, solver, "aggregate_median", np.median(re), np.median(te), np.median(st)))
    return out


def rows_to_csv(protocol: str, rows: Sequence[TrialResult], include_timing: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(CSV_HEADER)
    if not include_timing:
        header.remove("solve_time_s")
    writer.writerow(header)
    by_value: Dict[float, List[TrialResult]] = {}
    for r in rows:
        by_value.setdefault(r.sweep_value, []).append(r)
    aggregates = aggregate_rows(protocol, rows)
    for value, rs in by_value.items():
        for r in rs:
            line = [protocol, _fmt(value), r.trial_index, r.solver_name,
                    _fmt(r.rot_error_deg), _fmt(r.trans_error_pct), _fmt(r.solve_time), r.status]
            if not include_timing:
                del line[6]
            writer.writerow(line)
        for v, solver, status, re, te, st in aggregates:
            if v != value:
                continue
            line = [protocol, _fmt(v), -1, solver, _fmt(re), _fmt(te), _fmt(st), status]
            if not include_timing:
                del line[6]
            writer.writerow(line)
    return buf.getvalue()


def write_experiment(result: ExperimentResult, out: Path) -> Tuple[Path, Path]:
    """Write the CSV and its ``.meta`` sidecar (same basename)."""
    out = Path(out)
    out.write_text(result.to_csv(), encoding="utf-8")
    meta_path = out.with_suffix(".meta")
    meta_path.write_text("".join(f"{k}={v}\n" for k, v in result.meta.items()), encoding="utf-8")
    return out, meta_path


def csv_body_without_timing(text: str) -> str:
    """Drop the solve_time_s column from CSV text, for determinism comparisons."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    idx = header.index("solve_time_s")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header[:idx] + header[idx + 1:])
    for row in reader:
        writer.writerow(row[:idx] + row[idx + 1:])
    return buf.getvalue()
