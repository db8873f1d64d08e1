"""Command-line entry point: ``solve``, ``simulate``, ``predict`` and ``target``.

Exit codes: 0 success, 2 input or usage error, 3 numerical or solver error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .error_transfer import (
    length_error_ratios,
    angle_error_ratios,
    planar_error_ratios,
    segment_geometry,
)
from .errors import DomainError, PoseError
from .geometry import (
    DEFAULT_INTRINSICS,
    CameraIntrinsics,
    Correspondence,
    CorrespondenceSet,
    RigidPose,
    euler_zxz_to_rotation,
    rotation_to_euler_zxz,
)
from .sim_bench import PROTOCOLS, ConfigurationError, biprism_target, run_experiment, write_experiment
from .solvers import DEFAULT_SOLVERS, SOLVERS, solve

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3

OPTIMUM_BETA = 54.7356
OPTIMUM_BAND = 5.0


class InputError(Exception):
    """Malformed input file or argument."""


def fmt(x) -> str:
    return format(float(x), ".17g")


def _read_lines(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: cannot read: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        yield lineno, raw, line


def _floats(path, lineno, fields):
    try:
        vals = [float(f) for f in fields]
    except ValueError:
        raise InputError(f"{path}:{lineno}: non-numeric field in {' '.join(fields)!r}") from None
    if not all(np.isfinite(vals)):
        raise InputError(f"{path}:{lineno}: non-finite value")
    return vals


def read_correspondences(path) -> CorrespondenceSet:
    """Parse ``X Y Z u v`` lines."""
    world, pixels = [], []
    for lineno, _, line in _read_lines(path):
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise InputError(f"{path}:{lineno}: expected 5 fields (X Y Z u v), got {len(fields)}")
        vals = _floats(path, lineno, fields)
        world.append(vals[:3])
        pixels.append(vals[3:])
    if not world:
        raise InputError(f"{path}: no correspondences")
    return CorrespondenceSet(np.array(world), np.array(pixels))


def read_layout(path):
    """Parse ``X Y Z`` lines. Lines after a ``# control`` marker are control points.

    Returns ``(world, control_or_None)``.
    """
    world, control = [], []
    target = world
    for lineno, raw, line in _read_lines(path):
        if raw.strip().lstrip("#").strip().lower() == "control" and raw.strip().startswith("#"):
            target = control
            continue
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise InputError(f"{path}:{lineno}: expected 3 fields (X Y Z), got {len(fields)}")
        target.append(_floats(path, lineno, fields))
    if not world:
        raise InputError(f"{path}: no points")
    if control and len(control) != 4:
        raise InputError(f"{path}: control section must hold 4 points, got {len(control)}")
    return np.array(world), (np.array(control) if control else None)


def read_intrinsics(path) -> CameraIntrinsics:
    """Parse ``key=value`` lines with keys fx, fy, u0, v0 and optional a, f_mm."""
    known = {"fx", "fy", "u0", "v0", "a", "f_mm"}
    vals = {}
    for lineno, _, line in _read_lines(path):
        if not line:
            continue
        for token in line.split():
            key, sep, value = token.partition("=")
            if not sep or key not in known:
                raise InputError(f"{path}:{lineno}: expected key=value with key in {sorted(known)}")
            vals[key] = _floats(path, lineno, [value])[0]
    missing = {"fx", "fy", "u0", "v0"} - vals.keys()
    if missing:
        raise InputError(f"{path}: missing {sorted(missing)}")
    try:
        return CameraIntrinsics(
            vals["fx"], vals["fy"], vals["u0"], vals["v0"],
            cell_size=vals.get("a"), focal_mm=vals.get("f_mm"),
        )
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def _intrinsics(args) -> CameraIntrinsics:
    return read_intrinsics(args.intrinsics) if args.intrinsics else DEFAULT_INTRINSICS


def cmd_solve(args, out) -> int:
    corr = read_correspondences(args.correspondences)
    intr = _intrinsics(args)
    control = read_layout(args.control)[1] if args.control else None
    rep = solve(args.solver, corr, intr, control)
    R, t = rep.pose.rotation, rep.pose.translation
    eul = rotation_to_euler_zxz(R)
    print(f"solver {args.solver}", file=out)
    print("R " + " ".join(fmt(v) for v in R.ravel()), file=out)
    print("t " + " ".join(fmt(v) for v in t), file=out)
    print(f"euler_zxz_deg {fmt(eul.alpha)} {fmt(eul.beta)} {fmt(eul.theta)}"
          + (" gimbal" if eul.degenerate else ""), file=out)
    print(f"reprojection_rms_px {fmt(rep.reprojection_rms)}", file=out)
    print(f"initializer {rep.initializer}", file=out)
    print(f"gn_iterations {rep.gn_iterations}", file=out)
    print(f"weighted {str(rep.weighted).lower()}", file=out)
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    if args.protocol not in PROTOCOLS:
        raise InputError(f"unknown protocol {args.protocol!r}; choose from {sorted(PROTOCOLS)}")
    solvers = tuple(args.solvers.split(",")) if args.solvers else DEFAULT_SOLVERS
    for s in solvers:
        if s not in SOLVERS:
            raise InputError(f"unknown solver {s!r}")
    overrides = {"seed": args.seed}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.intrinsics:
        overrides["intrinsics"] = read_intrinsics(args.intrinsics)
    if args.sigma is not None:
        overrides["noise_sigma"] = args.sigma
    if args.n_points is not None:
        overrides["n_points"] = args.n_points
    if args.target is not None:
        overrides["target_kind"] = args.target
    try:
        result = run_experiment(args.protocol, overrides, solvers, workers=args.workers)
    except ConfigurationError as exc:
        raise InputError(str(exc)) from None
    csv_path, meta_path = write_experiment(result, args.out)
    print(f"wrote {csv_path} and {meta_path}", file=out)
    return EXIT_OK


def _predict_pose(args) -> RigidPose:
    R = euler_zxz_to_rotation(*args.euler)
    return RigidPose(R, np.array([args.tx, args.ty, args.depth], dtype=float))


def cmd_predict(args, out) -> int:
    intr = _intrinsics(args)
    if not args.depth > 0:
        raise DomainError(f"--depth must be positive, got {args.depth}")
    if args.layout:
        world, _ = read_layout(args.layout)
    else:
        world, _ = biprism_target(50.0)
    pose = _predict_pose(args)
    origin = np.flatnonzero(np.all(world == 0.0, axis=1))
    origin_world = np.zeros(3) if origin.size == 0 else world[origin[0]]
    o = Correspondence(origin_world, None)
    print("segment beta_deg dd_dmio dd_dmo dd_dbeta dbeta_dmio dbeta_dmo optimum", file=out)
    for idx, P in enumerate(world):
        if np.array_equal(P, origin_world):
            continue
        geom = segment_geometry(o, Correspondence(P, None), intr, pose)
        try:
            length = [fmt(v) for v in length_error_ratios(geom)]
        except DomainError:
            length = ["out_of_domain"] * 3
        try:
            angle = [fmt(v) for v in angle_error_ratios(geom)]
        except DomainError:
            angle = ["out_of_domain", "out_of_domain"]
        band = abs(geom.beta_angle - OPTIMUM_BETA) <= OPTIMUM_BAND
        print(f"P{idx + 1} {fmt(geom.beta_angle)} " + " ".join(length + angle)
              + (" optimum" if band else " -"), file=out)
    if args.planar is not None:
        a, f, d, l, th, ph = args.planar
        g, t, p = planar_error_ratios(a, f, d, l, th, ph)
        print(f"planar azimuth {fmt(g)} pitch {fmt(t)} tilt {fmt(p)}", file=out)
    return EXIT_OK


def cmd_target(args, out) -> int:
    if not args.L > 0:
        raise InputError(f"--L must be positive, got {args.L}")
    vertices, control = biprism_target(args.L)
    lines = ["# biprism vertices P1..P6 (X Y Z, mm)"]
    lines += [" ".join(fmt(v) for v in p) for p in vertices]
    lines.append("# control")
    lines += [" ".join(fmt(v) for v in p) for p in control]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="parapnp", description="Pose estimation from point correspondences.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="estimate a pose from a correspondence file")
    s.add_argument("correspondences")
    s.add_argument("--intrinsics")
    s.add_argument("--solver", default="parallel-weight", choices=sorted(SOLVERS))
    s.add_argument("--control", help="layout file with a '# control' section")
    s.set_defaults(func=cmd_solve)

    m = sub.add_parser("simulate", help="run a Monte-Carlo protocol sweep")
    m.add_argument("--protocol", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--seed", type=int, required=True)
    m.add_argument("--trials", type=int)
    m.add_argument("--solvers", help="comma-separated solver labels")
    m.add_argument("--intrinsics")
    m.add_argument("--sigma", type=float)
    m.add_argument("--n-points", type=int)
    m.add_argument("--target", choices=("random_cloud", "biprism"))
    m.add_argument("--workers", type=int, default=1)
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("predict", help="error-transfer ratios for a target layout")
    r.add_argument("--layout", help="layout file; default biprism with L = 50")
    r.add_argument("--intrinsics")
    r.add_argument("--depth", type=float, required=True)
    r.add_argument("--tx", type=float, default=0.0)
    r.add_argument("--ty", type=float, default=0.0)
    r.add_argument("--euler", type=float, nargs=3, default=(0.0, 0.0, 0.0),
                   metavar=("ALPHA", "BETA", "THETA"), help="ZXZ angles in degrees")
    r.add_argument("--planar", type=float, nargs=6, metavar=("A", "F", "D", "L", "THETA", "PHI"))
    r.add_argument("--seed", type=int, help="accepted for interface uniformity; unused")
    r.set_defaults(func=cmd_predict)

    g = sub.add_parser("target", help="write the biprism layout")
    g.add_argument("--L", type=float, default=50.0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_target)
    return p


def main(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, out)
    except InputError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INPUT
    except (PoseError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=err)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
