"""Command-line front end: generate, solve, certify and evaluate pose graphs.

Exit codes: 0 certified (or success), 3 feasible but uncertified, 1 input
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np
from threadpoolctl import threadpool_limits

from . import metrics
from .data_matrices import DataMatrices, build, evaluate_objective
from .g2o import G2OParseError, parse_g2o, write_g2o
from .graph import GraphError, Pose
from .rtr import RtrConfig
from .solution import (
    SCHEMA_VERSION,
    SeSyncConfig,
    certify,
    json_safe,
    kkt_residual,
    read_solution_json,
    se_sync,
    write_solution_json,
    write_tum,
)
from .staircase import StaircaseConfig
from .synthetic import CubeConfig, generate_cube, read_ground_truth, write_ground_truth

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_USAGE = 2
EXIT_UNCERTIFIED = 3

log = logging.getLogger("sesync")


class InputError(Exception):
    pass


def _probability(text: str) -> float:
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= p <= 1.0:
        raise argparse.ArgumentTypeError(f"probability must lie in [0, 1], got {p}")
    return p


def _positive(kind):
    def parse(text: str):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return parse


def _nonnegative(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sesync", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="sample a cube-world dataset")
    gen.add_argument("--s", type=_positive(int), default=10, help="side length in poses")
    gen.add_argument("--kappa", type=_nonnegative, default=16.67)
    gen.add_argument("--tau", type=_positive(float), default=75.0)
    gen.add_argument("--plc", type=_probability, default=0.1, help="loop-closure probability")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--dim", type=int, choices=(2, 3), default=3, help="3 = cube, 2 = planar grid")
    gen.add_argument("--noiseless", action="store_true")
    gen.add_argument("-o", "--output", default=".", help="output directory")

    def solver_flags(p):
        p.add_argument("--r0", type=_positive(int), default=5)
        p.add_argument("--rmax", type=_positive(int), default=None)
        p.add_argument("--grad-tol", type=_positive(float), default=1e-2)
        p.add_argument("--rel-tol", type=_positive(float), default=1e-5)
        p.add_argument("--max-iters", type=_positive(int), default=500)
        p.add_argument("--eig-tol", type=_positive(float), default=1e-5)
        p.add_argument("--method", choices=("chol", "qr"), default="chol")
        p.add_argument("--init", choices=("random", "odometry"), default="random")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=_positive(int), default=None, help="cap on BLAS threads")

    sol = sub.add_parser("solve", help="solve and certify a g2o pose graph")
    sol.add_argument("input", help="g2o file")
    solver_flags(sol)
    sol.add_argument("--trace", default=None, help="write a per-iteration CSV trace here")
    sol.add_argument("-o", "--output", default=".", help="output directory")

    cert = sub.add_parser("certify", help="check the certificate of an existing solution")
    cert.add_argument("input", help="g2o file")
    cert.add_argument("solution", help="solution.json")
    cert.add_argument("--eig-tol", type=_positive(float), default=1e-5)
    cert.add_argument("--method", choices=("chol", "qr"), default="chol")
    cert.add_argument("--threads", type=_positive(int), default=None)

    ev = sub.add_parser("evaluate", help="compare a solution against ground truth")
    ev.add_argument("solution", help="solution.json")
    ev.add_argument("ground_truth", help="ground_truth.json or a g2o file with VERTEX records")
    ev.add_argument("--threads", type=_positive(int), default=None)
    return parser


def _load_graph(path: str):
    try:
        return parse_g2o(path)
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except (G2OParseError, GraphError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _config_from_args(args) -> SeSyncConfig:
    rtr_cfg = RtrConfig(grad_tol=args.grad_tol, rel_func_decrease_tol=args.rel_tol,
                        max_outer_iters=args.max_iters)
    base = SeSyncConfig()
    return SeSyncConfig(
        staircase=StaircaseConfig(r0=args.r0, r_max=args.rmax, seed=args.seed),
        rtr=rtr_cfg,
        polish=replace(base.polish, max_outer_iters=max(args.max_iters, base.polish.max_outer_iters)),
        method="cholesky" if args.method == "chol" else "qr",
        init=args.init,
        seed=args.seed,
        eig_tol=args.eig_tol,
        trace_path=getattr(args, "trace", None),
    )


def _emit(report: dict):
    print(json.dumps(json_safe(report), indent=2, allow_nan=False))


def cmd_generate(args) -> int:
    cfg = CubeConfig(s=args.s, p_lc=args.plc, kappa=args.kappa, tau=args.tau, seed=args.seed,
                     d=args.dim, noiseless=args.noiseless)
    g, truth = generate_cube(cfg)
    os.makedirs(args.output, exist_ok=True)
    g2o_path = os.path.join(args.output, "dataset.g2o")
    gt_path = os.path.join(args.output, "ground_truth.json")
    write_g2o(g, g2o_path)
    write_ground_truth(gt_path, truth, cfg)
    _emit({"schema": SCHEMA_VERSION, "command": "generate", "config": cfg.to_dict(), "n": g.n, "m": g.m,
           "files": [g2o_path, gt_path]})
    return EXIT_OK


def cmd_solve(args) -> int:
    g = _load_graph(args.input)
    try:
        cfg = _config_from_args(args)
        cfg.staircase.validate(g.d, g.n)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    sol = se_sync(g, cfg)
    os.makedirs(args.output, exist_ok=True)
    config = {"input": os.path.abspath(args.input), **cfg.to_dict()}
    config["staircase"]["r_max"] = cfg.staircase.resolve_r_max(g.d, g.n)
    json_path = os.path.join(args.output, "solution.json")
    tum_path = os.path.join(args.output, "trajectory.tum")
    write_solution_json(sol, json_path, g.vertex_ids, config)
    write_tum(sol.poses, tum_path)
    _emit({
        "schema": SCHEMA_VERSION,
        "command": "solve",
        "n": g.n,
        "m": g.m,
        "objective": sol.objective,
        "sdp_lower_bound": sol.sdp_lower_bound,
        "suboptimality_gap": sol.suboptimality_gap,
        "relative_gap": sol.relative_gap,
        "certified": sol.certified,
        "min_eig_C": sol.diagnostics["min_eig_C"],
        "staircase_history": sol.staircase_history,
        "timings": sol.timings,
        "config": config,
        "files": [json_path, tum_path],
    })
    return EXIT_OK if sol.certified else EXIT_UNCERTIFIED


def _rotations(poses: list[Pose]) -> np.ndarray:
    return np.hstack([p.R for p in poses])


def _load_solution(path: str) -> tuple[list[Pose], dict]:
    try:
        return read_solution_json(path)
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except (ValueError, KeyError) as exc:
        raise InputError(f"{path}: malformed solution file ({exc})") from None


def cmd_certify(args) -> int:
    g = _load_graph(args.input)
    poses, _ = _load_solution(args.solution)
    if len(poses) != g.n or poses[0].d != g.d:
        raise InputError(f"solution has {len(poses)} poses of dimension {poses[0].d}, graph has {g.n} of {g.d}")
    dm: DataMatrices = build(g, "cholesky" if args.method == "chol" else "qr")
    R = _rotations(poses)
    cert = certify(dm, R, args.eig_tol)
    _emit({
        "schema": SCHEMA_VERSION,
        "command": "certify",
        "objective": evaluate_objective(dm, R),
        "min_eig_C": cert.min_eig_C,
        "tolerance_used": cert.tolerance_used,
        "lanczos_status": cert.status,
        "kkt_residual": kkt_residual(dm, R, cert.lambda_blocks),
        "certified": cert.certified,
        "config": {"eig_tol": args.eig_tol, "method": args.method},
    })
    return EXIT_OK if cert.certified else EXIT_UNCERTIFIED


def _load_truth(path: str) -> list[Pose]:
    try:
        if path.endswith(".json"):
            return read_ground_truth(path)
        g = _load_graph(path)
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except (ValueError, KeyError) as exc:
        raise InputError(f"{path}: {exc}") from None
    if len(g.initial_estimates) != g.n:
        raise InputError(f"{path}: ground truth needs a VERTEX record for every pose")
    return [g.initial_estimates[i] for i in range(g.n)]


def cmd_evaluate(args) -> int:
    poses, report = _load_solution(args.solution)
    truth = _load_truth(args.ground_truth)
    if len(poses) != len(truth) or poses[0].d != truth[0].d:
        raise InputError(f"solution has {len(poses)} poses, ground truth has {len(truth)}")
    out = metrics.evaluate(_rotations(poses), np.array([p.t for p in poses]), _rotations(truth),
                           np.array([p.t for p in truth]))
    sdp = report.get("sdp_lower_bound")
    obj = report.get("objective")
    if sdp is not None and obj is not None:
        out["relative_suboptimality"] = (obj - sdp) / sdp if sdp > 0 else obj - sdp
    out["alignment"] = "rotation by the SO(d)-optimal G, then centroid shift"
    _emit({"schema": SCHEMA_VERSION, "command": "evaluate", **out})
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "certify": cmd_certify, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = getattr(args, "threads", None)
    try:
        with threadpool_limits(limits=threads):
            return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
