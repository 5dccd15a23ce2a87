"""Rounding, certification, translation recovery and the end-to-end solver.

The pipeline: build the data matrices, run the Riemannian Staircase, round the
low-rank factor to rotations, recover the translations in closed form and
check the dual certificate ``C = Q - Lambda`` for positive semidefiniteness.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import rtr
from .data_matrices import DataMatrices, apply_Q, build, dense_Q, evaluate_objective
from .g2o import quaternion_to_rotation, rotation_to_quaternion
from .graph import MeasurementGraph, Pose, angle_2d, chain_poses, rotation_2d
from .staircase import StaircaseConfig, riemannian_staircase
from .stiefel import StaircasePoint, as_blocks, block_sym_products, from_blocks, lift, random_point

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_EIG_TOL = 1e-5


@dataclass(eq=False)
class Certificate:
    """Dual certificate data for a candidate solution.

    ``lambda_blocks`` holds the n symmetric d x d blocks of the multiplier;
    ``certified`` is exactly ``min_eig_C >= -tolerance_used``.
    """

    lambda_blocks: np.ndarray
    min_eig_C: float
    min_eig_vector: np.ndarray | None
    sdp_value: float | None
    tolerance_used: float
    status: str = "converged"  # or "lanczos_no_convergence"
    matvecs: int = 0

    @property
    def certified(self) -> bool:
        return self.status == "converged" and self.min_eig_C >= -self.tolerance_used

    @property
    def lambda_star(self) -> sp.csr_matrix:
        return sp.block_diag(list(self.lambda_blocks), format="csr")


@dataclass(eq=False)
class CertifiedSolution:
    poses: list[Pose]
    objective: float
    sdp_lower_bound: float
    suboptimality_gap: float
    certified: bool
    staircase_history: list[dict]
    timings: dict[str, float]
    certificate: Certificate | None = None
    dual_lower_bound: float | None = None
    rank_level: int = 0
    reached_r_max: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def rotations(self) -> np.ndarray:
        """Rotations as a d x dn matrix."""
        return np.hstack([p.R for p in self.poses])

    @property
    def translations(self) -> np.ndarray:
        return np.array([p.t for p in self.poses])

    @property
    def relative_gap(self) -> float:
        return self.suboptimality_gap / max(1.0, abs(self.sdp_lower_bound))


# --- rounding -------------------------------------------------------------


def nearest_rotation(M: np.ndarray) -> np.ndarray:
    """Closest element of SO(d) to M in the Frobenius norm (maximizes <G, M>)."""
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M)
    if s[-1] <= 1e-12 * max(s[0], 1e-300):
        log.debug("nearest_rotation: input is rank deficient (sigma_min = %.3e)", s[-1])
    Xi = np.ones(M.shape[0])
    Xi[-1] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    return (U * Xi) @ Vt


def round_solution(Ystar, d: int | None = None) -> np.ndarray:
    """Round a staircase factor to a d x dn matrix of rotations."""
    if isinstance(Ystar, StaircasePoint):
        d = Ystar.d
        Y = Ystar.Y
    else:
        Y = np.asarray(Ystar, dtype=float)
        if d is None:
            raise ValueError("block size d is required for a raw matrix")
    n = Y.shape[1] // d
    _, s, Vt = np.linalg.svd(Y, full_matrices=False)
    R = s[:d, None] * Vt[:d]
    dets = np.linalg.det(as_blocks(R, d))
    if np.sum(dets > 0) < math.ceil(n / 2):
        R[-1] *= -1.0
    blocks = as_blocks(R, d)
    U, _, Vt_b = np.linalg.svd(blocks)
    Xi = np.ones((n, d))
    Xi[:, -1] = np.where(np.linalg.det(U @ Vt_b) < 0, -1.0, 1.0)
    return from_blocks((U * Xi[:, None, :]) @ Vt_b)


# --- certificate ----------------------------------------------------------


class _BudgetExceeded(Exception):
    pass


def build_lambda_star(dm: DataMatrices, R: np.ndarray) -> np.ndarray:
    """Blocks of SymBlockDiag(Q R^T R) as an (n, d, d) array.

    The i-th diagonal block of ``Q R^T R`` is ``(R Q)_i^T R_i``.
    """
    R = np.asarray(R, dtype=float)
    return block_sym_products(apply_Q(dm, R), R, dm.d)


def _apply_C(dm: DataMatrices, lam: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Rows of X (k x dn) multiplied by C = Q - Lambda."""
    return apply_Q(dm, X) - from_blocks(as_blocks(X, dm.d) @ lam)


def kkt_residual(dm: DataMatrices, R: np.ndarray, lam: np.ndarray | None = None) -> float:
    """Frobenius norm of ``C R^T``."""
    if lam is None:
        lam = build_lambda_star(dm, R)
    return float(np.linalg.norm(_apply_C(dm, lam, np.asarray(R, dtype=float))))


def certificate_shift(dm: DataMatrices, lam: np.ndarray) -> float:
    """Upper bound on lambda_max(C): ||Q|| bound plus the largest multiplier norm."""
    lam_norm = float(np.max(np.linalg.norm(lam, ord=2, axis=(1, 2)))) if len(lam) else 0.0
    return dm.q_norm_bound + lam_norm


def certify(dm: DataMatrices, R: np.ndarray, eig_tol: float = DEFAULT_EIG_TOL,
            v0: np.ndarray | None = None, max_matvecs: int | None = None,
            lanczos_tol: float = 1e-12, sdp_value: float | None = None) -> Certificate:
    """Smallest eigenpair of the certificate matrix by Lanczos on ``sigma I - C``.

    ``R`` may be the rounded d x dn estimate or an r x dn staircase factor.
    The certificate passes when ``lambda_min(C) >= -eig_tol * ||Q||`` (with the
    cheap norm bound standing in for ||Q||).
    """
    R = np.asarray(R, dtype=float)
    lam = build_lambda_star(dm, R)
    dn = dm.d * dm.n
    sigma = certificate_shift(dm, lam)
    tol_used = eig_tol * dm.q_norm_bound
    count = [0]
    budget = max_matvecs if max_matvecs is not None else 10 * dn

    def matmat(X):
        X = np.asarray(X, dtype=float)
        squeeze = X.ndim == 1
        Xr = X.reshape(dn, -1).T
        if count[0] + Xr.shape[0] > budget:
            raise _BudgetExceeded
        count[0] += Xr.shape[0]
        out = (sigma * Xr - _apply_C(dm, lam, Xr)).T
        return out[:, 0] if squeeze else out

    if dn <= 2:
        # ARPACK needs at least a few dimensions; tiny problems go dense.
        C = dense_Q(dm) - sp.block_diag(list(lam)).toarray()
        w, V = np.linalg.eigh(0.5 * (C + C.T))
        return Certificate(lam, float(w[0]), V[:, 0], sdp_value, tol_used, "converged", dn)

    op = spla.LinearOperator((dn, dn), matvec=matmat, matmat=matmat, dtype=float)
    if v0 is None:
        v0 = np.random.default_rng(0).standard_normal(dn)
    ncv = min(dn, 40)
    status = "converged"
    try:
        theta, vec = spla.eigsh(op, k=1, which="LA", v0=v0, ncv=ncv, tol=lanczos_tol,
                                maxiter=max(budget // ncv, 1))
        min_eig, vec = sigma - float(theta[0]), vec[:, 0]
    except spla.ArpackNoConvergence as exc:
        status = "lanczos_no_convergence"
        if len(exc.eigenvalues):
            min_eig, vec = sigma - float(exc.eigenvalues[0]), exc.eigenvectors[:, 0]
        else:
            min_eig, vec = math.nan, None
    except _BudgetExceeded:
        # the product budget ran out mid-restart: no usable Ritz pair
        status = "lanczos_no_convergence"
        min_eig, vec = math.nan, None
    return Certificate(lam, min_eig, vec, sdp_value, tol_used, status, count[0])


def dense_min_eig_C(dm: DataMatrices, R: np.ndarray) -> float:
    """Dense-eigensolver oracle for lambda_min(C) (small problems only)."""
    lam = build_lambda_star(dm, R)
    C = dense_Q(dm) - sp.block_diag(list(lam)).toarray()
    return float(np.linalg.eigvalsh(0.5 * (C + C.T))[0])


# --- translations and bounds ------------------------------------------------


def recover_translations(dm: DataMatrices, R: np.ndarray) -> np.ndarray:
    """Optimal translations (n x d) for fixed rotations, with t_1 = 0."""
    R = np.asarray(R, dtype=float)
    n, d = dm.n, dm.d
    if n == 1:
        return np.zeros((1, d))
    # optimality: L(W^tau) X = -V R^T, solved with the last vertex anchored
    rhs = -np.asarray(dm.V @ R.T)
    X = np.zeros((n, d))
    X[:-1] = dm.solve_reduced_normal(rhs[:-1]).reshape(n - 1, d)
    return X - X[0]


def suboptimality_bound(objective: float, sdp_value: float) -> float:
    return float(objective - sdp_value)


# --- pipeline ---------------------------------------------------------------


def paper_rtr_config() -> rtr.RtrConfig:
    """Coarse trust-region settings used at every staircase level."""
    return rtr.RtrConfig(grad_tol=1e-2, rel_func_decrease_tol=1e-5, max_outer_iters=500, max_inner_iters=500)


def polish_rtr_config() -> rtr.RtrConfig:
    """Tight settings used to polish each level before rank and certificate tests."""
    return rtr.RtrConfig(grad_tol_relative=1e-9, rel_func_decrease_tol=1e-14, max_outer_iters=500,
                         max_inner_iters=500)


@dataclass
class SeSyncConfig:
    staircase: StaircaseConfig = field(default_factory=StaircaseConfig)
    rtr: rtr.RtrConfig = field(default_factory=paper_rtr_config)
    polish: rtr.RtrConfig | None = field(default_factory=polish_rtr_config)
    method: str = "cholesky"
    init: str = "random"
    seed: int = 0
    eig_tol: float = DEFAULT_EIG_TOL
    rel_gap_tol: float = 1e-3
    max_lanczos_matvecs: int | None = None
    trace_path: str | None = None

    def __post_init__(self):
        if self.init not in ("random", "odometry"):
            raise ValueError(f"unknown initialization {self.init!r}")
        if not self.eig_tol > 0:
            raise ValueError("eig_tol must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def initial_point(g: MeasurementGraph, r: int, init: str = "random", seed: int = 0) -> np.ndarray:
    if init == "random":
        return random_point(g.d, r, g.n, seed).Y
    if init == "odometry":
        R = np.hstack([p.R for p in chain_poses(g)])
        return lift(R, r)
    raise ValueError(f"unknown initialization {init!r}")


def anchor_first_pose(R: np.ndarray, t: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Apply the global motion taking pose 1 to the identity."""
    R1t = R[:, :d].T
    return R1t @ R, (t - t[0]) @ R1t.T


def se_sync(g: MeasurementGraph, cfg: SeSyncConfig | None = None) -> CertifiedSolution:
    """Certifiably solve the pose-graph problem on ``g``."""
    cfg = cfg or SeSyncConfig()
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    dm = build(g, cfg.method)
    timings["build"] = time.perf_counter() - t0
    d, n = g.d, g.n

    def certifier(dm_, Y):
        return certify(dm_, Y, cfg.eig_tol, max_matvecs=cfg.max_lanczos_matvecs)

    t1 = time.perf_counter()
    Y0 = initial_point(g, cfg.staircase.r0, cfg.init, cfg.seed)
    stair = riemannian_staircase(dm, Y0, cfg.staircase, cfg.rtr, cfg.polish, certifier)
    if cfg.trace_path is not None:
        write_trace(stair.trace, cfg.trace_path)
    timings["staircase"] = time.perf_counter() - t1
    Ystar = stair.Y
    sdp_value = evaluate_objective(dm, Ystar.Y)

    t2 = time.perf_counter()
    R = round_solution(Ystar)
    t_hat = recover_translations(dm, R)
    R, t_hat = anchor_first_pose(R, t_hat, d)
    timings["rounding"] = time.perf_counter() - t2

    t3 = time.perf_counter()
    cert = certify(dm, R, cfg.eig_tol, sdp_value=sdp_value, max_matvecs=cfg.max_lanczos_matvecs)
    timings["certification"] = time.perf_counter() - t3
    timings["total"] = time.perf_counter() - t0

    objective = evaluate_objective(dm, R)
    gap = suboptimality_bound(objective, sdp_value)
    certified = cert.certified and gap <= cfg.rel_gap_tol * max(1.0, abs(sdp_value))
    dual = objective + d * n * min(cert.min_eig_C, 0.0) if math.isfinite(cert.min_eig_C) else None
    poses = [Pose(t_hat[i], R[:, i * d:(i + 1) * d]) for i in range(n)]
    diagnostics = {
        "min_eig_C": cert.min_eig_C,
        "eig_tolerance": cert.tolerance_used,
        "certificate_status": cert.status,
        "lanczos_matvecs": cert.matvecs,
        "kkt_residual": kkt_residual(dm, R, cert.lambda_blocks),
        "q_norm_bound": dm.q_norm_bound,
    }
    return CertifiedSolution(
        poses=poses,
        objective=objective,
        sdp_lower_bound=sdp_value,
        suboptimality_gap=gap,
        certified=bool(certified),
        staircase_history=[h.to_dict() for h in stair.history],
        timings=timings,
        certificate=cert,
        dual_lower_bound=dual,
        rank_level=Ystar.rank_level,
        reached_r_max=stair.reached_r_max,
        diagnostics=diagnostics,
    )


# --- serialization ----------------------------------------------------------


def write_trace(rows: list[tuple], path: str | os.PathLike):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("level", "phase") + rtr.TRACE_COLUMNS)
        w.writerows(rows)


def _pose_record(p: Pose) -> dict:
    rec = {"t": [float(x) for x in p.t]}
    if p.d == 2:
        rec["theta"] = angle_2d(p.R)
    else:
        rec["q"] = [float(x) for x in rotation_to_quaternion(p.R)]  # qx qy qz qw
    return rec


def solution_to_dict(sol: CertifiedSolution, vertex_ids=None, config: dict | None = None) -> dict:
    ids = list(vertex_ids) if vertex_ids is not None else list(range(len(sol.poses)))
    out = {
        "schema": SCHEMA_VERSION,
        "dimension": sol.poses[0].d if sol.poses else None,
        "certified": sol.certified,
        "objective": sol.objective,
        "sdp_lower_bound": sol.sdp_lower_bound,
        "suboptimality_gap": sol.suboptimality_gap,
        "relative_gap": sol.relative_gap,
        "dual_lower_bound": sol.dual_lower_bound,
        "rank_level": sol.rank_level,
        "reached_r_max": sol.reached_r_max,
        "diagnostics": sol.diagnostics,
        "timings": sol.timings,
        "staircase_history": sol.staircase_history,
        "poses": [dict(id=_jsonable(v), **_pose_record(p)) for v, p in zip(ids, sol.poses)],
    }
    if config is not None:
        out["config"] = config
    return out


def _jsonable(v):
    return v.item() if isinstance(v, np.generic) else v


def json_safe(obj):
    """Recursively replace non-finite floats by None so the output is strict JSON."""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    obj = _jsonable(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_solution_json(sol: CertifiedSolution, path: str | os.PathLike, vertex_ids=None,
                        config: dict | None = None):
    with open(path, "w") as fh:
        json.dump(json_safe(solution_to_dict(sol, vertex_ids, config)), fh, indent=2, allow_nan=False)


def read_solution_json(path: str | os.PathLike) -> tuple[list[Pose], dict]:
    """Poses and the raw report from a solution file written by :func:`write_solution_json`."""
    with open(path) as fh:
        data = json.load(fh)
    if data.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported solution schema {data.get('schema')!r}")
    poses = []
    for rec in data["poses"]:
        R = rotation_2d(rec["theta"]) if "theta" in rec else quaternion_to_rotation(rec["q"])
        poses.append(Pose(np.array(rec["t"], dtype=float), R))
    return poses, data


def write_tum(poses: list[Pose], path: str | os.PathLike):
    """TUM trajectory: ``timestamp tx ty tz qx qy qz qw`` with the index as timestamp.

    Planar poses are embedded in 3-D with z = 0 and a rotation about the z axis.
    """
    with open(path, "w") as fh:
        for i, p in enumerate(poses):
            t, R = p.t, p.R
            if p.d == 2:
                t = np.array([t[0], t[1], 0.0])
                R3 = np.eye(3)
                R3[:2, :2] = R
                R = R3
            q = rotation_to_quaternion(R)
            fh.write(" ".join([str(i)] + [repr(float(x)) for x in t] + [repr(float(x)) for x in q]) + "\n")


def read_tum(path: str | os.PathLike) -> list[tuple[float, np.ndarray, np.ndarray]]:
    """Inverse of :func:`write_tum`: (timestamp, t, quaternion) triples."""
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.strip() and not line.startswith("#"):
                vals = [float(x) for x in line.split()]
                rows.append((vals[0], np.array(vals[1:4]), np.array(vals[4:8])))
    return rows
