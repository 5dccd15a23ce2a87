"""Riemannian Staircase: climb rank levels r0, r0+1, ... until a rank-deficient
(or certified) second-order critical point is found."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import rtr
from .data_matrices import DataMatrices, evaluate_objective
from .stiefel import StaircasePoint, lift, random_tangent, retract

log = logging.getLogger(__name__)


@dataclass
class StaircaseConfig:
    r0: int = 5
    r_max: int | None = None  # defaults to d*n + 1
    rank_tol: float = 1e-6
    escape_perturbation: float = 1e-3
    certify_each_level: bool = True
    seed: int = 0

    def resolve_r_max(self, d: int, n: int) -> int:
        return self.r_max if self.r_max is not None else d * n + 1

    def validate(self, d: int, n: int):
        r_max = self.resolve_r_max(d, n)
        if not d + 1 <= self.r0 <= r_max:
            raise ValueError(f"need d+1 <= r0 <= r_max, got d={d}, r0={self.r0}, r_max={r_max}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LevelRecord:
    r: int
    objective: float
    grad_norm: float
    rank: int
    status: str
    outer_iters: int
    hess_vec_products: int
    start_objective: float
    min_eig: float | None = None
    certified: bool | None = None
    escape: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StaircaseResult:
    Y: StaircasePoint
    history: list[LevelRecord] = field(default_factory=list)
    reached_r_max: bool = False
    level_certificate: object | None = None
    trace: list[tuple] = field(default_factory=list)  # (r, phase, *rtr trace row)


def numerical_rank(Y: np.ndarray, rank_tol: float = 1e-6) -> int:
    """Number of singular values above ``rank_tol * sigma_max``."""
    Y = np.asarray(Y, dtype=float)
    if Y.size == 0:
        return 0
    s = np.linalg.svd(Y, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def _escape_along(dm: DataMatrices, Y: np.ndarray, direction: np.ndarray, f0: float,
                  alpha0: float, min_alpha: float = 1e-8) -> np.ndarray | None:
    """Backtrack along a tangent direction at the lifted point until F decreases."""
    alpha = alpha0
    while alpha >= min_alpha:
        Yp = retract(Y, direction, alpha, dm.d)
        if evaluate_objective(dm, Yp) < f0:
            return Yp
        alpha *= 0.5
    return None


def riemannian_staircase(
    dm: DataMatrices,
    Y0,
    cfg: StaircaseConfig | None = None,
    rtr_cfg: rtr.RtrConfig | None = None,
    polish_cfg: rtr.RtrConfig | None = None,
    certifier: Callable | None = None,
) -> StaircaseResult:
    """Run the staircase from ``Y0`` in St(d, r0)^n.

    ``certifier(dm, Y)`` should return an object with ``certified``,
    ``min_eig_C`` and ``min_eig_vector`` attributes; it is consulted when
    ``cfg.certify_each_level`` is set and supplies the saddle-escape direction.
    """
    cfg = cfg or StaircaseConfig()
    d, n = dm.d, dm.n
    Y = Y0.Y if isinstance(Y0, StaircasePoint) else np.asarray(Y0, dtype=float)
    cfg.validate(d, n)
    if Y.shape[0] != cfg.r0:
        raise ValueError(f"initial point has {Y.shape[0]} rows, expected r0 = {cfg.r0}")
    r_max = cfg.resolve_r_max(d, n)
    rng = np.random.default_rng(cfg.seed)
    history: list[LevelRecord] = []
    trace: list[tuple] = []
    cert = None

    def done(point, reached, certificate):
        return StaircaseResult(point, history, reached, certificate, trace)

    r = cfg.r0
    while True:
        f_start = evaluate_objective(dm, Y)
        res = rtr.solve(dm, Y, rtr_cfg)
        trace.extend((r, "coarse") + row for row in res.trace)
        if polish_cfg is not None and res.grad_norm > polish_cfg.effective_grad_tol(dm):
            polished = rtr.solve(dm, res.Y_final, polish_cfg)
            trace.extend((r, "polish") + row for row in polished.trace)
            polished.outer_iters += res.outer_iters
            polished.hess_vec_products += res.hess_vec_products
            res = polished
        Ystar = res.Y_final.Y
        rank = numerical_rank(Ystar, cfg.rank_tol)
        rec = LevelRecord(r, res.objective, res.grad_norm, rank, res.status, res.outer_iters,
                          res.hess_vec_products, f_start)
        history.append(rec)
        log.info("level r=%d: F=%.6e |grad|=%.3e rank=%d (%s)", r, res.objective, res.grad_norm, rank,
                 res.status)

        if rank < r:
            return done(res.Y_final, False, None)

        cert = None
        if cfg.certify_each_level and certifier is not None:
            cert = certifier(dm, Ystar)
            rec.min_eig = float(cert.min_eig_C)
            rec.certified = bool(cert.certified)
            if cert.certified:
                return done(res.Y_final, False, cert)

        if r >= r_max:
            return done(res.Y_final, True, cert)

        # lift with a zero row: F and feasibility are unchanged
        r += 1
        Ylift = lift(Ystar, r)
        f0 = res.objective
        Ynext = None
        if cert is not None and cert.min_eig_vector is not None and cert.min_eig_C < 0:
            direction = np.zeros_like(Ylift)
            direction[-1, :] = cert.min_eig_vector
            Ynext = _escape_along(dm, Ylift, direction, f0, alpha0=1.0)
            if Ynext is not None:
                rec.escape = "eigenvector"
        if Ynext is None:
            direction = random_tangent(Ylift, d, rng)
            step = cfg.escape_perturbation * float(np.linalg.norm(Ylift))
            Ynext = retract(Ylift, direction, step, d)
            rec.escape = "random"
        Y = Ynext
