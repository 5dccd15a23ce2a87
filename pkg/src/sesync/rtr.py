"""Truncated-Newton Riemannian trust-region method on St(d, r)^n.

The inner solver is the Steihaug-Toint truncated conjugate gradient method;
the outer loop follows the usual ratio test with radius expansion on
boundary/negative-curvature steps. No randomness is used anywhere here.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data_matrices import DataMatrices, apply_Q
from .stiefel import (
    StaircasePoint,
    as_blocks,
    feasibility_residual,
    from_blocks,
    project_tangent,
    retract,
    riemannian_hessian_vector_product,
)

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("iteration", "objective", "grad_norm", "radius", "rho", "inner_iterations", "tcg_stop",
                 "accepted")
STATUSES = ("gradient_tol", "rel_decrease", "iter_budget")
TCG_REASONS = ("negative_curvature", "boundary", "kappa_theta", "iter_cap", "model_increased")
_EPS = np.finfo(float).eps


class NumericalError(ArithmeticError):
    pass


@dataclass
class RtrConfig:
    """Trust-region settings.

    ``grad_tol`` is absolute unless ``grad_tol_relative`` is set, in which case
    the effective tolerance is ``grad_tol_relative * ||Q||`` (using the cheap
    norm bound of the data matrices).
    """

    grad_tol: float = 1e-2
    grad_tol_relative: float | None = None
    rel_func_decrease_tol: float = 1e-5
    max_outer_iters: int = 500
    max_inner_iters: int = 500
    initial_radius: float | None = None
    max_radius: float | None = None
    eta_accept: float = 0.1
    tcg_kappa: float = 0.1
    tcg_theta: float = 1.0
    preconditioner: str = "none"
    rho_regularization: float = 1e3

    def __post_init__(self):
        if not self.grad_tol > 0 or not self.rel_func_decrease_tol > 0:
            raise ValueError("tolerances must be positive")
        if self.grad_tol_relative is not None and not self.grad_tol_relative > 0:
            raise ValueError("grad_tol_relative must be positive")
        if not 0 < self.eta_accept < 0.25:
            raise ValueError("eta_accept must lie in (0, 0.25)")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise ValueError("iteration limits must be positive")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")

    def effective_grad_tol(self, dm: DataMatrices) -> float:
        if self.grad_tol_relative is None:
            return self.grad_tol
        return self.grad_tol_relative * dm.q_norm_bound

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RtrResult:
    Y_final: StaircasePoint
    objective: float
    grad_norm: float
    outer_iters: int
    hess_vec_products: int
    status: str
    accepted_objectives: list[float] = field(default_factory=list)
    max_hess_vec_per_iter: int = 0
    trace: list[tuple] = field(default_factory=list)


class _Problem:
    """Objective, gradient and Hessian at a fixed point, with cached products."""

    def __init__(self, dm: DataMatrices, Y: np.ndarray):
        self.dm = dm
        self.Y = Y
        YQ = apply_Q(dm, Y)
        self.f = float(np.sum(Y * YQ))
        self.egrad = 2.0 * YQ
        self.grad = project_tangent(Y, self.egrad, dm.d)
        self.grad_norm = float(np.linalg.norm(self.grad))

    def hess(self, Ydot: np.ndarray) -> np.ndarray:
        return riemannian_hessian_vector_product(self.dm, self.Y, Ydot, egrad=self.egrad, check=False)


def _jacobi_blocks(dm: DataMatrices) -> np.ndarray:
    """Inverse of the block diagonal of L(G^rho) + Sigma (a cheap stand-in for diag(Q))."""
    d, n = dm.d, dm.n
    Sig = dm.Sigma.toarray() if dm.d * dm.n <= 3000 else None
    blocks = np.empty((n, d, d))
    for i in range(n):
        sl = slice(i * d, (i + 1) * d)
        S = Sig[sl, sl] if Sig is not None else dm.Sigma[sl, sl].toarray()
        blocks[i] = np.linalg.inv(dm.rot_degrees[i] * np.eye(d) + S + 1e-12 * np.eye(d))
    return blocks


def truncated_cg(dm: DataMatrices, Y: np.ndarray, grad: np.ndarray, radius: float, cfg: RtrConfig,
                 hess=None, precond=None) -> tuple[np.ndarray, np.ndarray, str, int]:
    """Steihaug-Toint truncated CG on the trust-region subproblem.

    Returns ``(step, Hess[step], stop_reason, hessian_vector_products)``.
    """
    if radius <= 0:
        raise ValueError("trust-region radius must be positive")
    if hess is None:
        prob = _Problem(dm, Y)
        hess = prob.hess
    inner = lambda a, b: float(np.sum(a * b))  # noqa: E731
    eta = np.zeros_like(Y)
    Heta = np.zeros_like(Y)
    r = grad.copy()
    norm_r0 = math.sqrt(inner(r, r))
    if norm_r0 == 0.0:
        return eta, Heta, "kappa_theta", 0

    z = precond(r) if precond is not None else r
    z_r = inner(z, r)
    d_Pd = z_r
    delta = -z
    e_Pd = 0.0
    e_Pe = 0.0
    model_value = 0.0
    stop = "iter_cap"
    n_hv = 0
    target = norm_r0 * min(norm_r0 ** cfg.tcg_theta, cfg.tcg_kappa)
    for _ in range(cfg.max_inner_iters):
        Hdelta = hess(delta)
        n_hv += 1
        d_Hd = inner(delta, Hdelta)
        alpha = z_r / d_Hd if d_Hd != 0 else math.inf
        e_Pe_new = e_Pe + 2.0 * alpha * e_Pd + alpha ** 2 * d_Pd
        if d_Hd <= 0 or e_Pe_new >= radius ** 2:
            disc = max(e_Pd ** 2 + d_Pd * (radius ** 2 - e_Pe), 0.0)
            tau = (-e_Pd + math.sqrt(disc)) / d_Pd
            eta = eta + tau * delta
            Heta = Heta + tau * Hdelta
            stop = "negative_curvature" if d_Hd <= 0 else "boundary"
            break
        new_eta = eta + alpha * delta
        new_Heta = Heta + alpha * Hdelta
        new_model = inner(new_eta, grad) + 0.5 * inner(new_eta, new_Heta)
        if new_model >= model_value:
            stop = "model_increased"
            break
        eta, Heta, model_value, e_Pe = new_eta, new_Heta, new_model, e_Pe_new
        r = r + alpha * Hdelta
        norm_r = math.sqrt(inner(r, r))
        if norm_r <= target:
            stop = "kappa_theta"
            break
        z = precond(r) if precond is not None else r
        z_r_old = z_r
        z_r = inner(z, r)
        beta = z_r / z_r_old
        delta = project_tangent(Y, -z + beta * delta, dm.d)
        e_Pd = beta * (e_Pd + alpha * d_Pd)
        d_Pd = z_r + beta ** 2 * d_Pd
    return eta, Heta, stop, n_hv


def _default_radii(Y0: np.ndarray, cfg: RtrConfig) -> tuple[float, float]:
    scale = float(np.linalg.norm(Y0))
    max_radius = cfg.max_radius if cfg.max_radius is not None else scale
    initial = cfg.initial_radius if cfg.initial_radius is not None else max_radius / 8.0
    return initial, max_radius


def solve(dm: DataMatrices, Y0, cfg: RtrConfig | None = None, trace_path: str | None = None) -> RtrResult:
    """Compute a second-order critical point of F on St(d, r)^n starting at ``Y0``."""
    cfg = cfg or RtrConfig()
    d = dm.d
    Y = Y0.Y if isinstance(Y0, StaircasePoint) else np.asarray(Y0, dtype=float)
    if feasibility_residual(Y, d) > 1e-6:
        raise ValueError("initial point is not on the product Stiefel manifold")
    grad_tol = cfg.effective_grad_tol(dm)
    radius, max_radius = _default_radii(Y, cfg)

    precond = None
    if cfg.preconditioner == "jacobi":
        Pinv = _jacobi_blocks(dm)

        def precond(X, _Y=None):
            return project_tangent(state.Y, from_blocks(as_blocks(X, d) @ Pinv), d)

    state = _Problem(dm, Y)
    _check_finite(state, 0)
    accepted = [state.f]
    total_hv = 0
    max_hv = 0
    status = "iter_budget"
    rows = []
    it = 0
    for it in range(1, cfg.max_outer_iters + 1):
        if state.grad_norm <= grad_tol:
            status = "gradient_tol"
            break
        eta, Heta, stop, n_hv = truncated_cg(dm, state.Y, state.grad, radius, cfg, hess=state.hess,
                                             precond=precond)
        total_hv += n_hv
        max_hv = max(max_hv, n_hv)
        Y_prop = retract(state.Y, eta, 1.0, d)
        prop = _Problem(dm, Y_prop)
        _check_finite(prop, it)

        model_dec = -(float(np.sum(eta * state.grad)) + 0.5 * float(np.sum(eta * Heta)))
        reg = max(1.0, abs(state.f)) * _EPS * cfg.rho_regularization
        rho_num = state.f - prop.f + reg
        rho_den = model_dec + reg
        model_decreased = rho_den >= 0
        rho = rho_num / rho_den if rho_den != 0 else -math.inf

        accept = model_decreased and rho > cfg.eta_accept and prop.f <= state.f
        if not accept or not rho >= 0.25:
            radius /= 4.0
        elif rho > 0.75 and stop in ("negative_curvature", "boundary"):
            radius = min(2.0 * radius, max_radius)

        rows.append((it, prop.f if accept else state.f, prop.grad_norm if accept else state.grad_norm,
                     radius, rho, n_hv, stop, accept))
        if not accept and model_dec < reg:
            # predicted decrease is below the resolution of f: no further progress measurable
            status = "rel_decrease"
            break
        if accept:
            f_old = state.f
            state = prop
            accepted.append(state.f)
            rel = (f_old - state.f) / max(abs(f_old), 1e-300)
            if rel < cfg.rel_func_decrease_tol:
                status = "rel_decrease"
                break
        if radius < 1e-15 * max_radius:
            log.debug("trust-region radius collapsed at iteration %d", it)
    else:
        status = "gradient_tol" if state.grad_norm <= grad_tol else "iter_budget"

    if trace_path is not None:
        with open(trace_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            w.writerows(rows)

    return RtrResult(
        Y_final=StaircasePoint(state.Y, d),
        objective=state.f,
        grad_norm=state.grad_norm,
        outer_iters=it,
        hess_vec_products=total_hv,
        status=status,
        accepted_objectives=accepted,
        max_hess_vec_per_iter=max_hv,
        trace=rows,
    )


def _check_finite(p: _Problem, it: int):
    if not (math.isfinite(p.f) and math.isfinite(p.grad_norm)):
        raise NumericalError(f"non-finite objective or gradient at iteration {it}")
