"""Sparse data matrices of the rotation-only problem and matrix-free products with Q.

The data matrix ``Q = L(G^rho) + Q_tau`` is dense in general, so it is never
formed. Products ``Y Q`` are evaluated right-to-left from sparse factors:

    Q_tau = T^T Omega^{1/2} Pi Omega^{1/2} T

where ``Pi`` projects onto ker(A Omega^{1/2}). ``Pi`` is applied either with a
cached sparse Cholesky factor of ``A_red Omega A_red^T`` (two triangular
solves) or by a least-squares solve against a cached orthogonal factorization
of ``Omega^{1/2} A_red^T``.
"""

from __future__ import annotations

import os
from functools import cached_property

import numpy as np
import scipy.io
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .graph import MeasurementGraph, incidence_matrix, reduced_incidence_matrix, weight_graph_laplacian

DENSE_ORACLE_MAX_DIM = 2000
METHODS = ("cholesky", "qr")


class FactorizationError(RuntimeError):
    pass


def _method_name(method: str) -> str:
    if method in ("chol", "cholesky"):
        return "cholesky"
    if method == "qr":
        return "qr"
    raise ValueError(f"unknown projection method {method!r}; expected one of {METHODS}")


def fill_reducing_ordering(M: sp.spmatrix) -> np.ndarray:
    """Minimum-degree ordering of a symmetric matrix, as a permutation vector."""
    M = sp.csc_matrix(M)
    if M.shape[0] <= 1:
        return np.arange(M.shape[0])
    lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options=dict(SymmetricMode=True))
    # perm_c[i] is the new position of original column i
    return np.argsort(lu.perm_c)


def sparse_cholesky(M: sp.spmatrix, order: np.ndarray) -> sp.csr_matrix:
    """Lower-triangular L with ``M[order][:, order] = L L^T`` for SPD ``M``."""
    Mp = sp.csc_matrix(M)[order][:, order].tocsc()
    k = Mp.shape[0]
    if k == 0:
        return sp.csr_matrix((0, 0))
    lu = spla.splu(Mp, permc_spec="NATURAL", diag_pivot_thresh=0.0,
                   options=dict(SymmetricMode=True))
    if not (np.array_equal(lu.perm_r, np.arange(k)) and np.array_equal(lu.perm_c, np.arange(k))):
        raise FactorizationError("pivoting occurred in a symmetric positive-definite factorization")
    pivots = lu.U.diagonal()
    if np.any(~np.isfinite(pivots)) or np.any(pivots <= 0):
        raise FactorizationError("matrix is not numerically positive definite")
    L = lu.L @ sp.diags(np.sqrt(pivots))
    return sp.csr_matrix(L)


class DataMatrices:
    """All cached operators defining products with the data matrix ``Q``.

    Attributes follow the usual names: ``rot_connection_laplacian`` (dn x dn),
    ``T`` (m x dn), ``Omega`` (m x m diagonal), ``V`` (n x dn), ``Sigma``
    (dn x dn block diagonal), ``A_reduced`` ((n-1) x m), ``L_factor`` and
    ``L_order`` with ``(A Omega A^T)[order][:, order] = L L^T``, and
    ``tran_laplacian`` (n x n).
    """

    def __init__(self, g: MeasurementGraph, method: str = "cholesky"):
        self.graph = g
        self.d, self.n, self.m = g.d, g.n, g.m
        self.method = _method_name(method)
        d, n, m = self.d, self.n, self.m

        tails, heads = g.tails(), g.heads()
        taus, kappas = g.taus(), g.kappas()
        t_meas = np.array([e.translation for e in g.edges]).reshape(m, d)
        R_meas = np.array([e.rotation for e in g.edges]).reshape(m, d, d)

        self.tau = taus
        self.kappa = kappas
        self.Omega = sp.diags(taus).tocsr()
        self.sqrt_tau = np.sqrt(taus)

        # L(G^rho): diagonal blocks delta_i I, off-diagonal -kappa R_ij and its transpose
        delta = np.bincount(tails, kappas, minlength=n) + np.bincount(heads, kappas, minlength=n)
        self.rot_degrees = delta
        a, b = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
        a, b = a.ravel(), b.ravel()
        off_rows = (tails[:, None] * d + a[None, :]).ravel()
        off_cols = (heads[:, None] * d + b[None, :]).ravel()
        off_vals = (-kappas[:, None, None] * R_meas).reshape(m, d * d).ravel()
        diag_idx = np.arange(n * d)
        rows = np.concatenate([off_rows, off_cols, diag_idx])
        cols = np.concatenate([off_cols, off_rows, diag_idx])
        vals = np.concatenate([off_vals, off_vals, np.repeat(delta, d)])
        self.rot_connection_laplacian = sp.csr_matrix((vals, (rows, cols)), shape=(d * n, d * n))

        # T: row e holds -t_e^T in the block of the edge's tail
        t_rows = np.repeat(np.arange(m), d)
        t_cols = (tails[:, None] * d + np.arange(d)[None, :]).ravel()
        self.T = sp.csr_matrix((-t_meas.ravel(), (t_rows, t_cols)), shape=(m, d * n))

        self.A = incidence_matrix(g)
        self.A_reduced = reduced_incidence_matrix(g)
        self.V = sp.csr_matrix(self.A @ self.Omega @ self.T)
        self.Sigma = sp.csr_matrix(self.T.T @ self.Omega @ self.T)
        self.tran_laplacian = weight_graph_laplacian(g, "tau")

        self.sqrt_Omega_T = sp.csr_matrix(sp.diags(self.sqrt_tau) @ self.T)
        self.sqrt_Omega_T_t = sp.csr_matrix(self.sqrt_Omega_T.T)
        self.weighted_A_reduced = sp.csr_matrix(self.A_reduced @ sp.diags(self.sqrt_tau))
        self.weighted_A_reduced_t = sp.csr_matrix(self.weighted_A_reduced.T)

        reduced_normal = sp.csc_matrix(self.A_reduced @ self.Omega @ self.A_reduced.T)
        self.L_order = fill_reducing_ordering(reduced_normal)
        try:
            self.L_factor = sparse_cholesky(reduced_normal, self.L_order)
        except FactorizationError as exc:
            raise FactorizationError(f"reduced translational Laplacian: {exc}") from None
        self.L_factor_t = sp.csr_matrix(self.L_factor.T)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.d, self.n, self.m

    @cached_property
    def qr_factor(self) -> tuple[np.ndarray, np.ndarray]:
        """Thin (Q, R) of ``Omega^{1/2} A_red^T`` (built once, on first use)."""
        B = self.weighted_A_reduced_t.toarray()
        Q, R = la.qr(B, mode="economic")
        return Q, R

    @cached_property
    def q_norm_bound(self) -> float:
        """Cheap upper bound on the spectral norm of Q.

        ``||L(G^rho)|| <= 2 max_i delta_i`` and ``Q_tau <= Sigma`` whose norm is
        at most the largest block trace.
        """
        d, n = self.d, self.n
        diag = self.Sigma.diagonal().reshape(n, d)
        return float(2.0 * self.rot_degrees.max() + diag.sum(axis=1).max())

    # --- reduced-Laplacian solves -------------------------------------

    def solve_reduced_normal(self, b: np.ndarray) -> np.ndarray:
        """Solve ``(A_red Omega A_red^T) z = b`` with the cached factor."""
        order = self.L_order
        bp = b[order]
        y = spla.spsolve_triangular(self.L_factor, bp, lower=True)
        zp = spla.spsolve_triangular(self.L_factor_t, y, lower=False)
        z = np.empty_like(zp)
        z[order] = zp
        return z


def build(g: MeasurementGraph, method: str = "cholesky") -> DataMatrices:
    return DataMatrices(g, method)


def apply_Pi(dm: DataMatrices, x: np.ndarray, method: str | None = None) -> np.ndarray:
    """Orthogonal projection of the columns of ``x`` onto ker(A Omega^{1/2})."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != dm.m:
        raise ValueError(f"expected {dm.m} rows, got {x.shape[0]}")
    if dm.n == 1:
        return x.copy()
    method = _method_name(method or dm.method)
    squeeze = x.ndim == 1
    X = x[:, None] if squeeze else x
    if method == "cholesky":
        rhs = dm.weighted_A_reduced @ X
        w = dm.solve_reduced_normal(rhs)
        w = w.reshape(rhs.shape)
    else:
        Q, R = dm.qr_factor
        w = la.solve_triangular(R, Q.T @ X, lower=False)
    out = X - dm.weighted_A_reduced_t @ w
    return out[:, 0] if squeeze else out


def _check_cols(dm: DataMatrices, Y: np.ndarray) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != dm.d * dm.n:
        raise ValueError(f"expected a matrix with {dm.d * dm.n} columns, got shape {Y.shape}")
    return Y


def apply_Qtau(dm: DataMatrices, Y: np.ndarray, method: str | None = None) -> np.ndarray:
    """``Y Q_tau`` without forming Q_tau."""
    Y = _check_cols(dm, Y)
    X = dm.sqrt_Omega_T @ Y.T
    PX = apply_Pi(dm, X, method)
    return np.asarray(dm.sqrt_Omega_T_t @ PX).T


def apply_Q(dm: DataMatrices, Y: np.ndarray, method: str | None = None) -> np.ndarray:
    """``Y Q = Y L(G^rho) + Y Q_tau``."""
    Y = _check_cols(dm, Y)
    return np.asarray(dm.rot_connection_laplacian @ Y.T).T + apply_Qtau(dm, Y, method)


def evaluate_objective(dm: DataMatrices, Y: np.ndarray, method: str | None = None) -> float:
    """F(Y) = tr(Q Y^T Y)."""
    Y = _check_cols(dm, Y)
    return float(np.sum(Y * apply_Q(dm, Y, method)))


def build_full_M(dm: DataMatrices) -> sp.csr_matrix:
    """The (d+1)n square matrix of the joint translation/rotation quadratic form."""
    return sp.bmat(
        [[dm.tran_laplacian, dm.V], [dm.V.T, dm.rot_connection_laplacian + dm.Sigma]],
        format="csr",
    )


def _guard_dense(dm: DataMatrices, allow_large: bool):
    if dm.d * dm.n > DENSE_ORACLE_MAX_DIM and not allow_large:
        raise ValueError(
            f"dense oracle requested for dn = {dm.d * dm.n} > {DENSE_ORACLE_MAX_DIM}; pass allow_large=True"
        )


def dense_Qtau(dm: DataMatrices, allow_large: bool = False) -> np.ndarray:
    """Dense Q_tau via the Schur complement ``Sigma - V^T L(W^tau)^+ V``."""
    _guard_dense(dm, allow_large)
    V = dm.V.toarray()
    return dm.Sigma.toarray() - V.T @ np.linalg.pinv(dm.tran_laplacian.toarray()) @ V


def dense_Q(dm: DataMatrices, allow_large: bool = False) -> np.ndarray:
    """Dense data matrix (diagnostics and tests only)."""
    Q = dm.rot_connection_laplacian.toarray() + dense_Qtau(dm, allow_large)
    return 0.5 * (Q + Q.T)


def pose_objective(g: MeasurementGraph, t: np.ndarray, R: np.ndarray) -> float:
    """Direct edge-sum value of the pose-graph least-squares objective.

    ``t`` is n x d, ``R`` is d x dn with rotation blocks.
    """
    d = g.d
    total = 0.0
    for e in g.edges:
        Ri = R[:, e.tail * d:(e.tail + 1) * d]
        Rj = R[:, e.head * d:(e.head + 1) * d]
        total += e.kappa * np.sum((Rj - Ri @ e.rotation) ** 2)
        total += e.tau * np.sum((t[e.head] - t[e.tail] - Ri @ e.translation) ** 2)
    return float(total)


def dump_matrix_market(dm: DataMatrices, directory: str | os.PathLike) -> list[str]:
    """Write every cached matrix as a Matrix Market file; returns the paths."""
    os.makedirs(directory, exist_ok=True)
    mats = {
        "rot_connection_laplacian": dm.rot_connection_laplacian,
        "T": dm.T,
        "Omega": dm.Omega,
        "V": dm.V,
        "Sigma": dm.Sigma,
        "A_reduced": dm.A_reduced,
        "L_factor": dm.L_factor,
        "tran_laplacian": dm.tran_laplacian,
    }
    paths = []
    for name, M in mats.items():
        path = os.path.join(directory, f"{name}.mtx")
        scipy.io.mmwrite(path, sp.coo_matrix(M))
        paths.append(path)
    order_path = os.path.join(directory, "L_order.txt")
    np.savetxt(order_path, dm.L_order, fmt="%d")
    paths.append(order_path)
    return paths
