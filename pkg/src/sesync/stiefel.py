"""Geometry of the product manifold St(d, r)^n and derivatives of F(Y) = tr(Q Y^T Y).

A point is an r x dn matrix whose n consecutive r x d column blocks each have
orthonormal columns. The metric is the Frobenius inner product inherited from
the ambient space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_matrices import DataMatrices, apply_Q

TANGENCY_TOL = 1e-6
REORTHO_TOL = 1e-8


class TangencyError(ValueError):
    pass


def as_blocks(X: np.ndarray, d: int) -> np.ndarray:
    """View an r x dn matrix as an (n, r, d) stack of its column blocks."""
    r, dn = X.shape
    if dn % d:
        raise ValueError(f"{dn} columns are not divisible into blocks of {d}")
    return X.reshape(r, dn // d, d).transpose(1, 0, 2)


def from_blocks(B: np.ndarray) -> np.ndarray:
    n, r, d = B.shape
    return B.transpose(1, 0, 2).reshape(r, n * d)


def _sym(B: np.ndarray) -> np.ndarray:
    return 0.5 * (B + B.swapaxes(-1, -2))


@dataclass(eq=False)
class StaircasePoint:
    """A point Y of St(d, r)^n stored as an r x dn matrix."""

    Y: np.ndarray
    d: int

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float)
        if self.Y.shape[0] < self.d:
            raise ValueError(f"rank level {self.Y.shape[0]} is below d = {self.d}")
        if self.Y.shape[1] % self.d:
            raise ValueError("column count must be a multiple of d")

    @property
    def rank_level(self) -> int:
        return self.Y.shape[0]

    @property
    def n(self) -> int:
        return self.Y.shape[1] // self.d

    def feasibility_residual(self) -> float:
        return feasibility_residual(self.Y, self.d)


def feasibility_residual(Y: np.ndarray, d: int) -> float:
    """Largest Frobenius deviation of Y_i^T Y_i from the identity."""
    B = as_blocks(Y, d)
    G = B.swapaxes(1, 2) @ B
    return float(np.max(np.linalg.norm(G - np.eye(d), axis=(1, 2))))


def sym_block_diag(X: np.ndarray, d: int) -> np.ndarray:
    """Symmetrized d x d diagonal blocks of a square dn x dn matrix, zeros elsewhere."""
    X = np.asarray(X, dtype=float)
    dn = X.shape[0]
    if X.shape != (dn, dn) or dn % d:
        raise ValueError(f"expected a square matrix with side divisible by {d}, got {X.shape}")
    n = dn // d
    out = np.zeros_like(X)
    blocks = X.reshape(n, d, n, d)[np.arange(n), :, np.arange(n), :]
    sym = _sym(blocks)
    for i in range(n):
        out[i * d:(i + 1) * d, i * d:(i + 1) * d] = sym[i]
    return out


def block_sym_products(Y: np.ndarray, X: np.ndarray, d: int) -> np.ndarray:
    """Stack of sym(Y_i^T X_i), i.e. the nonzero blocks of SymBlockDiag(Y^T X)."""
    BY, BX = as_blocks(Y, d), as_blocks(X, d)
    return _sym(BY.swapaxes(1, 2) @ BX)


def _orthonormalize(B: np.ndarray) -> np.ndarray:
    """Q factor of a stack of thin QR factorizations with a positive-diagonal sign fix."""
    Q, R = np.linalg.qr(B)
    signs = np.sign(np.diagonal(R, axis1=1, axis2=2))
    signs[signs == 0] = 1.0
    return Q * signs[:, None, :]


def random_point(d: int, r: int, n: int, seed=None) -> StaircasePoint:
    """Haar-uniform sample from St(d, r)^n."""
    if r < d:
        raise ValueError("r must be at least d")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, r, d))
    return StaircasePoint(from_blocks(_orthonormalize(G)), d)


def lift(Y: np.ndarray, r: int) -> np.ndarray:
    """Pad Y with zero rows up to r rows."""
    extra = r - Y.shape[0]
    if extra < 0:
        raise ValueError("cannot lift to a lower rank level")
    return np.vstack([Y, np.zeros((extra, Y.shape[1]))])


def project_tangent(Y: np.ndarray, X: np.ndarray, d: int) -> np.ndarray:
    """Orthogonal projection of an ambient matrix X onto the tangent space at Y."""
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {Y.shape}")
    S = block_sym_products(Y, X, d)
    return X - from_blocks(as_blocks(Y, d) @ S)


def tangency_residual(Y: np.ndarray, Ydot: np.ndarray, d: int) -> float:
    return float(np.linalg.norm(block_sym_products(Y, Ydot, d)))


def euclidean_gradient(dm: DataMatrices, Y: np.ndarray) -> np.ndarray:
    return 2.0 * apply_Q(dm, Y)


def riemannian_gradient(dm: DataMatrices, Y: np.ndarray, egrad: np.ndarray | None = None) -> np.ndarray:
    if egrad is None:
        egrad = euclidean_gradient(dm, Y)
    return project_tangent(Y, egrad, dm.d)


def riemannian_hessian_vector_product(
    dm: DataMatrices,
    Y: np.ndarray,
    Ydot: np.ndarray,
    egrad: np.ndarray | None = None,
    check: bool = True,
) -> np.ndarray:
    """Hess F(Y)[Ydot] = proj_Y(2 Ydot Q - Ydot SymBlockDiag(Y^T grad F(Y)))."""
    d = dm.d
    if check:
        res = tangency_residual(Y, Ydot, d)
        scale = max(1.0, float(np.linalg.norm(Ydot)))
        if res > TANGENCY_TOL * scale:
            raise TangencyError(f"direction is not tangent at Y (residual {res:.3e})")
    if egrad is None:
        egrad = euclidean_gradient(dm, Y)
    S = block_sym_products(Y, egrad, d)
    ambient = 2.0 * apply_Q(dm, Ydot) - from_blocks(as_blocks(Ydot, d) @ S)
    return project_tangent(Y, ambient, d)


def retract(Y: np.ndarray, Ydot: np.ndarray, step: float = 1.0, d: int | None = None) -> np.ndarray:
    """Block-wise QR retraction ``qf(Y_i + step * Ydot_i)``."""
    if d is None:
        raise ValueError("block size d is required")
    if step == 0:
        return np.array(Y, dtype=float, copy=True)
    Z = as_blocks(Y + step * Ydot, d)
    out = from_blocks(_orthonormalize(Z))
    if feasibility_residual(out, d) > REORTHO_TOL:
        out = from_blocks(_orthonormalize(as_blocks(out, d)))
    return out


def random_tangent(Y: np.ndarray, d: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm random tangent vector at Y."""
    X = project_tangent(Y, rng.standard_normal(Y.shape), d)
    nrm = np.linalg.norm(X)
    return X / nrm if nrm > 0 else X
