"""Gauge-invariant comparison of rotation sets.

``X`` and ``Y`` are d x dn matrices of orthogonal blocks; the group acts by
left multiplication. The orbit distance is the smallest ``||X - G Y||_F`` over
G in O(d) (or SO(d)), attained at a polar factor of ``X Y^T``.
"""

from __future__ import annotations

import math

import numpy as np

from .langevin import rotation_angle
from .stiefel import as_blocks


def _canonical_svd(M: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SVD with each left singular vector's largest-magnitude entry made positive."""
    U, s, Vt = np.linalg.svd(M)
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, s, Vt * signs[:, None]


def _check(X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape or X.shape[1] % X.shape[0]:
        raise ValueError(f"expected two d x dn matrices of equal shape, got {X.shape} and {Y.shape}")
    return X, Y, X.shape[0]


def orbit_distance_O(X: np.ndarray, Y: np.ndarray) -> tuple[float, np.ndarray]:
    """Distance between the O(d)-orbits of X and Y and the aligning G (X ~ G Y).

    Closed form ``sqrt(2 d n - 2 ||X Y^T||_*)``; the value returned is
    ``||X - G Y||_F``, which equals it exactly but avoids the cancellation of
    the closed form near zero.
    """
    X, Y, d = _check(X, Y)
    U, _, Vt = _canonical_svd(X @ Y.T)
    G = U @ Vt
    return float(np.linalg.norm(X - G @ Y)), G


def orbit_distance_S(X: np.ndarray, Y: np.ndarray) -> tuple[float, np.ndarray]:
    """Distance between the SO(d)-orbits of X and Y and the aligning G in SO(d)."""
    X, Y, d = _check(X, Y)
    U, _, Vt = _canonical_svd(X @ Y.T)
    Xi = np.ones(d)
    Xi[-1] = 1.0 if np.linalg.det(U @ Vt) >= 0 else -1.0
    G = (U * Xi) @ Vt
    return float(np.linalg.norm(X - G @ Y)), G


def orbit_distance_closed_form(X: np.ndarray, Y: np.ndarray, special: bool = True) -> float:
    """The closed-form expressions, evaluated literally (for cross-checks)."""
    X, Y, d = _check(X, Y)
    n = X.shape[1] // d
    U, s, Vt = np.linalg.svd(X @ Y.T)
    if special:
        s = s.copy()
        s[-1] *= 1.0 if np.linalg.det(U @ Vt) >= 0 else -1.0
    return math.sqrt(max(2.0 * d * n - 2.0 * float(np.sum(s)), 0.0))


def angular_errors(R_est: np.ndarray, R_true: np.ndarray, aligned: bool = True) -> np.ndarray:
    """Per-pose geodesic angle between estimate and truth (radians)."""
    R_est, R_true, d = _check(R_est, R_true)
    if aligned:
        _, G = orbit_distance_S(R_true, R_est)
        R_est = G @ R_est
    E = as_blocks(R_est, d).swapaxes(1, 2) @ as_blocks(R_true, d)
    return np.array([rotation_angle(B) for B in E])


def angular_rms_error(R_est: np.ndarray, R_true: np.ndarray, aligned: bool = True) -> float:
    return float(np.sqrt(np.mean(angular_errors(R_est, R_true, aligned) ** 2)))


def translation_rms_error(t_est: np.ndarray, t_true: np.ndarray, G: np.ndarray | None = None) -> float:
    """RMS position error after rotating the estimate by G and matching centroids."""
    t_est = np.asarray(t_est, dtype=float)
    t_true = np.asarray(t_true, dtype=float)
    if t_est.shape != t_true.shape:
        raise ValueError("translation arrays differ in shape")
    if G is not None:
        t_est = t_est @ G.T
    diff = (t_est - t_est.mean(axis=0)) - (t_true - t_true.mean(axis=0))
    return float(np.sqrt(np.mean(np.sum(diff ** 2, axis=1))))


def evaluate(R_est: np.ndarray, t_est: np.ndarray, R_true: np.ndarray, t_true: np.ndarray) -> dict:
    """All gauge-invariant error summaries of an estimate against ground truth."""
    d_S, G = orbit_distance_S(R_true, R_est)
    d_O, _ = orbit_distance_O(R_true, R_est)
    return {
        "d_S": d_S,
        "d_O": d_O,
        "angular_rms_rad": angular_rms_error(R_est, R_true, aligned=True),
        "angular_rms_deg": math.degrees(angular_rms_error(R_est, R_true, aligned=True)),
        "translation_rms": translation_rms_error(t_est, t_true, G),
    }
