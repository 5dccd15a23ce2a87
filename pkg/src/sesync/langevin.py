"""Isotropic Langevin distribution on SO(d), d in {2, 3}.

The density is ``exp(kappa * tr(M^T X)) / c_d(kappa)`` with respect to the
normalized Haar measure, where ``c_2 = I_0(2 kappa)`` and
``c_3 = exp(kappa) (I_0(2 kappa) - I_1(2 kappa))``. The rotation angle of
``M^T X`` is von Mises distributed with concentration ``2 kappa``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .graph import is_rotation, rotation_2d

GAUSSIAN_SWITCH_KAPPA = 150.0


@dataclass(frozen=True, eq=False)
class LangevinParams:
    mode: np.ndarray
    kappa: float

    def __post_init__(self):
        M = np.asarray(self.mode, dtype=float)
        object.__setattr__(self, "mode", M)
        if M.shape not in ((2, 2), (3, 3)):
            raise ValueError(f"Langevin distribution is defined here for d in {{2, 3}}, got shape {M.shape}")
        if not is_rotation(M):
            raise ValueError("mode must be a rotation")
        if not self.kappa >= 0:
            raise ValueError("kappa must be nonnegative")

    @property
    def d(self) -> int:
        return self.mode.shape[0]


def log_normalizer(kappa: float, d: int) -> float:
    """log c_d(kappa), evaluated with exponentially scaled Bessel functions."""
    x = 2.0 * kappa
    if d == 2:
        return float(math.log(special.i0e(x)) + x)
    if d == 3:
        return float(kappa + math.log(special.i0e(x) - special.i1e(x)) + x)
    raise ValueError(f"d must be 2 or 3, got {d}")


def log_density(p: LangevinParams, X: np.ndarray) -> float:
    X = np.asarray(X, dtype=float)
    if X.shape != p.mode.shape:
        raise ValueError("rotation and mode dimensions differ")
    return float(p.kappa * np.trace(p.mode.T @ X) - log_normalizer(p.kappa, p.d))


def sample_von_mises(mu: float, lam: float, rng: np.random.Generator, size=None):
    """Best-Fisher rejection sampler for vonMises(mu, lam); angles in [-pi, pi)."""
    if lam < 0:
        raise ValueError("concentration must be nonnegative")
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    count = int(np.prod(shape)) if shape else 1
    if lam < 1e-8:
        out = rng.uniform(-math.pi, math.pi, count)
    else:
        tau = 1.0 + math.sqrt(1.0 + 4.0 * lam * lam)
        rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * lam)
        r = (1.0 + rho * rho) / (2.0 * rho)
        out = np.empty(count)
        filled = 0
        while filled < count:
            k = max(count - filled, 16)
            u1, u2, u3 = rng.random(k), rng.random(k), rng.random(k)
            z = np.cos(math.pi * u1)
            f = (1.0 + r * z) / (r + z)
            c = lam * (r - f)
            ok = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
            theta = np.sign(u3[ok] - 0.5) * np.arccos(np.clip(f[ok], -1.0, 1.0))
            take = min(theta.size, count - filled)
            out[filled:filled + take] = theta[:take]
            filled += take
        out = np.mod(out + mu + math.pi, 2.0 * math.pi) - math.pi
    return out.reshape(shape) if shape else float(out[0])


def _axis_angle(axis: np.ndarray, theta: float) -> np.ndarray:
    K = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    return np.eye(3) + math.sin(theta) * K + (1.0 - math.cos(theta)) * (K @ K)


def sample_langevin(p: LangevinParams, rng: np.random.Generator) -> np.ndarray:
    """One draw from Langevin(M, kappa): M times a rotation by a von Mises angle."""
    theta = sample_von_mises(0.0, 2.0 * p.kappa, rng)
    if p.d == 2:
        P = rotation_2d(theta)
    else:
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        P = _axis_angle(v, theta)
    return p.mode @ P


def sample_langevin_batch(p: LangevinParams, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent draws as a (size, d, d) array (vectorized form of the sampler)."""
    theta = sample_von_mises(0.0, 2.0 * p.kappa, rng, size)
    c, s = np.cos(theta), np.sin(theta)
    if p.d == 2:
        P = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    else:
        v = rng.standard_normal((size, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        K = np.zeros((size, 3, 3))
        K[:, 0, 1], K[:, 0, 2], K[:, 1, 2] = -v[:, 2], v[:, 1], -v[:, 0]
        K -= K.swapaxes(1, 2)
        P = np.eye(3) + s[:, None, None] * K + (1.0 - c)[:, None, None] * (K @ K)
    return p.mode @ P


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic angle of a rotation, in [0, pi]."""
    R = np.asarray(R, dtype=float)
    if R.shape == (2, 2):
        return abs(math.atan2(R[1, 0], R[0, 0]))
    # atan2 of (sin, cos) stays accurate near 0 and pi, unlike acos of the trace
    c = 0.5 * (np.trace(R) - 1.0)
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return math.atan2(float(np.linalg.norm(w)), c)


def angular_std_quadrature(kappa: float) -> float:
    """Standard deviation of the von Mises(0, 2 kappa) angle by adaptive quadrature."""
    lam = 2.0 * kappa
    # exp(lam cos t) / (2 pi I0(lam)) written with the scaled Bessel function
    def dens(t):
        return math.exp(lam * (math.cos(t) - 1.0)) / (2.0 * math.pi * special.i0e(lam))

    var, _ = integrate.quad(lambda t: t * t * dens(t), -math.pi, math.pi, epsabs=0.0, epsrel=1e-12,
                            limit=200, points=[0.0])
    return math.sqrt(var)


def angular_std_gaussian(kappa: float) -> float:
    return 1.0 / math.sqrt(2.0 * kappa)


def angular_std(kappa: float) -> float:
    """Angular standard deviation (radians); asymptotic form above kappa = 150."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    if kappa > GAUSSIAN_SWITCH_KAPPA:
        return angular_std_gaussian(kappa)
    return angular_std_quadrature(kappa)


def kappa_from_angular_std(target: float) -> float:
    """Concentration whose angular standard deviation equals ``target`` radians."""
    upper = math.pi / math.sqrt(3.0)
    if not 0 < target < upper:
        raise ValueError(f"target must lie in (0, pi/sqrt(3)), got {target}")
    if target < angular_std(GAUSSIAN_SWITCH_KAPPA):
        return 1.0 / (2.0 * target * target)
    return optimize.brentq(lambda k: angular_std_quadrature(k) - target, 0.0, GAUSSIAN_SWITCH_KAPPA,
                           xtol=1e-12, rtol=1e-14)
