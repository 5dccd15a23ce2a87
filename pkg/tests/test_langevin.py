import math

import numpy as np
import pytest
from scipy import integrate, stats

from sesync.langevin import (
    GAUSSIAN_SWITCH_KAPPA,
    LangevinParams,
    angular_std,
    angular_std_gaussian,
    angular_std_quadrature,
    kappa_from_angular_std,
    log_density,
    log_normalizer,
    rotation_angle,
    sample_langevin,
    sample_langevin_batch,
    sample_von_mises,
)
from sesync.synthetic import _random_rotation


def _c2_oracle(kappa):
    # normalizer against the normalized Haar measure on SO(2)
    return integrate.quad(lambda t: math.exp(2 * kappa * math.cos(t)), -math.pi, math.pi)[0] / (2 * math.pi)


def _c3_oracle(kappa):
    # Haar measure on SO(3) has rotation-angle density (1 - cos t) / pi on [0, pi]
    f = lambda t: math.exp(kappa * (1 + 2 * math.cos(t))) * (1 - math.cos(t)) / math.pi  # noqa: E731
    return integrate.quad(f, 0, math.pi, epsrel=1e-12)[0]


def _angles(X):
    """Rotation angles of a (k, d, d) stack."""
    if X.shape[1] == 2:
        return np.arctan2(X[:, 1, 0], X[:, 0, 0])
    c = np.clip((np.trace(X, axis1=1, axis2=2) - 1) / 2, -1, 1)
    return np.arccos(c)


# --- normalizers and density ------------------------------------------------------


def test_normalizers_at_zero():
    assert log_normalizer(0.0, 2) == pytest.approx(0.0, abs=1e-15)
    assert log_normalizer(0.0, 3) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("kappa", [0.1, 1.0, 5.0, 16.67, 40.0])
def test_normalizers_match_quadrature(kappa):
    assert log_normalizer(kappa, 2) == pytest.approx(math.log(_c2_oracle(kappa)), rel=1e-10, abs=1e-12)
    assert log_normalizer(kappa, 3) == pytest.approx(math.log(_c3_oracle(kappa)), rel=1e-9, abs=1e-12)


def test_normalizer_large_kappa_is_finite():
    assert math.isfinite(log_normalizer(1e6, 3))
    with pytest.raises(ValueError):
        log_normalizer(1.0, 4)


def test_log_density(rng):
    M = _random_rotation(3, rng)
    X = _random_rotation(3, rng)
    p0 = LangevinParams(M, 0.0)
    assert log_density(p0, X) == pytest.approx(0.0, abs=1e-14)
    p = LangevinParams(M, 2.0)
    assert log_density(p, M) > log_density(p, X)
    assert log_density(p, X) == pytest.approx(2.0 * np.trace(M.T @ X) - log_normalizer(2.0, 3))


def test_params_validation():
    with pytest.raises(ValueError):
        LangevinParams(np.eye(4), 1.0)
    with pytest.raises(ValueError):
        LangevinParams(np.diag([1.0, -1.0]), 1.0)
    with pytest.raises(ValueError):
        LangevinParams(np.eye(2), -1.0)


# --- von Mises ------------------------------------------------------------------


def test_von_mises_uniform_at_zero():
    x = sample_von_mises(0.0, 0.0, np.random.default_rng(0), 100000)
    assert x.min() >= -math.pi and x.max() < math.pi
    assert stats.kstest(x, stats.uniform(-math.pi, 2 * math.pi).cdf).pvalue > 1e-3


def test_von_mises_large_concentration_variance():
    x = sample_von_mises(0.0, 1000.0, np.random.default_rng(1), 100000)
    assert np.var(x) == pytest.approx(1 / 1000, rel=0.1)


def test_von_mises_circular_mean():
    x = sample_von_mises(0.5, 4.0, np.random.default_rng(2), 100000)
    mean = math.atan2(np.mean(np.sin(x)), np.mean(np.cos(x)))
    assert abs(mean - 0.5) <= 0.02


@pytest.mark.parametrize("lam", [0.5, 2.0, 33.34])
def test_von_mises_ks_against_scipy(lam):
    x = sample_von_mises(0.0, lam, np.random.default_rng(3), 50000)
    assert stats.kstest(x, stats.vonmises(lam).cdf).pvalue > 1e-3


def test_von_mises_scalar_and_errors():
    assert isinstance(sample_von_mises(0.0, 1.0, np.random.default_rng(0)), float)
    with pytest.raises(ValueError):
        sample_von_mises(0.0, -1.0, np.random.default_rng(0))


def test_von_mises_deterministic():
    a = sample_von_mises(0.0, 3.0, np.random.default_rng(9), 1000)
    b = sample_von_mises(0.0, 3.0, np.random.default_rng(9), 1000)
    np.testing.assert_array_equal(a, b)


# --- Langevin sampling -----------------------------------------------------------


@pytest.mark.parametrize("d", [2, 3])
def test_samples_are_rotations(d, rng):
    p = LangevinParams(_random_rotation(d, rng), 3.0)
    X = sample_langevin_batch(p, rng, 2000)
    err = np.linalg.norm(X.swapaxes(1, 2) @ X - np.eye(d), axis=(1, 2))
    assert err.max() <= 1e-12
    assert np.all(np.abs(np.linalg.det(X) - 1) <= 1e-12)
    Y = sample_langevin(p, rng)
    assert np.linalg.norm(Y.T @ Y - np.eye(d)) <= 1e-12


def test_huge_kappa_concentrates_on_mode(rng):
    M = _random_rotation(3, rng)
    X = sample_langevin_batch(LangevinParams(M, 1e6), rng, 10000)
    ang = _angles(M.T @ X)
    assert np.mean(ang <= 0.01) >= 0.9999


@pytest.mark.parametrize("d", [2, 3])
def test_rms_angle_at_paper_concentration(d):
    X = sample_langevin_batch(LangevinParams(np.eye(d), 16.67), np.random.default_rng(4), 100000)
    rms = math.degrees(math.sqrt(np.mean(_angles(X) ** 2)))
    assert abs(rms - 10.0) <= 0.5


@pytest.mark.parametrize("d", [2, 3])
def test_mean_trace_matches_quadrature(d):
    kappa = 3.0
    X = sample_langevin_batch(LangevinParams(np.eye(d), kappa), np.random.default_rng(5), 100000)
    dens = lambda t: math.exp(2 * kappa * math.cos(t))  # noqa: E731
    Z = integrate.quad(dens, -math.pi, math.pi)[0]
    E_cos = integrate.quad(lambda t: math.cos(t) * dens(t), -math.pi, math.pi)[0] / Z
    expected = 2 * E_cos if d == 2 else 1 + 2 * E_cos
    assert np.mean(np.trace(X, axis1=1, axis2=2)) == pytest.approx(expected, rel=0.01)


def test_planar_angles_are_unbiased():
    X = sample_langevin_batch(LangevinParams(np.eye(2), 5.0), np.random.default_rng(6), 100000)
    th = _angles(X)
    assert abs(th.mean()) <= 3 * th.std() / math.sqrt(th.size)


@pytest.mark.parametrize("d", [2, 3])
def test_angle_marginal_chi_square(d):
    kappa = 2.0
    lam = 2 * kappa
    X = sample_langevin_batch(LangevinParams(np.eye(d), kappa), np.random.default_rng(7), 100000)
    ang = np.abs(_angles(X))  # d = 3 only identifies |theta|
    edges = np.linspace(0, math.pi, 41)
    obs, _ = np.histogram(ang, edges)
    dens = lambda t: 2 * math.exp(lam * math.cos(t))  # noqa: E731  folded onto [0, pi]
    probs = np.array([integrate.quad(dens, a, b)[0] for a, b in zip(edges[:-1], edges[1:])])
    probs /= probs.sum()
    assert stats.chisquare(obs, probs * obs.sum()).pvalue > 1e-3


def test_sampler_matches_batch_sampler_in_distribution():
    rng = np.random.default_rng(8)
    p = LangevinParams(np.eye(3), 4.0)
    a = np.array([rotation_angle(sample_langevin(p, rng)) for _ in range(5000)])
    b = _angles(sample_langevin_batch(p, rng, 5000))
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_rotation_angle_cases(rng):
    from sesync.graph import rotation_2d

    assert rotation_angle(np.eye(3)) == 0.0
    assert rotation_angle(rotation_2d(-2.5)) == pytest.approx(2.5)
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    from sesync.langevin import _axis_angle

    for t in (1e-9, 0.3, math.pi - 1e-9, math.pi):
        assert rotation_angle(_axis_angle(axis, t)) == pytest.approx(t, abs=1e-12)


# --- dispersion ------------------------------------------------------------------


def test_angular_std_paper_values():
    assert math.degrees(angular_std(12.87)) == pytest.approx(11.41, rel=5e-3)
    assert angular_std(12.87) == pytest.approx(0.19915, rel=5e-3)
    assert math.degrees(angular_std(16.67)) == pytest.approx(10.0, rel=5e-3)
    assert angular_std(0.0) == pytest.approx(math.pi / math.sqrt(3), rel=1e-10)
    with pytest.raises(ValueError):
        angular_std(-1.0)


def test_angular_std_matches_sample_std():
    th = sample_von_mises(0.0, 2 * 5.0, np.random.default_rng(10), 200000)
    assert np.std(th) == pytest.approx(angular_std(5.0), rel=0.01)


def test_gaussian_approximation_within_one_percent():
    for kappa in np.concatenate([np.linspace(12.9, 150, 150), [200.0, 1e3, 1e5]]):
        exact = angular_std_quadrature(kappa)
        assert abs(exact - angular_std_gaussian(kappa)) / exact <= 0.01


def test_crossover_continuity():
    k = GAUSSIAN_SWITCH_KAPPA
    jump = abs(angular_std_quadrature(k) - angular_std_gaussian(k)) / angular_std_quadrature(k)
    assert jump <= 1e-3
    assert angular_std(k) == angular_std_quadrature(k)
    assert angular_std(k + 1e-9) == angular_std_gaussian(k + 1e-9)


def test_kappa_from_angular_std():
    assert kappa_from_angular_std(math.radians(10)) == pytest.approx(16.67, rel=5e-3)
    assert kappa_from_angular_std(math.radians(11.41)) == pytest.approx(12.87, rel=5e-3)
    for deg in (0.5, 2.0, 5.0, 15.0, 25.0, 60.0, 100.0):
        x = math.radians(deg)
        assert abs(angular_std(kappa_from_angular_std(x)) - x) <= 1e-6
    with pytest.raises(ValueError):
        kappa_from_angular_std(0.0)
    with pytest.raises(ValueError):
        kappa_from_angular_std(math.pi / math.sqrt(3))
