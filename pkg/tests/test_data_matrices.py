import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from sesync.data_matrices import (
    DataMatrices,
    apply_Pi,
    apply_Q,
    apply_Qtau,
    build,
    build_full_M,
    dense_Q,
    dense_Qtau,
    dump_matrix_market,
    evaluate_objective,
    fill_reducing_ordering,
    pose_objective,
    sparse_cholesky,
)
from sesync.graph import MeasurementGraph, RelativePoseMeasurement, rotation_2d, weight_graph_laplacian

from conftest import random_graph, rotations_of, translations_of


def _tree(n=6, d=3, seed=0):
    return random_graph(n, d, seed, extra_edges=0, noiseless=False)[0]


def _triangle(d=2, tau=1.0, kappa=1.0):
    R = rotation_2d(2 * np.pi / 3) if d == 2 else np.eye(3)
    t = np.ones(d)
    edges = (
        RelativePoseMeasurement(0, 1, t, R, tau, kappa),
        RelativePoseMeasurement(1, 2, t, R, tau, kappa),
        RelativePoseMeasurement(2, 0, t, R, tau, kappa),
    )
    return MeasurementGraph(3, edges, d)


def _dense_pi(dm):
    A = dm.A.toarray() * np.sqrt(dm.tau)[None, :]
    return np.eye(dm.m) - np.linalg.pinv(A) @ A


# --- construction ----------------------------------------------------------


def test_two_node_connection_laplacian():
    g = MeasurementGraph(2, (RelativePoseMeasurement(0, 1, np.zeros(2), np.eye(2), 1.0, 1.0),), 2)
    L = build(g).rot_connection_laplacian.toarray()
    I = np.eye(2)
    np.testing.assert_array_equal(L, np.block([[I, -I], [-I, I]]))


def test_connection_laplacian_blocks_match_definition():
    g, _ = random_graph(7, 3, seed=3, noiseless=False)
    dm = build(g)
    d = g.d
    expected = np.zeros((d * g.n, d * g.n))
    for e in g.edges:
        i, j = e.tail, e.head
        expected[i * d:(i + 1) * d, i * d:(i + 1) * d] += e.kappa * np.eye(d)
        expected[j * d:(j + 1) * d, j * d:(j + 1) * d] += e.kappa * np.eye(d)
        expected[i * d:(i + 1) * d, j * d:(j + 1) * d] -= e.kappa * e.rotation
        expected[j * d:(j + 1) * d, i * d:(i + 1) * d] -= e.kappa * e.rotation.T
    np.testing.assert_allclose(dm.rot_connection_laplacian.toarray(), expected, atol=1e-14)


def test_T_Sigma_V_by_brute_force():
    g, _ = random_graph(8, 3, seed=4, noiseless=False)
    dm = build(g)
    d, n = g.d, g.n
    T = np.zeros((g.m, d * n))
    Sigma = np.zeros((d * n, d * n))
    V = np.zeros((n, d * n))
    for k, e in enumerate(g.edges):
        i, j = e.tail, e.head
        T[k, i * d:(i + 1) * d] = -e.translation
        Sigma[i * d:(i + 1) * d, i * d:(i + 1) * d] += e.tau * np.outer(e.translation, e.translation)
        V[j, i * d:(i + 1) * d] -= e.tau * e.translation
        V[i, i * d:(i + 1) * d] += e.tau * e.translation
    np.testing.assert_allclose(dm.T.toarray(), T, atol=1e-14)
    np.testing.assert_allclose(dm.Sigma.toarray(), Sigma, atol=1e-12)
    np.testing.assert_allclose(dm.V.toarray(), V, atol=1e-12)
    assert dm.dims == (d, n, g.m)


@pytest.mark.parametrize("seed", range(5))
def test_cholesky_factor(seed):
    g, _ = random_graph(25, 2, seed, noiseless=False)
    dm = build(g)
    Lf = dm.L_factor.toarray()
    assert np.allclose(Lf, np.tril(Lf))
    assert np.all(np.diag(Lf) > 0)
    N = (dm.A_reduced @ dm.Omega @ dm.A_reduced.T).toarray()
    p = dm.L_order
    np.testing.assert_allclose(Lf @ Lf.T, N[np.ix_(p, p)], atol=1e-10 * np.abs(N).max())
    assert sorted(p) == list(range(g.n - 1))


def test_fill_reducing_ordering_is_a_permutation():
    g, _ = random_graph(30, 2, 1)
    N = build(g).A_reduced @ sp.diags(g.taus()) @ build(g).A_reduced.T
    p = fill_reducing_ordering(N)
    assert sorted(p) == list(range(29))


def test_sparse_cholesky_rejects_indefinite():
    from sesync.data_matrices import FactorizationError

    M = sp.csc_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(FactorizationError):
        sparse_cholesky(M, np.arange(2))


def test_build_is_deterministic():
    g, _ = random_graph(20, 3, 9, noiseless=False)
    a, b = build(g), build(g)
    for name in ("rot_connection_laplacian", "T", "V", "Sigma", "L_factor"):
        assert (getattr(a, name) != getattr(b, name)).nnz == 0
    np.testing.assert_array_equal(a.L_order, b.L_order)


def test_unknown_method():
    with pytest.raises(ValueError):
        build(_triangle(), "lu")


@pytest.mark.parametrize("d", [2, 3])
def test_noiseless_spectrum_of_connection_laplacian(d):
    g, _ = random_graph(3 if d == 2 else 10, d, seed=d, extra_edges=3)
    L = build(g).rot_connection_laplacian.toarray()
    Lw = weight_graph_laplacian(g, "kappa").toarray()
    ev = np.linalg.eigvalsh(L)
    expected = np.sort(np.repeat(np.linalg.eigvalsh(Lw), d))
    np.testing.assert_allclose(ev, expected, atol=1e-8)
    np.testing.assert_allclose(ev[:d], 0, atol=1e-8)


# --- projector ------------------------------------------------------------


@pytest.mark.parametrize("method", ["cholesky", "qr"])
def test_projector_vanishes_on_tree(method, rng):
    dm = build(_tree(), method)
    x = rng.standard_normal((dm.m, 4))
    np.testing.assert_allclose(apply_Pi(dm, x), 0, atol=1e-10)


@pytest.mark.parametrize("method", ["cholesky", "qr"])
def test_projector_triangle(method, rng):
    dm = build(_triangle(), method)
    P = apply_Pi(dm, np.eye(3))
    np.testing.assert_allclose(P, _dense_pi(dm), atol=1e-12)
    # unit weights on a directed 3-cycle: projector onto the circulation (1, 1, 1)
    np.testing.assert_allclose(P, np.full((3, 3), 1 / 3), atol=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_projector_properties(seed):
    g, _ = random_graph(20, 2, seed, noiseless=False)
    dm = build(g)
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((g.m, 3)), rng.standard_normal((g.m, 3))
    Px_c, Px_q = apply_Pi(dm, x, "cholesky"), apply_Pi(dm, x, "qr")
    assert np.linalg.norm(Px_c - Px_q) <= 1e-9 * np.linalg.norm(x)
    np.testing.assert_allclose(apply_Pi(dm, Px_c), Px_c, atol=1e-10)
    assert abs(np.sum(Px_c * y) - np.sum(x * apply_Pi(dm, y))) <= 1e-10 * np.linalg.norm(x) * np.linalg.norm(y)
    w = rng.standard_normal(g.n - 1)
    img = dm.weighted_A_reduced_t @ w
    assert np.linalg.norm(apply_Pi(dm, img)) <= 1e-10 * max(1.0, np.linalg.norm(w)) * np.abs(dm.tau).max()
    # vector input keeps its shape
    assert apply_Pi(dm, x[:, 0]).shape == (g.m,)


def test_projector_dimension_mismatch():
    dm = build(_triangle())
    with pytest.raises(ValueError):
        apply_Pi(dm, np.ones(4))


# --- products with Q --------------------------------------------------------


def test_Qtau_vanishes_on_tree(rng):
    dm = build(_tree())
    Y = rng.standard_normal((4, dm.d * dm.n))
    np.testing.assert_allclose(apply_Qtau(dm, Y), 0, atol=1e-10)


@pytest.mark.parametrize("method", ["cholesky", "qr"])
@pytest.mark.parametrize("seed", range(4))
def test_products_match_dense(method, seed):
    g, _ = random_graph(30 + 5 * seed, 3, seed, noiseless=False)
    dm = build(g, method)
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((5, 3 * g.n))
    Qt, Q = dense_Qtau(dm), dense_Q(dm)
    scale = np.linalg.norm(Q, 2) * np.linalg.norm(Y)
    assert np.linalg.norm(apply_Qtau(dm, Y) - Y @ Qt) <= 1e-9 * scale
    assert np.linalg.norm(apply_Q(dm, Y) - Y @ Q) <= 1e-9 * scale
    f = evaluate_objective(dm, Y)
    kron = Y.reshape(-1, order="F") @ np.kron(Q, np.eye(5)) @ Y.reshape(-1, order="F")
    assert abs(f - kron) <= 1e-9 * scale * np.linalg.norm(Y)
    assert f >= -1e-9 * np.linalg.norm(Y) ** 2 * np.linalg.norm(Q, 2)


def test_Qtau_dense_alternative_form():
    g, _ = random_graph(12, 2, 5, noiseless=False)
    dm = build(g)
    S = dm.sqrt_Omega_T.toarray()
    np.testing.assert_allclose(dense_Qtau(dm), S.T @ _dense_pi(dm) @ S, atol=1e-9)


def test_zero_input():
    dm = build(_triangle())
    Z = np.zeros((3, 6))
    np.testing.assert_array_equal(apply_Q(dm, Z), 0)
    assert evaluate_objective(dm, Z) == 0


@pytest.mark.parametrize("d", [2, 3])
def test_noiseless_truth_is_in_kernel(d):
    g, truth = random_graph(15, d, seed=11, extra_edges=10)
    dm = build(g)
    R = rotations_of(truth)
    Qn = np.linalg.norm(dense_Q(dm), 2)
    assert np.linalg.norm(apply_Qtau(dm, R)) <= 1e-9 * Qn
    assert np.linalg.norm(apply_Q(dm, R)) <= 1e-9 * Qn
    assert abs(evaluate_objective(dm, R)) <= 1e-9 * Qn


def test_dimension_mismatch():
    dm = build(_triangle())
    with pytest.raises(ValueError):
        apply_Q(dm, np.ones((2, 5)))


@pytest.mark.parametrize("seed", range(4))
def test_Q_is_psd(seed):
    g, _ = random_graph(20, 3, seed, noiseless=False)
    Q = dense_Q(build(g))
    ev = np.linalg.eigvalsh(Q)
    assert ev[0] >= -1e-9 * ev[-1]


def test_dense_guard():
    g, _ = random_graph(700, 3, 0, extra_edges=0)
    with pytest.raises(ValueError):
        dense_Q(build(g))


# --- full quadratic form ------------------------------------------------------


def test_full_M_blocks_three_nodes():
    g, _ = random_graph(3, 2, 8, extra_edges=1, noiseless=False)
    dm = build(g)
    M = build_full_M(dm).toarray()
    n = g.n
    np.testing.assert_allclose(M[:n, :n], weight_graph_laplacian(g, "tau").toarray())
    np.testing.assert_allclose(M[:n, n:], dm.V.toarray())
    np.testing.assert_allclose(M[n:, n:], (dm.rot_connection_laplacian + dm.Sigma).toarray())
    np.testing.assert_allclose(M, M.T)


@pytest.mark.parametrize("seed", range(4))
def test_full_M_quadratic_form(seed):
    g, truth = random_graph(10, 3, seed, noiseless=False)
    dm = build(g)
    M = build_full_M(dm).toarray()
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((g.n, 3))
    R = rotations_of(truth)
    X = np.hstack([t.T, R])
    assert np.trace(X @ M @ X.T) == pytest.approx(pose_objective(g, t, R), rel=1e-10)
    ev = np.linalg.eigvalsh(M)
    assert ev[0] >= -1e-10 * ev[-1]


def test_full_M_noiseless_zero():
    g, truth = random_graph(10, 3, 1)
    M = build_full_M(build(g)).toarray()
    X = np.hstack([translations_of(truth).T, rotations_of(truth)])
    assert abs(np.trace(X @ M @ X.T)) <= 1e-9 * np.linalg.norm(M, 2)


@pytest.mark.parametrize("seed", range(4))
def test_translation_elimination(seed):
    g, truth = random_graph(12, 2, seed, noiseless=False)
    dm = build(g)
    rng = np.random.default_rng(seed + 100)
    R = np.hstack([rotation_2d(a) for a in rng.uniform(-np.pi, np.pi, g.n)])
    Lt = weight_graph_laplacian(g, "tau").toarray()
    t_opt = -(np.linalg.pinv(Lt) @ dm.V.toarray() @ R.T)
    f_reduced = evaluate_objective(dm, R)
    assert pose_objective(g, t_opt, R) == pytest.approx(f_reduced, rel=1e-8, abs=1e-8)
    t_other = t_opt + 0.1 * rng.standard_normal(t_opt.shape)
    assert pose_objective(g, t_other, R) >= f_reduced - 1e-8


def test_matrix_market_dump(tmp_path):
    g, _ = random_graph(6, 2, 0, noiseless=False)
    dm = build(g)
    paths = dump_matrix_market(dm, tmp_path / "mm")
    assert len(paths) == 9
    V = scipy.io.mmread(str(tmp_path / "mm" / "V.mtx"))
    np.testing.assert_allclose(V.toarray(), dm.V.toarray())


def test_single_vertex_graph():
    g = MeasurementGraph(1, (), 2)
    dm = DataMatrices(g)
    np.testing.assert_array_equal(apply_Q(dm, np.eye(2)), 0)
