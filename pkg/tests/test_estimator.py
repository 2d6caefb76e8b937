import numpy as np
import pytest
from scipy import linalg

from _oracles import normalized_mass
from bmc_lsq import estimator as est
from bmc_lsq.basis import GaussianBasis, overlap_bar, select_centers
from bmc_lsq.kernels import NbarModel, simulate_tree
from bmc_lsq.selection import DEFAULT_LAMBDAS
from bmc_lsq.tree import triangles_of_generation


@pytest.fixture(scope="module")
def tri10():
    return triangles_of_generation(simulate_tree(NbarModel(), depth=11, seed=10), 10)


def _fit(tri, tau=0.4217, lam=0.1, d=256, seed=0):
    b = GaussianBasis(tau, select_centers(tri, d, np.random.default_rng(seed)))
    return est.fit(tri, b, lam)


def test_assemble_H_single_center():
    b = GaussianBasis(0.3, np.array([[0.2, 1.0, -1.0]]))
    np.testing.assert_allclose(est.assemble_H(b, [0.2]), [[np.pi * 0.09]], rtol=1e-15)


def test_assemble_H_matches_definition():
    rng = np.random.default_rng(1)
    b = GaussianBasis(0.7, rng.normal(size=(6, 3)))
    xs = rng.normal(size=9)
    ref = np.array([[np.mean([overlap_bar(b, i, j, x) for x in xs]) for j in range(6)] for i in range(6)])
    np.testing.assert_allclose(est.assemble_H(b, xs), ref, rtol=1e-12)


def test_assemble_H_symmetric_psd():
    rng = np.random.default_rng(2)
    b = GaussianBasis(0.5, rng.normal(size=(50, 3)))
    H = est.assemble_H(b, rng.normal(size=512))
    assert np.max(np.abs(H - H.T)) == 0
    assert np.linalg.eigvalsh(H).min() >= -1e-10
    assert est.min_eigenvalue(H) >= -1e-10


def test_assemble_H_chunked_equals_unchunked(monkeypatch):
    rng = np.random.default_rng(3)
    b = GaussianBasis(0.5, rng.normal(size=(20, 3)))
    xs = rng.normal(size=1000)
    full = est.assemble_H(b, xs)
    monkeypatch.setattr(est, "CHUNK", 64)
    np.testing.assert_allclose(est.assemble_H(b, xs), full, rtol=1e-13)


def test_assemble_h():
    c = np.array([[0.1, 0.2, 0.3], [2.0, -1.0, 0.5]])
    b = GaussianBasis(0.4, c)
    h = est.assemble_h(b, c[:1])
    assert h[0] == 1.0
    tri = np.random.default_rng(4).normal(size=(300, 3))
    h = est.assemble_h(b, tri)
    assert np.all((h > 0) & (h <= 1))
    np.testing.assert_array_equal(h, est.assemble_h(b, tri))
    with pytest.raises(ValueError):
        est.assemble_h(b, np.empty((0, 3)))


def test_ridge_identity():
    np.testing.assert_allclose(est.ridge_solve(np.eye(4), np.ones(4), 1.0), 0.5 * np.ones(4), rtol=1e-15)
    with pytest.raises(ValueError):
        est.ridge_solve(np.eye(2), np.ones(2), 0.0)


def test_ridge_bound_and_residual_sweep():
    rng = np.random.default_rng(5)
    m = rng.normal(size=(100, 40))
    H = m @ m.T / 40
    H = 0.5 * (H + H.T)
    h = rng.random(100)
    for lam in DEFAULT_LAMBDAS:
        beta = est.ridge_solve(H, h, lam)
        assert np.linalg.norm(beta) <= np.linalg.norm(h) / lam * (1 + 1e-12)
        assert est.ridge_residual(H, h, lam, beta) <= 1e-8 * (1 + np.abs(h).max())


def test_ridge_fallback_on_indefinite_small_lambda():
    H = np.diag([1.0, -1.0])
    beta = est.ridge_solve(H, np.array([1.0, 1.0]), 1e-4)
    np.testing.assert_allclose((H + 1e-4 * np.eye(2)) @ beta, [1.0, 1.0], rtol=1e-10)
    with pytest.raises(est.NumericError):
        est.ridge_solve(np.diag([1.0, -5.0]), np.ones(2), 1.0)


@pytest.mark.parametrize("beta, out", [((-1.0, 2.0), (0.0, 2.0)), ((0.5, 3.0), (0.5, 3.0)), ((-1.0, -2.0), (0.0, 0.0))])
def test_clip(beta, out):
    np.testing.assert_array_equal(est.clip_nonneg(beta), out)


def test_eval_raw_examples():
    rng = np.random.default_rng(6)
    b = GaussianBasis(0.5, rng.normal(size=(5, 3)))
    zero = est.DensityFit(b, np.zeros(5), 1.0, np.zeros(5))
    assert est.eval_raw(zero, 0.1, 0.2, 0.3) == 0.0
    with pytest.raises(est.UnsupportedSlice):
        est.eval_normalized(zero, 0.1, 0.2, 0.3)
    e2 = est.DensityFit(b, np.eye(5)[2], 1.0, np.eye(5)[2])
    assert est.eval_raw(e2, *b.centers[2]) == 1.0
    b1, b2 = rng.random(5), rng.random(5)
    p = rng.normal(size=(10, 3))
    f = lambda beta: est.DensityFit(b, beta, 1.0, beta).eval_raw(p)
    np.testing.assert_allclose(f(2 * b1 + 3 * b2), 2 * f(b1) + 3 * f(b2), rtol=1e-13)


def test_normalized_scale_free_single_center():
    b = GaussianBasis(0.5, np.array([[0.0, 0.5, -0.5]]))
    vals = [est.eval_normalized(est.DensityFit(b, np.array([s]), 1.0, np.array([s])), 0.2, 0.4, -0.3)
            for s in (0.01, 1.0, 70.0)]
    assert vals[0] == pytest.approx(vals[1], rel=1e-14) and vals[2] == pytest.approx(vals[1], rel=1e-14)


def test_unsupported_far_away():
    b = GaussianBasis(0.0316, np.array([[0.0, 0.0, 0.0]]))
    f = est.DensityFit(b, np.ones(1), 1.0, np.ones(1))
    with pytest.raises(est.UnsupportedSlice) as info:
        f.eval_normalized([[50.0, 0.0, 0.0]])
    assert info.value.x == 50.0


def test_normalization_identity(tri10):
    f = _fit(tri10)
    for x in (-1.5, -0.3, 0.0, 0.5, 1.2):
        assert normalized_mass(f, x) == pytest.approx(1.0, abs=1e-8)


def test_fit_nonnegative_and_duplication_invariant(tri10):
    b = GaussianBasis(0.4217, select_centers(tri10, 128, np.random.default_rng(1)))
    f = est.fit(tri10, b, 0.1)
    assert np.all(f.beta >= 0) and np.any(f.beta > 0)
    g = est.fit(np.vstack([tri10, tri10]), b, 0.1)
    np.testing.assert_allclose(g.beta_tilde, f.beta_tilde, rtol=1e-9, atol=1e-12)
    pts = np.random.default_rng(2).normal(size=(500, 3)) * 2
    assert np.all(f.eval_raw(pts) >= 0)


def test_objective_minimized_by_ridge(tri10):
    b = GaussianBasis(1.0, select_centers(tri10, 64, np.random.default_rng(1)))
    sys_ = est.assemble(b, tri10)
    lam = 0.0316
    bt = est.ridge_solve(sys_.H_hat, sys_.h_hat, lam)
    best = est.objective(sys_, bt, lam)
    rng = np.random.default_rng(3)
    for _ in range(100):
        beta = bt + rng.normal(size=bt.size) * 10.0 ** rng.uniform(-4, 0)
        assert best <= est.objective(sys_, beta, lam) + 1e-15


def test_squared_integral_matches_quadrature(tri10):
    from _oracles import gl_rule
    f = _fit(tri10, d=64)
    y, w = gl_rule(-6, 6, 64, 8)
    for x in (-0.4, 0.5):
        q = f.slice_grid(x, y, y, normalized=False)
        assert f.squared_integral([x])[0] == pytest.approx(w @ (q * q) @ w, rel=1e-9)


def test_lambda_grid_accepted(tri10):
    b = GaussianBasis(0.4217, select_centers(tri10, 64, np.random.default_rng(1)))
    s = est.assemble(b, tri10)
    for lam in DEFAULT_LAMBDAS:
        est.solve_fit(s, b, lam)


def test_fit_generation_16_smoke():
    tri = triangles_of_generation(simulate_tree(NbarModel(), depth=17, seed=16), 16)
    f = _fit(tri, tau=0.4217, lam=0.1, d=1000)
    assert f.basis.d == 1000 and np.any(f.beta > 0)


def test_accurate_matmul_and_min_eigenvalue():
    rng = np.random.default_rng(8)
    a = rng.normal(size=(30, 200))
    b = rng.normal(size=(200, 7))
    exact = (a.astype(np.longdouble) @ b.astype(np.longdouble)).astype(np.float64)
    assert np.max(np.abs(est.accurate_matmul(a, b) - exact)) <= 4 * np.finfo(float).eps * np.abs(exact).max()
    q = linalg.qr(rng.normal(size=(40, 40)))[0]
    w = np.concatenate([[-3e-12], np.logspace(-1, 2, 39)])
    H = (q * w) @ q.T
    H = 0.5 * (H + H.T)
    assert est.min_eigenvalue(H) == pytest.approx(-3e-12, abs=2e-13)
