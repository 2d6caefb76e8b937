"""Experiment harness: error metrics, figure data, concentration and rate studies."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from . import estimator as est
from . import theory
from .basis import GaussianBasis, select_centers
from .kernels import NbarModel, TwoPointModel, mu_sample, simulate_tree
from .rng import derive_seed
from .selection import EPS_LOG, CvGrid, cross_validate
from .tree import triangles_of_generation

_PILOT_TAG = 21
_REP_TAG = 22
_CENTER_TAG = 23
_MU_TAG = 24
_CONC_TAG = 25


# --- quadrature -------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureGrid:
    """Composite Gauss-Legendre rule on ``[lo, hi]``, used on every axis."""

    lo: float = -3.0
    hi: float = 3.0
    points: int = 16
    panels: int = 12

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty box [{self.lo}, {self.hi}]")
        if self.points * self.panels < 16:
            raise ValueError("need at least 16 nodes per axis")

    def rule(self) -> tuple[np.ndarray, np.ndarray]:
        t, w = np.polynomial.legendre.leggauss(self.points)
        edges = np.linspace(self.lo, self.hi, self.panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        return nodes, weights

    def refined(self) -> "QuadratureGrid":
        return QuadratureGrid(self.lo, self.hi, self.points, 2 * self.panels)


def integrate_2d(values: np.ndarray, grid: QuadratureGrid) -> float:
    _, w = grid.rule()
    return float(w @ values @ w)


def _truth_slice(truth, x0: float, nodes: np.ndarray) -> np.ndarray:
    return truth.density(x0, nodes[:, None], nodes[None, :])


def quad_slice_error(fit: est.DensityFit, truth, x0: float = 0.5,
                     grid: QuadratureGrid = QuadratureGrid()) -> float:
    """``int int_box (P_hat - P)^2(x0, y, z) dy dz`` with the renormalized estimator."""
    nodes, _ = grid.rule()
    diff = fit.slice_grid(x0, nodes, nodes) - _truth_slice(truth, x0, nodes)
    return integrate_2d(diff * diff, grid)


def _auto_grid(fit: est.DensityFit, truth: NbarModel, xs: np.ndarray) -> QuadratureGrid:
    c = fit.basis.centers[:, 1:]
    f = truth.f(xs)
    spread = 8.0 * max(truth.sigma, fit.tau)
    lo = min(c.min(), f.min()) - spread
    hi = max(c.max(), f.max()) + spread
    panels = int(min(64, max(12, np.ceil((hi - lo) / (2.0 * min(truth.sigma, fit.tau))))))
    return QuadratureGrid(lo, hi, 16, panels)


def slice_ise_values(fit, truth, xs, grid: QuadratureGrid | None = None) -> np.ndarray:
    xs = np.asarray(xs, dtype=float).ravel()
    grid = _auto_grid(fit, truth, xs) if grid is None else grid
    nodes, _ = grid.rule()
    out = np.empty(xs.size)
    for k, x in enumerate(xs):
        diff = fit.slice_grid(x, nodes, nodes) - _truth_slice(truth, x, nodes)
        out[k] = integrate_2d(diff * diff, grid)
    return out


def mc_ise(fit, truth, xs, grid: QuadratureGrid | None = None) -> float:
    """``(1/2) mean_x int int (P_hat - P)^2(x, y, z) dy dz`` over invariant-law draws ``xs``."""
    return float(0.5 * slice_ise_values(fit, truth, xs, grid).mean())


def slice_ise_closed_form(fit: est.DensityFit, truth: NbarModel, x: float) -> float:
    """Exact ``int int (P_hat - P)^2(x, .)`` over the plane for Gaussian noise."""
    s2, rho, tau2 = truth.sigma ** 2, truth.rho, fit.tau ** 2
    p_sq = 1.0 / (4.0 * np.pi * s2 * np.sqrt(1.0 - rho ** 2))
    den = float(fit.denominator([x])[0])
    q = float(fit.squared_integral([x])[0]) / den ** 2
    cov = np.array([[s2 + tau2, rho * s2], [rho * s2, s2 + tau2]])
    fx = float(truth.f(x))
    conv = stats.multivariate_normal(mean=[fx, fx], cov=cov).pdf(fit.basis.centers[:, 1:])
    w = fit.beta * fit.basis.factors([x], 0)[0]
    cross = 2.0 * np.pi * tau2 * float(w @ np.atleast_1d(conv)) / den
    return q - 2.0 * cross + p_sq


def mc_kl(fit, truth, xs, grid_points: int = 16, grid_panels: int = 16) -> float:
    """``mean_x int int P log(P / P_hat)`` with ``P_hat`` floored at ``EPS_LOG``.

    The inner integral runs over ``f(x) +/- 8 sigma`` on each axis, where
    the true density carries all but a negligible share of its mass.
    """
    xs = np.asarray(xs, dtype=float).ravel()
    vals = np.empty(xs.size)
    for k, x in enumerate(xs):
        fx = float(truth.f(x))
        grid = QuadratureGrid(fx - 8 * truth.sigma, fx + 8 * truth.sigma, grid_points, grid_panels)
        nodes, _ = grid.rule()
        p = _truth_slice(truth, x, nodes)
        try:
            ph = np.maximum(fit.slice_grid(x, nodes, nodes), EPS_LOG)
        except est.UnsupportedSlice:
            ph = np.full_like(p, EPS_LOG)
        vals[k] = integrate_2d(p * (np.log(p) - np.log(ph)), grid)
    return float(vals.mean())


def mu_draws(kernel, size: int, seed: int) -> np.ndarray:
    return mu_sample(kernel, size, derive_seed(seed, _MU_TAG), burn_in=1000, thin=10, chains=1)


# --- replicated fits --------------------------------------------------------

def sample_triangles(kernel, n: int, seed: int) -> np.ndarray:
    """Triangles over generation ``n`` of a fresh depth ``n + 1`` tree."""
    return triangles_of_generation(simulate_tree(kernel, None, n + 1, seed), n)


def fit_sample(tri: np.ndarray, lam: float, tau: float, d_max: int, seed: int) -> est.DensityFit:
    d = min(d_max, tri.shape[0])
    centers = select_centers(tri, d, np.random.default_rng(derive_seed(seed, _CENTER_TAG)))
    return est.fit(tri, GaussianBasis(tau, centers), lam)


def select_params(kernel, n: int, grid: CvGrid, seed: int, jobs: int = 1):
    """CV-selected ``(lambda, tau)`` on a pilot sample at generation ``n``."""
    pilot = derive_seed(seed, _PILOT_TAG, n)
    report = cross_validate(sample_triangles(kernel, n, pilot), grid, seed=pilot, jobs=jobs)
    return report.best


def _rep_seed(seed: int, n: int, rep: int) -> int:
    return derive_seed(seed, _REP_TAG, n, rep)


def replicate(kernel, n: int, reps: int, lam: float, tau: float, seed: int, d_max: int,
              metric, jobs: int = 1, cv_grid: CvGrid | None = None) -> list:
    """Evaluate ``metric(fit)`` on ``reps`` independent samples at generation ``n``.

    With ``cv_grid`` each replication re-runs cross-validation on its own
    sample instead of using the supplied ``(lam, tau)``.
    """
    def one(rep):
        s = _rep_seed(seed, n, rep)
        tri = sample_triangles(kernel, n, s)
        lam_r, tau_r = (lam, tau) if cv_grid is None else cross_validate(tri, cv_grid, seed=s).best
        return metric(fit_sample(tri, lam_r, tau_r, d_max, s))

    return Parallel(n_jobs=jobs)(delayed(one)(r) for r in range(reps))


def five_number(values) -> dict[str, float]:
    q = np.quantile(np.asarray(values, dtype=float), [0.0, 0.25, 0.5, 0.75, 1.0])
    return dict(zip(("min", "q1", "median", "q3", "max"), map(float, q)))


# --- figures ----------------------------------------------------------------

def figure_slice(fit: est.DensityFit, truth, x0: float, y0: float, z_grid) -> tuple[np.ndarray, np.ndarray]:
    """Estimated and true curves ``z -> P(x0, y0, z)``."""
    z = np.asarray(z_grid, dtype=float)
    pts = np.column_stack([np.full_like(z, x0), np.full_like(z, y0), z])
    return fit.eval_normalized(pts), truth.density(x0, y0, z)


def figure_surface(fit: est.DensityFit, truth, x0: float, y_grid, z_grid) -> tuple[np.ndarray, np.ndarray]:
    """True and estimated ``P(x0, y, z)`` matrices, rows indexed by ``y``."""
    y = np.asarray(y_grid, dtype=float)
    z = np.asarray(z_grid, dtype=float)
    return truth.density(x0, y[:, None], z[None, :]), fit.slice_grid(x0, y, z)


def figure_point_boxplot(kernel, point, generations, reps: int, grid: CvGrid, seed: int,
                         d_max: int = 1000, per_replication_cv: bool = False, jobs: int = 1):
    """Estimated ``P_hat(point)`` per (generation, replication).

    Returns ``(rows, params)`` where rows are ``(n, rep, value)`` and
    ``params[n] = (lambda, tau)`` (None when re-selected per replication).
    """
    gens = list(generations)
    if any(b <= a for a, b in zip(gens, gens[1:])):
        raise ValueError("generations must be ascending")
    rows, params = [], {}
    x, y, z = point
    for n in gens:
        if per_replication_cv:
            lam, tau, cvg = None, None, grid
        else:
            (lam, tau), cvg = select_params(kernel, n, grid, seed, jobs), None
        params[n] = (lam, tau)
        vals = replicate(kernel, n, reps, lam, tau, seed, d_max,
                         lambda f: est.eval_normalized(f, x, y, z), jobs, cvg)
        rows.extend((n, r, v) for r, v in enumerate(vals))
    return rows, params


def figure_error_boxplot(kernel, generations, reps: int, grid: CvGrid, seed: int, x0: float = 0.5,
                         quad: QuadratureGrid = QuadratureGrid(), d_max: int = 1000, jobs: int = 1):
    """Slice errors ``int int_box (P_hat - P)^2(x0, .)`` per (generation, replication)."""
    rows, params = [], {}
    for n in generations:
        lam, tau = select_params(kernel, n, grid, seed, jobs)
        params[n] = (lam, tau)
        vals = replicate(kernel, n, reps, lam, tau, seed, d_max,
                         lambda f: quad_slice_error(f, kernel, x0, quad), jobs)
        rows.extend((n, r, v) for r, v in enumerate(vals))
    return rows, params


def medians_by_generation(rows) -> dict[int, float]:
    out = {}
    for n in sorted({r[0] for r in rows}):
        out[n] = float(np.median([r[-1] for r in rows if r[0] == n]))
    return out


def spearman_trend(medians: dict[int, float]) -> float:
    ns = sorted(medians)
    return float(stats.spearmanr(ns, [medians[n] for n in ns]).statistic)


# --- concentration ----------------------------------------------------------

TEST_FUNCTIONS = {
    "identity": lambda x: x,
    "indicator_plus": lambda x: (np.asarray(x) > 0).astype(float),
}


def _centered_statistic(values: np.ndarray, g, mean: float) -> float:
    return abs(float(np.sum(g(values) - mean))) / np.sqrt(values.size)


def _twopoint_mean(g) -> float:
    return 0.5 * (float(g(np.array(-1.0))) + float(g(np.array(1.0))))


def concentration_statistics(model: TwoPointModel, g_id: str, n: int, reps: int, seed: int) -> np.ndarray:
    """``|G_n|^{-1/2} |M_{G_n}(g - <mu, g>)|`` over ``reps`` independent trees."""
    g = TEST_FUNCTIONS[g_id]
    mean = _twopoint_mean(g)
    out = np.empty(reps)
    for r in range(reps):
        tree = simulate_tree(model, None, n, derive_seed(seed, _CONC_TAG, n, r))
        out[r] = _centered_statistic(tree.generation(n), g, mean)
    return out


def exact_twopoint_tail(a: float, g_id: str, n: int, deltas) -> np.ndarray:
    """``P(statistic >= delta)`` by enumerating every sign configuration of the tree."""
    g = TEST_FUNCTIONS[g_id]
    mean = _twopoint_mean(g)
    nodes = (1 << (n + 1)) - 1
    first = (1 << n) - 1
    p = (1.0 + a) / 2.0
    configs = np.array(list(itertools.product((-1.0, 1.0), repeat=nodes)))
    parent = (np.arange(1, nodes) - 1) // 2
    same = configs[:, 1:] == configs[:, parent]
    probs = 0.5 * np.prod(np.where(same, p, 1.0 - p), axis=1)
    stat = np.abs((g(configs[:, first:]) - mean).sum(axis=1)) / np.sqrt(1 << n)
    deltas = np.asarray(deltas, dtype=float)
    # tolerance guards ties between lattice values and grid points
    return np.array([probs[stat >= dl - 1e-12].sum() for dl in deltas])


def empirical_tail(stat: np.ndarray, deltas) -> np.ndarray:
    return np.array([np.mean(stat >= dl - 1e-12) for dl in np.asarray(deltas, dtype=float)])


def run_concentration(model: TwoPointModel, g_id: str, n: int, reps: int, deltas, seed: int):
    """Empirical tail frequencies next to the Bernstein-type bound.

    The bound uses the exact two-point constants (``alpha = |a|``, ``R = 1``)
    and the smallest ``C >= 1`` that makes it hold at the first ``delta``.
    Returns ``(rows, C)``; each row is a dict.
    """
    deltas = np.asarray(deltas, dtype=float)
    stat = concentration_statistics(model, g_id, n, reps, seed)
    tail = empirical_tail(stat, deltas)
    alpha = abs(model.a)
    fb = theory.twopoint_function_bounds(model.a, TEST_FUNCTIONS[g_id])
    c1v = theory.c1(alpha, 1.0, n, fb.sup_Qg2)
    c2v = theory.c2(alpha, 1.0, fb.sup_gtilde, fb.sup_Qg)
    vnv = theory.v_n(alpha, n)
    shape = theory.bernstein_bound(deltas, c1v, c2v, vnv, 1.0)
    C = max(1.0, float(tail[0] / shape[0]))
    bound = C * shape  # equals the tail at the first delta up to rounding
    rows = []
    for dl, t, sh, b in zip(deltas, tail, shape, bound):
        rows.append(dict(delta=float(dl), tail=float(t), se=float(np.sqrt(t * (1 - t) / reps)),
                         shape=float(sh), bound=float(b), dominated=bool(t <= b * (1 + 1e-12)),
                         c1=c1v, c2=c2v, v_n=vnv))
    return rows, C


# --- rate study -------------------------------------------------------------

@dataclass(frozen=True)
class RateStudyRow:
    a: float
    n: int
    rep: int
    error: float


def linear_bar(a: float, sigma: float = 1.0, rho: float = 0.3) -> NbarModel:
    return NbarModel(sigma=sigma, rho=rho, drift="linear", slope=a)


def run_rate_study(a_values, n_range, reps: int, seed: int, grid: CvGrid = CvGrid(),
                   x0: float = 0.5, quad: QuadratureGrid = QuadratureGrid(),
                   d_max: int = 1000, sigma: float = 1.0, rho: float = 0.3, jobs: int = 1):
    """Slice error vs generation on linear BAR chains ``X_u0 = a X_u + e``.

    ``|a|`` stands in for the ergodicity rate.  Returns ``(rows, slopes,
    params)`` with ``slopes[a]`` the least-squares slope of
    ``log(median error)`` against ``n``.
    """
    rows, slopes, params = [], {}, {}
    ns = list(n_range)
    for a in a_values:
        kernel = linear_bar(a, sigma, rho)
        sub = derive_seed(seed, int(round(a * 1e6)))
        errs, med = figure_error_boxplot(kernel, ns, reps, grid, sub, x0, quad, d_max, jobs)
        rows.extend(RateStudyRow(a, n, r, e) for n, r, e in errs)
        params.update({(a, n): p for n, p in med.items()})
        medians = medians_by_generation(errs)
        slopes[a] = float(np.polyfit(ns, np.log([medians[n] for n in ns]), 1)[0])
    return rows, slopes, params
