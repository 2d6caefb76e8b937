"""K-fold cross-validation over the (lambda, tau) grid.

Two held-out criteria are available:

``S``  ``(1/2|F|) sum_u int int P_hat(X_u, y, z)^2 dy dz - (1/|F|) sum_u P_hat(X_u^triangle)``
``K``  ``-(1/|F|) sum_u log P_hat(X_u^triangle)``

``S`` is scored on the raw estimator by default (it is then exactly the
least-squares objective assembled on the held-out fold); ``K`` always uses
the renormalized estimator, floored at ``EPS_LOG``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import estimator as est
from .basis import GaussianBasis, select_centers
from .rng import derive_seed

EPS_LOG = 1e-12
DEFAULT_TAUS = (0.0316, 0.075, 0.1778, 0.4217, 1.0, 2.3714, 5.6234, 13.3352, 31.6228)
DEFAULT_LAMBDAS = (0.001, 0.0032, 0.01, 0.0316, 0.1, 0.3162, 1.0, 3.1623, 10.0)

_FOLD_TAG = 11
_CENTER_TAG = 12


@dataclass(frozen=True)
class CvGrid:
    lambdas: tuple = DEFAULT_LAMBDAS
    taus: tuple = DEFAULT_TAUS
    folds: int = 5
    criterion: str = "S"
    s_variant: str = "raw"
    d_max: int = 1000

    def __post_init__(self):
        for name in ("lambdas", "taus"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ValueError(f"{name} grid is empty")
            if any(v <= 0 for v in vals):
                raise ValueError(f"{name} grid must be strictly positive")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} grid must be sorted ascending without repeats")
            object.__setattr__(self, name, vals)
        if self.folds < 2:
            raise ValueError(f"need at least 2 folds, got {self.folds}")
        if self.criterion not in ("S", "K"):
            raise ValueError(f"criterion must be 'S' or 'K', got {self.criterion!r}")
        if self.s_variant not in ("raw", "normalized"):
            raise ValueError(f"s_variant must be 'raw' or 'normalized', got {self.s_variant!r}")
        if self.d_max < 1:
            raise ValueError("d_max must be positive")


@dataclass
class CvReport:
    grid: CvGrid
    fold_scores: np.ndarray          # (n_lambda, n_tau, folds)
    best: tuple[float, float]
    floored: np.ndarray              # K-criterion floored terms per cell
    checks: list = field(default_factory=list)

    @property
    def scores(self) -> np.ndarray:
        return self.fold_scores.mean(axis=2)


def partition_folds(n: int, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Split the indices of generation ``n`` into ``k`` disjoint, near-equal folds."""
    return partition_indices(1 << n, k, rng)


def partition_indices(size: int, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    if k > size:
        raise ValueError(f"cannot split {size} items into {k} folds")
    perm = rng.permutation(size)
    return [np.sort(part) for part in np.array_split(perm, k)]


def score_S(fit: est.DensityFit, holdout, normalized: bool = False) -> float:
    """Held-out ISE surrogate with the squared term in closed form.

    With ``normalized=True`` the renormalized estimator is scored; parents
    where it is undefined contribute zero to both terms.
    """
    tri = np.asarray(holdout, dtype=np.float64).reshape(-1, 3)
    sq = fit.squared_integral(tri[:, 0])
    vals = fit.eval_raw(tri)
    if normalized:
        den = fit.denominator(tri[:, 0])
        ok = den > est.EPS_DEN
        sq = np.where(ok, sq / np.where(ok, den, 1.0) ** 2, 0.0)
        vals = np.where(ok, vals / np.where(ok, den, 1.0), 0.0)
    return float(0.5 * sq.mean() - vals.mean())


def _log_floored(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, int]:
    ok = den > est.EPS_DEN
    vals = np.full(num.shape, EPS_LOG)
    vals[ok] = num[ok] / den[ok]
    floored = int(np.count_nonzero(~ok | (vals < EPS_LOG)))
    return np.log(np.maximum(vals, EPS_LOG)), floored


def score_K(fit: est.DensityFit, holdout, return_floored: bool = False):
    """Held-out negative mean log-density, floored at ``EPS_LOG``.

    Triangles whose parent lies where the estimator has no mass count as
    floored terms.
    """
    tri = np.asarray(holdout, dtype=np.float64).reshape(-1, 3)
    logs, floored = _log_floored(fit.eval_raw(tri), fit.denominator(tri[:, 0]))
    score = float(-logs.mean())
    return (score, floored) if return_floored else score


def _fold_scores(train, test, grid: CvGrid, seed: int, fold: int, check: bool):
    n_lam, n_tau = len(grid.lambdas), len(grid.taus)
    scores = np.empty((n_lam, n_tau))
    floored = np.zeros((n_lam, n_tau), dtype=int)
    checks = []
    d = min(grid.d_max, train.shape[0])
    centers = select_centers(train, d, np.random.default_rng(derive_seed(seed, _CENTER_TAG, fold)))
    for t, tau in enumerate(grid.taus):
        basis = GaussianBasis(tau, centers)
        system = est.assemble(basis, train)
        if check:
            h_inf = float(np.max(np.abs(system.h_hat)))
            sym = bool(np.array_equal(system.H_hat, system.H_hat.T))
            min_eig = est.min_eigenvalue(system.H_hat)
        if grid.criterion == "S" and grid.s_variant == "raw":
            held = est.assemble(basis, test)
        elif grid.criterion == "K":
            phi_test = basis.evaluate(test)
            marg = basis.marginal_integrals(test[:, 0])
        for li, lam in enumerate(grid.lambdas):
            f = est.solve_fit(system, basis, lam)
            if check:
                res = est.ridge_residual(system.H_hat, system.h_hat, lam, f.beta_tilde)
                checks.append(dict(fold=fold, lam=lam, tau=tau, symmetric=sym,
                                   min_eig=min_eig, residual=res, bound=1e-8 * (1 + h_inf)))
            if grid.criterion == "S" and grid.s_variant == "raw":
                scores[li, t] = est.objective(held, f.beta)
            elif grid.criterion == "S":
                scores[li, t] = score_S(f, test, normalized=True)
            else:
                logs, nfl = _log_floored(phi_test @ f.beta, marg @ f.beta)
                scores[li, t] = -logs.mean()
                floored[li, t] = nfl
    return scores, floored, checks


def select_best(grid: CvGrid, scores: np.ndarray) -> tuple[float, float]:
    """Argmin of the averaged scores; ties go to larger lambda, then larger tau."""
    s = np.where(np.isnan(scores), np.inf, scores)
    best = s.min()
    for li in reversed(range(len(grid.lambdas))):
        for ti in reversed(range(len(grid.taus))):
            if s[li, ti] == best:
                return grid.lambdas[li], grid.taus[ti]
    raise AssertionError("unreachable")


def cross_validate(triangles, grid: CvGrid, seed: int, jobs: int = 1, check: bool = False) -> CvReport:
    """Score every (lambda, tau) cell by K-fold CV and pick the minimizer.

    Fold ``k`` trains on the complement of fold ``k`` (centers re-drawn from
    the training triangles only) and is scored on fold ``k``.
    """
    tri = np.asarray(triangles, dtype=np.float64).reshape(-1, 3)
    folds = partition_indices(tri.shape[0], grid.folds,
                              np.random.default_rng(derive_seed(seed, _FOLD_TAG)))
    mask = np.ones(tri.shape[0], dtype=bool)
    jobs_args = []
    for k, idx in enumerate(folds):
        mask[:] = True
        mask[idx] = False
        jobs_args.append((tri[mask], tri[idx], k))
    results = Parallel(n_jobs=jobs)(
        delayed(_fold_scores)(train, test, grid, seed, k, check) for train, test, k in jobs_args
    )
    fold_scores = np.stack([r[0] for r in results], axis=2)
    floored = sum(r[1] for r in results)
    checks = [c for r in results for c in r[2]]
    best = select_best(grid, fold_scores.mean(axis=2))
    return CvReport(grid=grid, fold_scores=fold_scores, best=best, floored=floored, checks=checks)
