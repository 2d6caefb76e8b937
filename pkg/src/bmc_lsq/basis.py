"""Gaussian tensor basis on R^3 with data-driven centers.

``phi_j(x, y, z) = exp(-((x - c_j)^2 + (y - c_j0)^2 + (z - c_j1)^2) / (2 tau^2))``

Each center triple is one observed mother-daughter triangle.  Because
every factor is Gaussian, the (y, z)-integrals needed by the estimator
have closed forms:

* ``overlap_bar(i, j, x) = int int phi_i phi_j dy dz``
  ``= pi tau^2 exp(-(2(x-c_i)^2 + 2(x-c_j)^2 + (c_i0-c_j0)^2 + (c_i1-c_j1)^2) / (4 tau^2))``
* ``phi_marginal_integral(j, x) = int int phi_j dy dz = 2 pi tau^2 exp(-(x-c_j)^2 / (2 tau^2))``
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GaussianBasis:
    tau: float
    centers: np.ndarray

    def __post_init__(self):
        centers = np.array(self.centers, dtype=np.float64, copy=True)
        if centers.ndim != 2 or centers.shape[1] != 3 or centers.shape[0] < 1:
            raise ValueError(f"centers must have shape (d, 3) with d >= 1, got {centers.shape}")
        if not np.all(np.isfinite(centers)):
            raise ValueError("centers must be finite")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        centers.flags.writeable = False
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def d(self) -> int:
        return self.centers.shape[0]

    def with_tau(self, tau: float) -> "GaussianBasis":
        return GaussianBasis(tau=tau, centers=self.centers)

    def factors(self, v, axis: int) -> np.ndarray:
        """``exp(-(v - c[:, axis])^2 / (2 tau^2))`` with shape ``(len(v), d)``."""
        v = np.asarray(v, dtype=np.float64).reshape(-1, 1)
        diff = v - self.centers[:, axis]
        return np.exp(-(diff * diff) / (2.0 * self.tau ** 2))

    def evaluate(self, points) -> np.ndarray:
        """Matrix ``Phi[k, j] = phi_j(points[k])`` for points of shape ``(N, 3)``."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        sq = np.zeros((p.shape[0], self.d))
        for axis in range(3):
            diff = p[:, axis:axis + 1] - self.centers[:, axis]
            sq += diff * diff
        return np.exp(-sq / (2.0 * self.tau ** 2))

    def child_gram(self) -> np.ndarray:
        """``G[i, j] = exp(-((c_i0-c_j0)^2 + (c_i1-c_j1)^2) / (4 tau^2))``, exactly symmetric."""
        c0 = self.centers[:, 1]
        c1 = self.centers[:, 2]
        d0 = c0[:, None] - c0[None, :]
        d1 = c1[:, None] - c1[None, :]
        return np.exp(-(d0 * d0 + d1 * d1) / (4.0 * self.tau ** 2))

    def overlap_matrix(self, x: float) -> np.ndarray:
        """The ``d x d`` matrix of ``overlap_bar(i, j, x)``."""
        a = self.factors([x], 0)[0]
        return np.pi * self.tau ** 2 * self.child_gram() * np.outer(a, a)

    def marginal_integrals(self, x) -> np.ndarray:
        """``(len(x), d)`` matrix of ``phi_marginal_integral(j, x)``."""
        return 2.0 * np.pi * self.tau ** 2 * self.factors(x, 0)


def select_centers(triangles, d: int, rng: np.random.Generator) -> np.ndarray:
    """Pick ``d`` distinct triangles (without replacement) as center triples."""
    tri = np.asarray(triangles, dtype=np.float64).reshape(-1, 3)
    if d < 1 or d > tri.shape[0]:
        raise ValueError(f"need 1 <= d <= {tri.shape[0]} triangles, got d={d}")
    idx = rng.choice(tri.shape[0], size=d, replace=False)
    return tri[idx].copy()


def eval_phi(b: GaussianBasis, j: int, x: float, y: float, z: float) -> float:
    c, c0, c1 = b.centers[j]
    s = (x - c) ** 2 + (y - c0) ** 2 + (z - c1) ** 2
    return float(np.exp(-s / (2.0 * b.tau ** 2)))


def overlap_bar(b: GaussianBasis, i: int, j: int, x: float) -> float:
    ci, ci0, ci1 = b.centers[i]
    cj, cj0, cj1 = b.centers[j]
    expo = 2.0 * ((x - ci) ** 2 + (x - cj) ** 2) + ((ci0 - cj0) ** 2 + (ci1 - cj1) ** 2)
    return float(np.pi * b.tau ** 2 * np.exp(-expo / (4.0 * b.tau ** 2)))


def phi_marginal_integral(b: GaussianBasis, j: int, x: float) -> float:
    c = b.centers[j, 0]
    return float(2.0 * np.pi * b.tau ** 2 * np.exp(-((x - c) ** 2) / (2.0 * b.tau ** 2)))
