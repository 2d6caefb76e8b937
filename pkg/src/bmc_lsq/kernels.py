"""Simulatable bifurcating transition kernels.

Two families are provided:

* :class:`NbarModel` -- nonlinear bifurcating autoregression
  ``X_u0 = f(X_u) + e0``, ``X_u1 = f(X_u) + e1`` with centered bivariate
  Gaussian noise of common scale ``sigma`` and correlation ``rho``.
  The transition density is ``P(x, y, z) = g(y - f(x), z - f(x))``.
* :class:`TwoPointModel` -- a chain on ``{-1, +1}`` where each child copies
  its mother with probability ``(1 + a) / 2``.  The identity is an
  eigenfunction of the tagged-chain kernel with eigenvalue ``a``, which
  gives an exactly known geometric ergodicity rate.

Kernels map uniforms to children, so the simulator can feed them from a
counter-based stream (see :mod:`bmc_lsq.rng`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .tree import TreeSample, check_depth, node_count

_ROOT_TAG = 1
_NODE_TAG = 2
_TAGGED_TAG = 3

DRIFTS = ("sinc2pi", "sinc2pi_normalized", "linear")


def sinc_drift(x):
    """``sin(2 pi x) / (2 pi x)``, equal to 1 at the origin."""
    return np.sinc(2.0 * np.asarray(x, dtype=float))


def sinc_drift_normalized(x):
    """Normalized sinc evaluated at ``2 pi x``: ``sin(2 pi^2 x) / (2 pi^2 x)``."""
    return np.sinc(2.0 * np.pi * np.asarray(x, dtype=float))


def biv_gauss_density(e0, e1, sigma: float, rho: float):
    """Centered bivariate normal density, common scale ``sigma``, correlation ``rho``."""
    e0 = np.asarray(e0, dtype=float)
    e1 = np.asarray(e1, dtype=float)
    s2 = sigma * sigma
    one_m = 1.0 - rho * rho
    # grouped so the value is bitwise symmetric in (e0, e1)
    quad = ((e0 * e0 + e1 * e1) - 2.0 * rho * (e0 * e1)) / (2.0 * s2 * one_m)
    return np.exp(-quad) / (2.0 * np.pi * s2 * np.sqrt(one_m))


# --- initial laws -----------------------------------------------------------

@dataclass(frozen=True)
class StandardNormal:
    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        return _rng.box_muller(u[:, 0], u[:, 1])[0]


@dataclass(frozen=True)
class Rademacher:
    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        return np.where(u[:, 0] < 0.5, -1.0, 1.0)


@dataclass(frozen=True)
class PointMass:
    value: float

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        return np.full(u.shape[0], float(self.value))


# --- kernels ----------------------------------------------------------------

@dataclass(frozen=True)
class NbarModel:
    sigma: float = 1.0
    rho: float = 0.3
    drift: str = "sinc2pi"
    slope: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not abs(self.rho) < 1:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")
        if self.drift not in DRIFTS:
            raise ValueError(f"unknown drift {self.drift!r}; choose from {DRIFTS}")

    default_init = StandardNormal()

    def f(self, x):
        if self.drift == "sinc2pi":
            return sinc_drift(x)
        if self.drift == "sinc2pi_normalized":
            return sinc_drift_normalized(x)
        return self.slope * np.asarray(x, dtype=float)

    def density(self, x, y, z):
        fx = self.f(x)
        return biv_gauss_density(np.asarray(y) - fx, np.asarray(z) - fx, self.sigma, self.rho)

    def _from_normals(self, x, z0, z1):
        fx = self.f(x)
        e0 = self.sigma * z0
        e1 = self.sigma * (self.rho * z0 + np.sqrt(1.0 - self.rho ** 2) * z1)
        return fx + e0, fx + e1

    def children_from_uniforms(self, x: np.ndarray, u: np.ndarray):
        z0, z1 = _rng.box_muller(u[:, 0], u[:, 1])
        return self._from_normals(x, z0, z1)

    def step(self, x: float, rng: np.random.Generator) -> tuple[float, float]:
        z0, z1 = rng.standard_normal(2)
        y, z = self._from_normals(x, z0, z1)
        return float(y), float(z)


@dataclass(frozen=True)
class TwoPointModel:
    a: float

    def __post_init__(self):
        if not abs(self.a) <= 1:
            raise ValueError(f"|a| must not exceed 1, got {self.a}")

    default_init = Rademacher()

    @property
    def p_same(self) -> float:
        return (1.0 + self.a) / 2.0

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if not np.all(np.abs(x) == 1.0):
            raise ValueError("two-point states must be -1 or +1")
        return x

    def children_from_uniforms(self, x: np.ndarray, u: np.ndarray):
        x = self._check(x)
        p = self.p_same
        return np.where(u[:, 0] < p, x, -x), np.where(u[:, 1] < p, x, -x)

    def step(self, x: float, rng: np.random.Generator) -> tuple[float, float]:
        x = float(self._check(x))
        u = rng.random(2)
        p = self.p_same
        return (x if u[0] < p else -x), (x if u[1] < p else -x)

    def transition_probability(self, x, y):
        """Probability that a given child is ``y`` when its mother is ``x``."""
        return np.where(np.asarray(x) == np.asarray(y), self.p_same, 1.0 - self.p_same)


def nbar_density(m: NbarModel, x, y, z):
    return m.density(x, y, z)


def nbar_step(m: NbarModel, x: float, rng: np.random.Generator) -> tuple[float, float]:
    return m.step(x, rng)


def twopoint_step(m: TwoPointModel, x: float, rng: np.random.Generator) -> tuple[float, float]:
    return m.step(x, rng)


def simulate_tree(kernel, init_law=None, depth: int = 0, seed: int = 0) -> TreeSample:
    """Simulate a bifurcating chain on generations ``0..depth``.

    The root is drawn from ``init_law`` (the kernel's default when None).
    The children of node ``(m, k)`` are a function of ``(seed, m, k)`` only.
    """
    check_depth(depth)
    init_law = kernel.default_init if init_law is None else init_law
    values = np.empty(node_count(depth))
    root_key = _rng.stream_key(seed, _ROOT_TAG)
    values[0] = init_law.from_uniforms(_rng.uniforms(root_key, np.zeros(1), 2))[0]
    node_key = _rng.stream_key(seed, _NODE_TAG)
    for m in range(depth):
        start = (1 << m) - 1
        size = 1 << m
        parents = values[start:start + size]
        u = _rng.uniforms(node_key, np.arange(start, start + size), 2)
        y, z = kernel.children_from_uniforms(parents, u)
        kids = values[start + size:start + 3 * size]
        kids[0::2] = y
        kids[1::2] = z
    return TreeSample(depth=depth, values=values, seed=seed)


@dataclass(frozen=True)
class TaggedChainPath:
    states: np.ndarray
    seed: int


def tagged_chain_paths(kernel, steps: int, n_paths: int, seed: int, init_law=None) -> np.ndarray:
    """Independent tagged-chain paths, shape ``(n_paths, steps + 1)``.

    At each step the child pair is drawn from the kernel and one of the
    two children is kept with probability 1/2.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    init_law = kernel.default_init if init_law is None else init_law
    out = np.empty((n_paths, steps + 1))
    ids = np.arange(n_paths)
    out[:, 0] = init_law.from_uniforms(_rng.uniforms(_rng.stream_key(seed, _ROOT_TAG), ids, 2))
    key = _rng.stream_key(seed, _TAGGED_TAG)
    block = max(1, 65536 // max(n_paths, 1))
    for t0 in range(0, steps, block):
        t1 = min(steps, t0 + block)
        # step t of path i uses counter t * n_paths + i
        u_all = _rng.uniforms(key, np.arange(t0 * n_paths, t1 * n_paths), 3).reshape(t1 - t0, n_paths, 3)
        for t in range(t0, t1):
            u = u_all[t - t0]
            y, z = kernel.children_from_uniforms(out[:, t], u[:, :2])
            out[:, t + 1] = np.where(u[:, 2] < 0.5, y, z)
    return out


def tagged_chain(kernel, init_law=None, steps: int = 0, seed: int = 0) -> TaggedChainPath:
    states = tagged_chain_paths(kernel, steps, 1, seed, init_law)[0]
    return TaggedChainPath(states=states, seed=seed)


def mu_sample(kernel, size: int, seed: int, burn_in: int = 1000, thin: int = 10,
              chains: int = 1) -> np.ndarray:
    """Approximate draws from the tagged chain's invariant law.

    ``chains`` lineages are run in lockstep; after ``burn_in`` steps every
    ``thin``-th state is kept until ``size`` values are collected.
    """
    per_chain = -(-size // chains)
    paths = tagged_chain_paths(kernel, burn_in + thin * per_chain, chains, seed)
    kept = paths[:, burn_in + thin::thin][:, :per_chain]
    return kept.T.reshape(-1)[:size].copy()

