"""Ergodicity-dependent constants and the Bernstein-type tail bound.

All functions take the geometric ergodicity rate ``alpha`` in (0, 1) and
constant ``R > 0`` of the tagged chain,
``|Q^m g - <mu, g>| <= R ||g||_inf alpha^m``.  Indicator boundaries
(``2 alpha = 1`` and ``2 alpha = sqrt 2``) are matched with an absolute
tolerance of ``BOUNDARY_TOL``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

BOUNDARY_TOL = 1e-12
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ErgodicityProfile:
    alpha: float
    R: float
    n: int
    gamma: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.R > 0:
            raise ValueError(f"R must be positive, got {self.R}")
        if not 0 < self.gamma < 2:
            raise ValueError(f"gamma must lie in (0, 2), got {self.gamma}")
        if self.n < 0:
            raise ValueError(f"n must be nonnegative, got {self.n}")

    def table(self) -> dict[str, float]:
        a, R, n, g = self.alpha, self.R, self.n, self.gamma
        return {
            "c_alpha": c_alpha(a, R),
            "v_n": v_n(a, n),
            "kappa_n": kappa_n(a, n),
            "e_alpha": e_alpha(a),
            "delta_n": delta_n(a, g, n),
        }


@dataclass(frozen=True)
class FunctionBounds:
    """Sup-norms entering ``c1`` and ``c2``: ``||Q g^2||``, ``||Q g||``, ``||g - <mu, g>||``."""

    sup_Qg2: float
    sup_Qg: float
    sup_gtilde: float


def _regime_sqrt2(alpha: float) -> int:
    # -1: 2a < sqrt2, 0: 2a = sqrt2, +1: 2a > sqrt2
    gap = 2.0 * alpha - _SQRT2
    if abs(gap) <= BOUNDARY_TOL:
        return 0
    return -1 if gap < 0 else 1


def _slow_regime(alpha: float) -> bool:
    """True when ``2 alpha > 1`` (the closed branch ``2 alpha <= 1`` wins at the boundary)."""
    return 2.0 * alpha - 1.0 > BOUNDARY_TOL


def c_alpha(alpha: float, R: float) -> float:
    r2 = max(1.0, R * R)
    regime = _regime_sqrt2(alpha)
    if regime < 0:
        return 4.0 * r2 / (2.0 * alpha ** 2 * (1.0 - 2.0 * alpha ** 2))
    if regime == 0:
        return 16.0 * r2
    return 8.0 * r2 / (2.0 * alpha ** 2 - 1.0)


def c1(alpha: float, R: float, n: int, sup_Qg2: float) -> float:
    regime = _regime_sqrt2(alpha)
    if regime < 0:
        growth = 1.0
    elif regime == 0:
        growth = float(n)
    else:
        growth = (2.0 * alpha ** 2) ** n
    return c_alpha(alpha, R) * sup_Qg2 * growth


def c2(alpha: float, R: float, sup_gtilde: float, sup_Qg: float) -> float:
    if not _slow_regime(alpha):
        return 4.0 / 3.0 * (1.0 + R * alpha) * sup_gtilde
    return 2.0 / 3.0 / alpha * R * (1.0 + alpha) * sup_Qg


def v_n(alpha: float, n: int) -> float:
    if not _slow_regime(alpha):
        return 2.0 ** (-n / 2.0)
    return (2.0 * alpha ** 2) ** (n / 2.0)


def kappa_n(alpha: float, n: int) -> float:
    if not _slow_regime(alpha):
        return 1.0
    return (2.0 * alpha) ** (n / 2.0)


def e_alpha(alpha: float) -> float:
    if not _slow_regime(alpha):
        return 1.0
    return math.log(1.0 / alpha) / math.log(2.0)


def delta_n(alpha: float, gamma: float, n: int) -> float:
    """``|G_n|^(-e(alpha) / (2 + gamma))``."""
    return 2.0 ** (-n * e_alpha(alpha) / (2.0 + gamma))


def bernstein_bound(delta, c1v: float, c2v: float, vnv: float, C: float = 1.0):
    """``C exp(-delta^2 / (2 (c2 v_n delta + c1)))``; vectorizes over ``delta``."""
    d = np.asarray(delta, dtype=float)
    out = C * np.exp(-d * d / (2.0 * (c2v * vnv * d + c1v)))
    return float(out) if out.ndim == 0 else out


def log_bernstein_shape(delta, c1v: float, c2v: float, vnv: float):
    d = np.asarray(delta, dtype=float)
    return -d * d / (2.0 * (c2v * vnv * d + c1v))


# --- exact bounds on the two-point chain -----------------------------------

_STATES = (-1.0, 1.0)


def twopoint_Q(a: float, g) -> dict[float, float]:
    """Tagged-chain action ``Q g(x)`` for ``g`` given as ``{state: value}``."""
    p = (1.0 + a) / 2.0
    return {x: p * g[x] + (1.0 - p) * g[-x] for x in _STATES}


def twopoint_function_bounds(a: float, g) -> FunctionBounds:
    """Exact :class:`FunctionBounds` for ``g: {-1, +1} -> R`` (uniform invariant law)."""
    g = {x: float(g(x)) if callable(g) else float(g[x]) for x in _STATES}
    mean = 0.5 * (g[-1.0] + g[1.0])
    qg = twopoint_Q(a, g)
    qg2 = twopoint_Q(a, {x: v * v for x, v in g.items()})
    return FunctionBounds(
        sup_Qg2=max(abs(v) for v in qg2.values()),
        sup_Qg=max(abs(v) for v in qg.values()),
        sup_gtilde=max(abs(v - mean) for v in g.values()),
    )


def twopoint_triangle_bounds(a: float, g) -> FunctionBounds:
    """Exact bounds for ``g`` on triangles: ``||QPg^2||``, ``||QPg||``, ``||g - <mu^tri, g>||``."""
    p = (1.0 + a) / 2.0

    def P(h):
        out = {}
        for x in _STATES:
            tot = 0.0
            for y, z in itertools.product(_STATES, repeat=2):
                w = (p if y == x else 1.0 - p) * (p if z == x else 1.0 - p)
                tot += w * h(x, y, z)
            out[x] = tot
        return out

    pg = P(g)
    pg2 = P(lambda x, y, z: g(x, y, z) ** 2)
    mean = 0.5 * (pg[-1.0] + pg[1.0])
    spread = max(abs(g(x, y, z) - mean) for x, y, z in itertools.product(_STATES, repeat=3))
    return FunctionBounds(
        sup_Qg2=max(abs(v) for v in twopoint_Q(a, pg2).values()),
        sup_Qg=max(abs(v) for v in twopoint_Q(a, pg).values()),
        sup_gtilde=spread,
    )
