"""Counter-based random streams keyed by integer tuples.

Every draw is a pure function of ``(seed, key..., counter)``, so a tree
generation can be filled in any order, in one vectorized pass or split
across workers, and still produce bit-identical values.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, *tags: int) -> np.uint64:
    """Fold a seed and integer tags into a single 64-bit stream key."""
    with np.errstate(over="ignore"):
        k = _mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + _GOLDEN)
        for t in tags:
            k = _mix(k ^ (np.array([t & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + _GOLDEN))
    return k[0]


def uniforms(key: np.uint64, counters: np.ndarray, width: int) -> np.ndarray:
    """Uniforms in the open interval (0, 1), shape ``(len(counters), width)``.

    Row ``r`` depends only on ``key`` and ``counters[r]``.
    """
    c = np.asarray(counters, dtype=np.uint64).reshape(-1, 1)
    lanes = np.arange(width, dtype=np.uint64).reshape(1, -1)
    with np.errstate(over="ignore"):
        z = _mix((c * np.uint64(width) + lanes) * _GOLDEN ^ key)
        z = _mix(z + key)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


def box_muller(u1: np.ndarray, u2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two independent standard normals from two independent uniforms."""
    r = np.sqrt(-2.0 * np.log(u1))
    t = 2.0 * np.pi * u2
    return r * np.cos(t), r * np.sin(t)


def derive_seed(seed: int, *tags: int) -> int:
    """Integer sub-seed for ``numpy.random.default_rng``."""
    return int(stream_key(seed, *tags))
