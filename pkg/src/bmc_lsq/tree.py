"""Binary-tree addressing and node-indexed storage.

Node ``(m, k)`` (generation ``m``, index ``k`` in ``[0, 2**m)``) lives at
flat offset ``2**m - 1 + k``; its children are ``(m+1, 2k)`` and
``(m+1, 2k+1)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

MAX_DEPTH = 24
MAGIC = b"BMCT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


class ConfigurationError(ValueError):
    """Raised when a run parameter falls outside the supported range."""


class NodeId(NamedTuple):
    generation: int
    index: int

    def offset(self) -> int:
        return (1 << self.generation) - 1 + self.index


class Triangle(NamedTuple):
    """A mother-daughter triple ``(X_u, X_u0, X_u1)``."""

    parent: float
    child0: float
    child1: float


def children(u: NodeId) -> tuple[NodeId, NodeId]:
    m, k = u
    return NodeId(m + 1, 2 * k), NodeId(m + 1, 2 * k + 1)


def generation_size(n: int) -> int:
    if n < 0:
        raise ValueError(f"generation must be nonnegative, got {n}")
    if n > 62:
        raise ConfigurationError(f"generation {n} overflows a 64-bit node count")
    return 1 << n


def node_count(depth: int) -> int:
    return (1 << (depth + 1)) - 1


def check_depth(depth: int) -> None:
    if depth < 0:
        raise ConfigurationError(f"depth must be nonnegative, got {depth}")
    if depth > MAX_DEPTH:
        raise ConfigurationError(f"depth {depth} exceeds the cap of {MAX_DEPTH}")


@dataclass(frozen=True)
class TreeSample:
    """Real values on every node of generations ``0..depth``, breadth first."""

    depth: int
    values: np.ndarray
    seed: int

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.shape != (node_count(self.depth),):
            raise ValueError(
                f"expected {node_count(self.depth)} values for depth {self.depth}, "
                f"got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("tree values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __getitem__(self, u: NodeId) -> float:
        return float(self.values[NodeId(*u).offset()])

    def generation(self, m: int) -> np.ndarray:
        """Values of generation ``m`` in index order (a read-only view)."""
        if not 0 <= m <= self.depth:
            raise IndexError(f"generation {m} not in sample of depth {self.depth}")
        start = (1 << m) - 1
        return self.values[start:start + (1 << m)]

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, self.depth, self.seed & 0xFFFFFFFFFFFFFFFF))
            fh.write(self.values.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "TreeSample":
        raw = Path(path).read_bytes()
        magic, version, depth, seed = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a tree sample file")
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        return cls(depth=depth, values=values.astype(np.float64), seed=seed)


def triangles_of_generation(s: TreeSample, n: int) -> np.ndarray:
    """Array of shape ``(2**n, 3)`` holding ``(X_u, X_u0, X_u1)`` for ``u`` in generation n."""
    if n < 0 or n + 1 > s.depth:
        raise ValueError(
            f"triangles over generation {n} need depth >= {n + 1}, sample has {s.depth}"
        )
    kids = s.generation(n + 1)
    return np.column_stack([s.generation(n), kids[0::2], kids[1::2]])
