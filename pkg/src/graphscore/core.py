"""Shared value types, random streams and Gumbel helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

UNIFORM_CLAMP = 1e-12
_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by the Philox4x64 bit generator with the 128-bit key
    ``stream_id << 64 | seed``, so equal keys replay identical draws on every
    platform and distinct stream ids give independent sequences.
    ``spawn`` derives child streams deterministically from a per-stream
    counter, which is how per-draw streams are handed to workers.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if not (0 <= seed <= _MASK64 and 0 <= stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._gen = np.random.Generator(np.random.Philox(key=(self.stream_id << 64) | self.seed))
        self._n_spawned = 0

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def child(self, index: int) -> "RngStream":
        """Stream number ``index`` below this one (does not advance the parent)."""
        return RngStream(self.seed, _splitmix64(self.stream_id ^ _splitmix64(index + 1)))

    def spawn(self) -> "RngStream":
        child = self.child(self._n_spawned)
        self._n_spawned += 1
        return child

    def uniform(self, size=None) -> np.ndarray:
        """Uniform draws clamped into ``(1e-12, 1 - 1e-12)``."""
        u = self._gen.random(size)
        return np.clip(u, UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)

    def normal(self, size=None, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)


def gumbel_quantile(u, location=0.0):
    """Inverse CDF of Gumbel(location, 1)."""
    return location - np.log(-np.log(u))


def gumbel_cdf(x, location=0.0):
    return np.exp(-np.exp(-(np.asarray(x, dtype=float) - location)))


def gumbel_draw(rng: RngStream, location=0.0, size=None):
    """Gumbel(location, 1) draws; the clamped uniform keeps them finite."""
    return gumbel_quantile(rng.uniform(size), location)


def logsumexp(values: Iterable[float]) -> float:
    v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    if v.size == 0:
        raise ValueError("logsumexp of an empty sequence")
    m = np.max(v)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(v - m))))


def sigmoid(x):
    return expit(x)


@dataclass(frozen=True)
class GraphDistribution:
    """Either a binary edge sampler (``bes``) or a subset neighborhood sampler (``sns``)."""

    kind: str = "bes"
    k_neighbors: int = 0
    n_dummies: int = 0
    temperature: float = 1.0

    def __post_init__(self):
        if self.kind not in ("bes", "sns"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.kind == "sns" and self.k_neighbors < 1:
            raise ValueError("sns needs k_neighbors >= 1")
        if self.n_dummies < 0:
            raise ValueError("n_dummies must be non-negative")
        if self.kind == "bes" and self.n_dummies:
            raise ValueError("bes does not use dummy nodes")

    @classmethod
    def bes(cls) -> "GraphDistribution":
        return cls("bes")

    @classmethod
    def sns(cls, k: int, n_dummies: int = 0, temperature: float = 1.0) -> "GraphDistribution":
        return cls("sns", k, n_dummies, temperature)

    @property
    def is_sns(self) -> bool:
        return self.kind == "sns"

    def check(self, n_nodes: int) -> None:
        if self.is_sns and self.k_neighbors > n_nodes - 1 + self.n_dummies:
            raise ValueError(
                f"k_neighbors={self.k_neighbors} exceeds the {n_nodes - 1 + self.n_dummies} candidates per row"
            )


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Per-row neighborhood logits, shape ``n_nodes x (n_nodes + n_dummies)``.

    Entry ``(i, j)`` scores the edge ``j -> i``. Diagonal entries are never
    read; dummy columns follow the real ones.
    """

    values: np.ndarray
    n_dummies: int = 0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != v.shape[0] + self.n_dummies:
            raise ValueError(f"score matrix shape {v.shape} inconsistent with {self.n_dummies} dummies")
        off = v[~np.eye(v.shape[0], v.shape[1], dtype=bool)]
        if not np.all(np.isfinite(off)):
            raise ValueError("score matrix has non-finite off-diagonal entries")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    @property
    def diagonal_masked(self) -> bool:
        return True

    def candidate_mask(self) -> np.ndarray:
        """Boolean mask of usable entries (everything except the diagonal)."""
        return ~np.eye(self.n_nodes, self.n_columns, dtype=bool)

    def candidates(self, i: int) -> np.ndarray:
        return np.array([j for j in range(self.n_columns) if j != i], dtype=np.intp)

    def replace(self, values: np.ndarray) -> "ScoreMatrix":
        return ScoreMatrix(values, self.n_dummies)

    def __eq__(self, other):
        return (
            isinstance(other, ScoreMatrix)
            and self.n_dummies == other.n_dummies
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True)
class BinaryAdjacency:
    """Binary graph stored as sorted per-row neighbor sets (row ``i`` = in-neighbors of ``i``)."""

    n_nodes: int
    rows: tuple = field(default=())

    def __post_init__(self):
        rows = tuple(tuple(sorted(int(j) for j in r)) for r in self.rows)
        if len(rows) != self.n_nodes:
            raise ValueError(f"expected {self.n_nodes} rows, got {len(rows)}")
        for i, r in enumerate(rows):
            if len(set(r)) != len(r):
                raise ValueError(f"duplicate neighbors in row {i}")
            if i in r:
                raise ValueError(f"self-loop in row {i}")
            if r and (r[0] < 0 or r[-1] >= self.n_nodes):
                raise ValueError(f"neighbor index out of range in row {i}")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_dense(cls, a) -> "BinaryAdjacency":
        a = np.asarray(a)
        n = a.shape[0]
        return cls(n, tuple(tuple(np.flatnonzero(a[i] != 0)) for i in range(n)))

    @classmethod
    def empty(cls, n: int) -> "BinaryAdjacency":
        return cls(n, ((),) * n)

    @classmethod
    def from_edges(cls, n: int, edges: Sequence[Sequence[int]]) -> "BinaryAdjacency":
        rows = [[] for _ in range(n)]
        for i, j in edges:
            rows[i].append(j)
        return cls(n, tuple(tuple(r) for r in rows))

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes))
        for i, r in enumerate(self.rows):
            a[i, list(r)] = 1.0
        return a

    def edges(self) -> list:
        """``(i, j)`` pairs with ``j`` in row ``i``."""
        return [(i, j) for i, r in enumerate(self.rows) for j in r]

    @property
    def n_edges(self) -> int:
        return sum(len(r) for r in self.rows)
