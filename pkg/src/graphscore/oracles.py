"""Brute-force references for tiny instances.

Everything here is exponential in the instance size and guarded by hard
size limits. These functions back the test suite and ``graphscore verify``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Callable, Optional, Sequence

import numpy as np

from .core import BinaryAdjacency, GraphDistribution, ScoreMatrix, sigmoid

MAX_SUBSET = 6
MAX_BES_EDGES = 20
MAX_SUPPORT = 100_000


class OracleSizeError(ValueError):
    """Instance too large to enumerate."""


def enumerate_subset_prob(weights, subset) -> float:
    """Probability that sequential sampling without replacement picks ``subset``
    (in any order) in its first ``len(subset)`` draws.

    The running denominator is the sum of the weights still available rather
    than ``1 - sum(previous)``, which is the same number computed without
    cancellation.
    """
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be positive and finite")
    subset = tuple(int(j) for j in subset)
    if len(subset) > MAX_SUBSET:
        raise OracleSizeError(f"subset of size {len(subset)} exceeds the limit of {MAX_SUBSET}")
    if len(set(subset)) != len(subset):
        raise ValueError("subset has repeated members")
    w = w / w.sum()
    total = 0.0
    for order in itertools.permutations(subset):
        p = 1.0
        rest = w.copy()
        for j in order:
            remaining = rest.sum()
            p *= w[j] / remaining
            rest[j] = 0.0
        total += p
    return total


def subset_score_oracle(phi_row, node: int, subset, temperature: float = 1.0) -> np.ndarray:
    """Exact gradient of ``log p(subset)`` w.r.t. the row scores, by summing
    the Plackett-Luce log-derivatives of every ordering."""
    phi_row = np.asarray(phi_row, dtype=float)
    scaled = phi_row / temperature
    cand = np.ones(phi_row.size, dtype=bool)
    cand[node] = False
    subset = tuple(int(j) for j in subset)
    logps, grads = [], []
    for order in itertools.permutations(subset):
        avail = cand.copy()
        g = np.zeros(phi_row.size)
        lp = 0.0
        for j in order:
            z = np.where(avail, scaled, -np.inf)
            m = z[avail].max()
            e = np.exp(z - m)
            soft = e / e.sum()
            lp += np.log(soft[j])
            g -= soft
            g[j] += 1.0
            avail[j] = False
        logps.append(lp)
        grads.append(g)
    logps = np.array(logps)
    post = np.exp(logps - logps.max())
    post /= post.sum()
    return (post[:, None] * np.array(grads)).sum(axis=0) / temperature


@dataclass
class SupportEnumeration:
    """Support of a graph distribution with exact probabilities.

    For SNS the enumeration runs over the extended (pre-removal) support, so
    two entries may share the same real-node adjacency; ``extended`` holds the
    ``N x (N + d)`` indicator of each entry.
    """

    adjacencies: list
    probabilities: np.ndarray
    score_grads: np.ndarray
    extended: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return len(self.adjacencies)

    def dense(self) -> np.ndarray:
        return np.array([a.to_dense() for a in self.adjacencies])

    def mean(self) -> np.ndarray:
        """Expected real-node adjacency."""
        return np.tensordot(self.probabilities, self.dense(), axes=1)

    def extended_mean(self) -> np.ndarray:
        ext = self.extended if self.extended is not None else self.dense()
        return np.tensordot(self.probabilities, ext, axes=1)


def _bes_support(phi: ScoreMatrix) -> SupportEnumeration:
    n = phi.n_nodes
    edges = [(i, j) for i in range(n) for j in range(n) if i != j]
    if len(edges) > MAX_BES_EDGES:
        raise OracleSizeError(f"{len(edges)} stochastic edges exceed the limit of {MAX_BES_EDGES}")
    q = np.array([sigmoid(phi.values[i, j]) for i, j in edges])
    adjs, probs, grads = [], [], []
    for bits in itertools.product((0, 1), repeat=len(edges)):
        b = np.array(bits, dtype=float)
        dense = np.zeros((n, n))
        g = np.zeros((n, n))
        for (i, j), bit, qq in zip(edges, b, q):
            dense[i, j] = bit
            g[i, j] = bit - qq
        adjs.append(BinaryAdjacency.from_dense(dense))
        probs.append(float(np.prod(np.where(b > 0, q, 1.0 - q))))
        grads.append(g)
    return SupportEnumeration(adjs, np.array(probs), np.array(grads))


def _sns_support(phi: ScoreMatrix, dist: GraphDistribution) -> SupportEnumeration:
    n, k, cols = phi.n_nodes, dist.k_neighbors, phi.n_columns
    if k > MAX_SUBSET:
        raise OracleSizeError(f"k={k} exceeds the limit of {MAX_SUBSET}")
    n_rows = comb(cols - 1, k)
    if n_rows**n > MAX_SUPPORT:
        raise OracleSizeError(f"support of size {n_rows ** n} exceeds the limit of {MAX_SUPPORT}")
    per_row = []
    for i in range(n):
        cand = [int(c) for c in phi.candidates(i)]
        scaled = phi.values[i] / dist.temperature
        w = np.exp(scaled[cand] - scaled[cand].max())
        pos = {c: p for p, c in enumerate(cand)}
        options = []
        for s in itertools.combinations(cand, k):
            p = enumerate_subset_prob(w, [pos[c] for c in s])
            g = subset_score_oracle(phi.values[i], i, s, dist.temperature)
            options.append((s, p, g))
        per_row.append(options)
    adjs, probs, grads, ext = [], [], [], []
    for combo in itertools.product(*per_row):
        e = np.zeros((n, cols))
        g = np.zeros((n, cols))
        p = 1.0
        for i, (s, pr, gr) in enumerate(combo):
            e[i, list(s)] = 1.0
            g[i] = gr
            p *= pr
        adjs.append(BinaryAdjacency(n, tuple(tuple(j for j in s if j < n) for s, _, _ in combo)))
        probs.append(p)
        grads.append(g)
        ext.append(e)
    return SupportEnumeration(adjs, np.array(probs), np.array(grads), np.array(ext))


def enumerate_support(phi: ScoreMatrix, dist: GraphDistribution) -> SupportEnumeration:
    """Every support element with its probability and exact score ``grad log p``."""
    if dist.is_sns:
        if phi.n_dummies != dist.n_dummies:
            raise ValueError("dummy count mismatch between scores and distribution")
        return _sns_support(phi, dist)
    if phi.n_dummies:
        raise ValueError("BES does not use dummy columns")
    return _bes_support(phi)


def exact_frechet_mean(enum: SupportEnumeration) -> BinaryAdjacency:
    """Support element minimizing the expected squared Hamming distance.

    Distances are measured on the extended indicators when present; ties go
    to the first element in enumeration order.
    """
    x = enum.extended if enum.extended is not None else enum.dense()
    x = x.reshape(enum.size, -1)
    size = x.sum(axis=1)
    p = enum.probabilities
    best, best_val = 0, np.inf
    chunk = max(1, 2_000_000 // max(1, enum.size))
    for start in range(0, enum.size, chunk):
        cand = x[start : start + chunk]
        h = size[start : start + chunk, None] + size[None, :] - 2.0 * cand @ x.T
        val = (h * h) @ p
        j = int(np.argmin(val))
        # strict improvement keeps the earliest minimizer; 1e-12 absorbs rounding
        if val[j] < best_val - 1e-12:
            best, best_val = start + j, val[j]
    return enum.adjacencies[best]


def exact_expected_gradient(
    phi: ScoreMatrix, dist: GraphDistribution, cost: Callable[[BinaryAdjacency], float]
) -> np.ndarray:
    """``sum_A p(A) cost(A) grad log p(A)`` over the support."""
    enum = enumerate_support(phi, dist)
    d = np.array([float(cost(a)) for a in enum.adjacencies])
    return np.tensordot(enum.probabilities * d, enum.score_grads, axes=1)


def exact_expected_gradient_layers(
    phi: ScoreMatrix, dist: GraphDistribution, cost: Callable[..., float], n_layers: int = 2
) -> np.ndarray:
    """Gradient of ``E[cost(A1, ..., AL)]`` with independent layers, by enumerating the product support."""
    enum = enumerate_support(phi, dist)
    if enum.size**n_layers > MAX_SUPPORT:
        raise OracleSizeError("product support too large")
    grad = np.zeros_like(enum.score_grads[0])
    for idx in itertools.product(range(enum.size), repeat=n_layers):
        p = float(np.prod(enum.probabilities[list(idx)]))
        d = float(cost(*[enum.adjacencies[j] for j in idx]))
        grad += p * d * enum.score_grads[list(idx)].sum(axis=0)
    return grad


def exact_expectation(phi: ScoreMatrix, dist: GraphDistribution, cost: Callable[[BinaryAdjacency], float]) -> float:
    enum = enumerate_support(phi, dist)
    return float(sum(p * cost(a) for p, a in zip(enum.probabilities, enum.adjacencies)))


def finite_diff_gradient(f: Callable[[np.ndarray], float], x, step: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function, per coordinate (any array shape)."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        g[i] = (fp - fm) / (2.0 * step)
    return grad
