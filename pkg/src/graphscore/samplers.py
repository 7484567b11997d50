"""Graph samplers: binary edge sampler (BES) and subset neighborhood sampler (SNS).

Each sampler exposes sampling, the log-likelihood of a sample with its
gradient with respect to the scores, the expected adjacency and the Frechet
mean adjacency.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import log_expit, logit

from . import kernels, quadrature
from .core import BinaryAdjacency, GraphDistribution, RngStream, ScoreMatrix, gumbel_quantile, logsumexp, sigmoid

UNSTABLE_LOG_PROB = -30.0
LOG_EPS_CLAMP = 600.0


class ConfigurationError(ValueError):
    """Sampler and score matrix do not fit together."""


@dataclass(frozen=True)
class RowSubset:
    """Neighborhood drawn for ``node`` before dummy removal."""

    node: int
    members: tuple
    k: int

    def __post_init__(self):
        members = tuple(sorted(int(j) for j in self.members))
        if self.node in members:
            raise ValueError("a node cannot be its own neighbor")
        object.__setattr__(self, "members", members)


@dataclass
class LikelihoodResult:
    log_prob: float
    grad: np.ndarray
    n_unstable: int = 0


@dataclass(frozen=True)
class GraphSample:
    """A sampled graph plus the pre-removal subsets needed to score it (SNS only)."""

    adjacency: BinaryAdjacency
    subsets: Optional[tuple] = None


def _check(phi: ScoreMatrix, dist: GraphDistribution) -> None:
    if dist.kind == "bes" and phi.n_dummies:
        raise ConfigurationError("BES does not use dummy columns")
    if dist.is_sns and phi.n_dummies != dist.n_dummies:
        raise ConfigurationError(f"score matrix has {phi.n_dummies} dummy columns, distribution expects {dist.n_dummies}")
    try:
        dist.check(phi.n_nodes)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None


# --------------------------------------------------------------------- BES


def bes_sample(phi: ScoreMatrix, rng: RngStream) -> BinaryAdjacency:
    if phi.n_dummies:
        raise ConfigurationError("BES does not use dummy columns")
    u = rng.uniform(phi.values.shape)
    a = (u < sigmoid(phi.values)) & phi.candidate_mask()
    return BinaryAdjacency.from_dense(a)


def bes_row_log_likelihood(phi_row, a_row, node: int) -> LikelihoodResult:
    """Row ``node`` of the Bernoulli log-mass; ``a_row`` is the dense 0/1 row."""
    phi_row = np.asarray(phi_row, dtype=float)
    a_row = np.asarray(a_row, dtype=float)
    mask = np.ones(phi_row.size, dtype=bool)
    mask[node] = False
    lp = np.where(a_row > 0, log_expit(phi_row), log_expit(-phi_row))
    grad = np.where(mask, a_row - sigmoid(phi_row), 0.0)
    return LikelihoodResult(float(lp[mask].sum()), grad)


def bes_log_likelihood(phi: ScoreMatrix, a: BinaryAdjacency) -> LikelihoodResult:
    v = phi.values
    dense = a.to_dense()
    mask = phi.candidate_mask()
    lp = np.where(dense > 0, log_expit(v), log_expit(-v))
    grad = np.where(mask, dense - sigmoid(v), 0.0)
    return LikelihoodResult(float(lp[mask].sum()), grad)


def bes_kl_regularizer(phi: ScoreMatrix, prior_p: float):
    """Sum over edges of KL(Bernoulli(sigmoid(phi)) || Bernoulli(prior_p)) and its gradient."""
    if not 0.0 < prior_p < 1.0:
        raise ValueError("prior_p must lie in (0, 1)")
    v = phi.values
    mask = phi.candidate_mask()
    q = sigmoid(v)
    kl = q * (log_expit(v) - np.log(prior_p)) + (1.0 - q) * (log_expit(-v) - np.log1p(-prior_p))
    grad = q * (1.0 - q) * (v - logit(prior_p))
    return float(kl[mask].sum()), np.where(mask, grad, 0.0)


# --------------------------------------------------------------------- SNS


def sns_sample(phi: ScoreMatrix, dist: GraphDistribution, rng: RngStream):
    """Gumbel-top-k neighborhoods; returns the adjacency and the pre-removal subsets."""
    _check(phi, dist)
    n, k = phi.n_nodes, dist.k_neighbors
    g = phi.values / dist.temperature + gumbel_quantile(rng.uniform(phi.values.shape))
    g[~phi.candidate_mask()] = -np.inf
    top = np.argsort(-g, axis=1, kind="stable")[:, :k]
    subsets = tuple(RowSubset(i, tuple(top[i]), k) for i in range(n))
    adjacency = BinaryAdjacency(n, tuple(tuple(j for j in s.members if j < n) for s in subsets))
    return adjacency, subsets


def sns_row_log_likelihood(
    phi_row, subset: RowSubset, temperature: float = 1.0, quad_points: int = quadrature.DEFAULT_POINTS
) -> LikelihoodResult:
    """Log-probability of an unordered Gumbel-top-k subset and its gradient.

    ``phi_row`` is the full row of the score matrix (dummy columns included);
    the entry at ``subset.node`` is ignored. The probability is the integral
    of ``prod_{i in S} (1 - u ** eps_i)`` over ``(0, 1)``, with
    ``eps_i = exp(phi_i / temperature - logsumexp(phi_C / temperature))``,
    computed by quadrature after the substitution ``u = exp(-exp(s))``.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if quad_points < 32:
        raise ValueError("quad_points must be at least 32")
    phi_row = np.asarray(phi_row, dtype=float)
    m = phi_row.size
    members = np.asarray(subset.members, dtype=np.intp)
    if members.size and (members.min() < 0 or members.max() >= m):
        raise ValueError("subset member outside the row")
    in_set = np.zeros(m, dtype=bool)
    in_set[members] = True
    cand = np.ones(m, dtype=bool)
    cand[subset.node] = False
    if members.size > cand.sum():
        raise ValueError("subset larger than the candidate set")
    comp = cand & ~in_set
    grad = np.zeros(m)
    if not comp.any() or members.size == 0:
        return LikelihoodResult(0.0, grad)

    scaled = phi_row / temperature
    comp_scores = scaled[comp]
    log_c = logsumexp(comp_scores)
    raw = scaled[members] - log_c
    log_eps = np.clip(raw, -LOG_EPS_CLAMP, LOG_EPS_CLAMP)
    nodes, log_w = quadrature.subset_nodes(quad_points, members.size)
    logp, g = kernels.subset_loglik_grad(np.ascontiguousarray(log_eps), nodes, log_w)
    g = np.where(raw == log_eps, g, 0.0)

    grad[members] = g / temperature
    grad[comp] = -g.sum() * np.exp(comp_scores - log_c) / temperature
    return LikelihoodResult(logp, grad, int(logp < UNSTABLE_LOG_PROB))


def sns_log_likelihood(
    phi: ScoreMatrix, subsets: Sequence[RowSubset], dist: GraphDistribution, quad_points: int = quadrature.DEFAULT_POINTS
) -> LikelihoodResult:
    _check(phi, dist)
    grad = np.zeros_like(phi.values)
    total, unstable = 0.0, 0
    for s in subsets:
        r = sns_row_log_likelihood(phi.values[s.node], s, dist.temperature, quad_points)
        total += r.log_prob
        grad[s.node] = r.grad
        unstable += r.n_unstable
    return LikelihoodResult(total, grad, unstable)


def sns_extended_mean(phi: ScoreMatrix, dist: GraphDistribution, quad_points: int = quadrature.DEFAULT_POINTS) -> np.ndarray:
    """Inclusion probabilities over all columns, dummies included; rows sum to ``k``.

    Candidate ``i`` is sampled iff its perturbed score beats the ``k``-th
    largest among the other candidates. Conditioning on that score turns the
    probability into a one-dimensional integral of a Poisson-binomial tail,
    rescaled per candidate by its asymptotic decay rate.
    """
    _check(phi, dist)
    n, k = phi.n_nodes, dist.k_neighbors
    mu = np.zeros_like(phi.values)
    for i in range(n):
        cand = phi.candidates(i)
        scores = phi.values[i, cand] / dist.temperature
        m = scores.size
        if k >= m:
            mu[i, cand] = 1.0
            continue
        log_rate = np.empty(m)
        for c in range(m):
            others = np.sort(np.delete(scores, c))[: m - k]
            log_rate[c] = np.logaddexp(scores[c], logsumexp(others))
        nodes, log_w = quadrature.inclusion_nodes(quad_points, m, k)
        mu[i, cand] = kernels.inclusion_probs(np.ascontiguousarray(scores), log_rate, k, nodes, log_w)
    return mu


def sns_mean_bk(phi: ScoreMatrix, dist: GraphDistribution) -> np.ndarray:
    """``sigmoid(phi - B_K(phi))`` over the extended candidate set.

    ``B_K`` log-sum-exps, for each candidate, the ``m - k`` lowest scores among
    the other candidates. This is exact for ``k = 1`` (the softmax) and an
    approximation otherwise; ``sns_extended_mean`` gives the exact value.
    """
    _check(phi, dist)
    k = dist.k_neighbors
    mu = np.zeros_like(phi.values)
    for i in range(phi.n_nodes):
        cand = phi.candidates(i)
        scores = phi.values[i, cand] / dist.temperature
        m = scores.size
        if k >= m:
            mu[i, cand] = 1.0
            continue
        b = np.array([logsumexp(np.sort(np.delete(scores, c))[: m - k]) for c in range(m)])
        mu[i, cand] = sigmoid(scores - b)
    return mu


# --------------------------------------------------------------------- dispatch


def sample(phi: ScoreMatrix, dist: GraphDistribution, rng: RngStream) -> GraphSample:
    _check(phi, dist)
    if dist.is_sns:
        a, subsets = sns_sample(phi, dist, rng)
        return GraphSample(a, subsets)
    return GraphSample(bes_sample(phi, rng))


def score(
    phi: ScoreMatrix, dist: GraphDistribution, s: GraphSample, quad_points: int = quadrature.DEFAULT_POINTS
) -> LikelihoodResult:
    """Log-likelihood of a sample and its gradient; row ``i`` of the gradient is the row-``i`` score."""
    if dist.is_sns:
        if s.subsets is None:
            raise ValueError("SNS samples need their row subsets to be scored")
        return sns_log_likelihood(phi, s.subsets, dist, quad_points)
    _check(phi, dist)
    return bes_log_likelihood(phi, s.adjacency)


def frechet_sample(phi: ScoreMatrix, dist: GraphDistribution) -> GraphSample:
    """The Frechet mean as a scoreable sample (SNS keeps the top-k subsets)."""
    _check(phi, dist)
    n = phi.n_nodes
    if not dist.is_sns:
        a = (phi.values > 0.0) & phi.candidate_mask()
        return GraphSample(BinaryAdjacency.from_dense(a))
    v = np.where(phi.candidate_mask(), phi.values, -np.inf)
    top = np.argsort(-v, axis=1, kind="stable")[:, : dist.k_neighbors]
    subsets = tuple(RowSubset(i, tuple(top[i]), dist.k_neighbors) for i in range(n))
    a = BinaryAdjacency(n, tuple(tuple(j for j in s.members if j < n) for s in subsets))
    return GraphSample(a, subsets)


def frechet_mean(phi: ScoreMatrix, dist: GraphDistribution) -> BinaryAdjacency:
    """BES: edges with positive score. SNS: top-k candidates per row (ties to the
    smallest index), dummies dropped."""
    return frechet_sample(phi, dist).adjacency


def distribution_mean(phi: ScoreMatrix, dist: GraphDistribution, quad_points: int = quadrature.DEFAULT_POINTS) -> np.ndarray:
    """Expected adjacency over real nodes, zero diagonal."""
    _check(phi, dist)
    n = phi.n_nodes
    if dist.is_sns:
        mu = sns_extended_mean(phi, dist, quad_points)[:, :n]
    else:
        mu = sigmoid(phi.values)
    mu = mu.copy()
    np.fill_diagonal(mu, 0.0)
    return mu
