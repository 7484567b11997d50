"""Score-function Monte Carlo estimators of the gradient of an expected cost.

All estimators share one loop: draw a graph (or one graph per layer), evaluate
the cost, and weight the score ``grad log p`` by the (baseline-corrected)
cost. Draws use streams spawned from the caller's stream in draw order, and
the reduction runs in that order, so results do not depend on ``threads``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import samplers
from .core import BinaryAdjacency, GraphDistribution, RngStream, ScoreMatrix


@dataclass(frozen=True, eq=False)
class CostBreakdown:
    """Global cost (mean of the per-node costs) for one forward evaluation."""

    global_cost: float
    per_node: np.ndarray

    def __post_init__(self):
        per_node = np.asarray(self.per_node, dtype=float)
        if per_node.ndim != 1 or not np.all(np.isfinite(per_node)) or not np.isfinite(self.global_cost):
            raise FloatingPointError("cost is not finite")
        object.__setattr__(self, "per_node", per_node)
        object.__setattr__(self, "global_cost", float(self.global_cost))

    @classmethod
    def from_per_node(cls, per_node) -> "CostBreakdown":
        per_node = np.asarray(per_node, dtype=float)
        return cls(float(per_node.mean()), per_node)

    def shifted(self, c: float) -> "CostBreakdown":
        return CostBreakdown(self.global_cost + c, self.per_node + c)


@dataclass(frozen=True)
class BaselineConfig:
    mode: str = "none"
    score_sq_decay: float = 0.99

    def __post_init__(self):
        if self.mode not in ("none", "simple", "ratio"):
            raise ValueError(f"unknown baseline mode {self.mode!r}")
        if not 0.0 < self.score_sq_decay < 1.0:
            raise ValueError("score_sq_decay must lie in (0, 1)")


@dataclass
class RatioState:
    """Bias-corrected moving average of the squared score, per coordinate."""

    decay: float = 0.99
    ema: Optional[np.ndarray] = None
    steps: int = 0

    def value(self) -> np.ndarray:
        return self.ema / (1.0 - self.decay**self.steps)

    def update(self, sq: np.ndarray) -> None:
        if self.ema is None:
            self.ema = np.zeros_like(sq)
        self.ema = self.decay * self.ema + (1.0 - self.decay) * sq
        self.steps += 1

    def denominator(self, sq: np.ndarray) -> np.ndarray:
        """Average from earlier calls, then fold in ``sq``.

        Using only past draws keeps the baseline independent of the current
        ones; the very first call has no history and seeds with ``sq``.
        """
        if self.ema is None:
            self.update(sq)
            return self.value()
        out = self.value()
        self.update(sq)
        return out


@dataclass
class GradientEstimate:
    grad_phi: np.ndarray
    baseline_value: float
    per_coordinate_variance: np.ndarray
    n_samples: int
    mean_cost: float = float("nan")
    n_unstable: int = 0
    n_likelihoods: int = 0
    samples: Optional[np.ndarray] = field(default=None, repr=False)
    graphs: list = field(default_factory=list, repr=False)


Predictor = Callable[[BinaryAdjacency], CostBreakdown]


@dataclass
class _Draw:
    cost: CostBreakdown
    scores: list  # one LikelihoodResult per layer
    samples: list


def _draw(phi, dist, predictor, n_layers, rng: RngStream, tied: bool) -> _Draw:
    if tied:
        s = samplers.sample(phi, dist, rng)
        layer_samples = [s] * n_layers
    else:
        layer_samples = [samplers.sample(phi, dist, rng.child(l)) for l in range(n_layers)]
    cost = predictor(*[s.adjacency for s in layer_samples])
    if tied:
        scores = [samplers.score(phi, dist, layer_samples[0])] * n_layers
    else:
        scores = [samplers.score(phi, dist, s) for s in layer_samples]
    return _Draw(cost, scores, layer_samples)


def _run(
    phi: ScoreMatrix,
    dist: GraphDistribution,
    predictor,
    m_samples: int,
    rng: RngStream,
    baseline: BaselineConfig,
    lam: float,
    per_node: bool,
    n_layers: int = 1,
    ratio_state: Optional[RatioState] = None,
    threads: int = 1,
    tied_layers: bool = False,
    keep_samples: bool = False,
) -> GradientEstimate:
    if m_samples < 1:
        raise ValueError("m_samples must be at least 1")
    streams = [rng.spawn() for _ in range(m_samples)]

    def work(stream):
        return _draw(phi, dist, predictor, n_layers, stream, tied_layers)

    if threads > 1 and m_samples > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            draws = list(pool.map(work, streams))
    else:
        draws = [work(s) for s in streams]

    shape = phi.values.shape
    b_global = np.zeros(shape)
    b_rows = np.zeros(shape)
    b_total = np.zeros(shape)
    baseline_value = float("nan")
    n_lik = m_samples * n_layers
    n_unstable = sum(r.n_unstable for d in draws for r in d.scores)
    if baseline.mode != "none":
        a0 = samplers.frechet_sample(phi, dist)
        c0 = predictor(*([a0.adjacency] * n_layers))
        baseline_value = c0.global_cost
        b_global[:] = c0.global_cost
        b_rows[:] = c0.per_node[:, None]
        b_total[:] = c0.per_node.sum()
        if baseline.mode == "ratio":
            if ratio_state is None:
                ratio_state = RatioState(baseline.score_sq_decay)
            g0 = samplers.score(phi, dist, a0).grad
            n_lik += 1
            sq = np.mean([r.grad**2 for d in draws for r in d.scores], axis=0)
            denom = ratio_state.denominator(sq)
            ratio = np.divide(g0**2, denom, out=np.zeros(shape), where=denom > 0)
            b_global = c0.global_cost * ratio
            b_rows = c0.per_node[:, None] * ratio
            b_total = c0.per_node.sum() * ratio

    contribs = np.empty((m_samples,) + shape)
    for idx, d in enumerate(draws):
        g = np.zeros(shape)
        last = n_layers - 1
        for l, r in enumerate(d.scores):
            if per_node and l == last:
                g += lam * (d.cost.global_cost - b_global) * r.grad
                g += (d.cost.per_node[:, None] - b_rows) * r.grad
            elif per_node:
                # earlier layers pair with the total cost, the sum of the per-node terms
                g += (d.cost.per_node.sum() - b_total) * r.grad
            else:
                g += (d.cost.global_cost - b_global) * r.grad
        contribs[idx] = g

    grad = contribs.mean(axis=0)
    var = contribs.var(axis=0, ddof=1) if m_samples > 1 else np.zeros(shape)
    return GradientEstimate(
        grad_phi=grad,
        baseline_value=baseline_value,
        per_coordinate_variance=var,
        n_samples=m_samples,
        mean_cost=float(np.mean([d.cost.global_cost for d in draws])),
        n_unstable=int(n_unstable),
        n_likelihoods=n_lik,
        samples=contribs if keep_samples else None,
        graphs=[d.samples[-1].adjacency for d in draws],
    )


def estimate_naive(phi, dist, predictor: Predictor, m_samples: int, rng: RngStream, threads: int = 1, **kw):
    """Average of ``cost(A) * grad log p(A)`` over ``m_samples`` draws."""
    return _run(phi, dist, predictor, m_samples, rng, BaselineConfig("none"), 1.0, False, threads=threads, **kw)


def estimate_baseline(
    phi,
    dist,
    predictor: Predictor,
    m_samples: int,
    baseline: BaselineConfig,
    rng: RngStream,
    ratio_state: Optional[RatioState] = None,
    threads: int = 1,
    **kw,
):
    """Score-function estimate with the cost at the Frechet mean ``A0`` as control variate.

    ``simple`` subtracts ``cost(A0)``; ``ratio`` scales it per coordinate by
    ``(grad log p(A0))^2`` over a moving average of the squared score.
    """
    return _run(
        phi, dist, predictor, m_samples, rng, baseline, 1.0, False, ratio_state=ratio_state, threads=threads, **kw
    )


def estimate_surrogate(
    phi,
    dist,
    predictor: Predictor,
    m_samples: int,
    rng: RngStream,
    lam: Optional[float] = None,
    baseline: BaselineConfig = BaselineConfig(),
    ratio_state: Optional[RatioState] = None,
    threads: int = 1,
    **kw,
):
    """``lam * cost * score + sum_i cost_i * (row-i score)``; ``lam`` defaults to ``1 / N``."""
    if lam is None:
        lam = 1.0 / phi.n_nodes
    return _run(phi, dist, predictor, m_samples, rng, baseline, lam, True, ratio_state=ratio_state, threads=threads, **kw)


def estimate_multilayer(
    phi,
    dist,
    predictor_layers,
    n_layers: int,
    m_samples: int,
    rng: RngStream,
    baseline: BaselineConfig = BaselineConfig(),
    ratio_state: Optional[RatioState] = None,
    threads: int = 1,
    tied_layers: bool = False,
    **kw,
):
    """One independent graph per layer; layers ``1..L-1`` get the total-cost
    score term and layer ``L`` the per-node terms.

    The total cost is the sum of the per-node costs, so with row-local
    layers the estimate is unbiased for the gradient of ``E[sum_i cost_i]``.

    ``tied_layers`` reuses a single sample for every layer (diagnostic only;
    the estimate is then biased).
    """
    if n_layers < 1:
        raise ValueError("n_layers must be at least 1")
    return _run(
        phi,
        dist,
        predictor_layers,
        m_samples,
        rng,
        baseline,
        0.0,
        True,
        n_layers=n_layers,
        ratio_state=ratio_state,
        threads=threads,
        tied_layers=tied_layers,
        **kw,
    )


@dataclass
class ProbeSummary:
    mean: np.ndarray
    variance: np.ndarray
    n_repeats: int

    @property
    def variance_trace(self) -> float:
        return float(self.variance.sum())

    @property
    def standard_error(self) -> np.ndarray:
        return np.sqrt(self.variance / self.n_repeats)


def variance_probe(estimator: Callable[[RngStream], GradientEstimate], n_repeats: int, rng: RngStream) -> ProbeSummary:
    """Mean and variance of repeated estimates, repeat ``r`` using ``rng.child(r)``.

    Two probes given the same ``rng`` see the same streams (paired seeds).
    """
    if n_repeats < 100:
        raise ValueError("n_repeats must be at least 100")
    mean, m2 = 0.0, 0.0
    for r in range(n_repeats):
        g = estimator(rng.child(r)).grad_phi
        delta = g - mean
        mean = mean + delta / (r + 1)
        m2 = m2 + delta * (g - mean)
    return ProbeSummary(mean, m2 / (n_repeats - 1), n_repeats)
