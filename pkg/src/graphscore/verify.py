"""Cross-checks of the closed forms and estimators against the oracles.

Each check returns a ``CheckResult``; ``run_checks`` runs a named suite.
Check names follow the formula they exercise, e.g. ``Prop1-SNS-mu``.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import estimator as est
from . import oracles, samplers
from .core import GraphDistribution, RngStream, ScoreMatrix
from .gpvar import GpvarCost, GpvarParams, window_batch


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _random_phi(rng: np.random.Generator, n: int, d: int = 0, scale: float = 1.5) -> ScoreMatrix:
    v = rng.normal(scale=scale, size=(n, n + d))
    v[np.arange(n), np.arange(n)] = 0.0
    return ScoreMatrix(v, d)


def _sns_settings():
    return [(k, d) for k in (1, 2) for d in (0, 1)]


# --------------------------------------------------------------------- closed forms


def check_frechet_bes(n_cases: int = 50, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    dist = GraphDistribution.bes()
    bad = 0
    for _ in range(n_cases):
        phi = _random_phi(rng, 3)
        if samplers.frechet_mean(phi, dist) != oracles.exact_frechet_mean(oracles.enumerate_support(phi, dist)):
            bad += 1
    return CheckResult("Prop1-BES-frechet", bad == 0, f"{bad}/{n_cases} mismatches")


def check_frechet_sns(n_cases: int = 50, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad, total = 0, 0
    for k, d in _sns_settings():
        dist = GraphDistribution.sns(k, d)
        for _ in range(n_cases):
            phi = _random_phi(rng, 4, d)
            total += 1
            if samplers.frechet_mean(phi, dist) != oracles.exact_frechet_mean(oracles.enumerate_support(phi, dist)):
                bad += 1
    return CheckResult("Prop1-SNS-frechet", bad == 0, f"{bad}/{total} mismatches")


def check_mu_bes(n_cases: int = 50, seed: int = 2, tol: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(seed)
    dist = GraphDistribution.bes()
    worst = 0.0
    for _ in range(n_cases):
        phi = _random_phi(rng, 3)
        worst = max(worst, float(np.abs(samplers.distribution_mean(phi, dist) - oracles.enumerate_support(phi, dist).mean()).max()))
    return CheckResult("Prop1-BES-mu", worst <= tol, f"max deviation {worst:.2e}")


def check_mu_sns(
    n_cases: int = 50, seed: int = 3, tol: float = 1e-6, mean_fn: Callable = samplers.distribution_mean
) -> CheckResult:
    """``mean_fn`` is swappable so that a corrupted closed form can be shown to fail."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k, d in _sns_settings():
        dist = GraphDistribution.sns(k, d)
        for _ in range(n_cases):
            phi = _random_phi(rng, 4, d)
            exact = oracles.enumerate_support(phi, dist).mean()
            np.fill_diagonal(exact, 0.0)
            worst = max(worst, float(np.abs(mean_fn(phi, dist) - exact).max()))
    return CheckResult("Prop1-SNS-mu", worst <= tol, f"max deviation {worst:.2e}")


# --------------------------------------------------------------------- subset likelihood


def _random_rows(n_rows: int, seed: int):
    rng = np.random.default_rng(seed)
    for _ in range(n_rows):
        n = int(rng.integers(3, 8))
        k = int(rng.integers(1, min(3, n - 2) + 1))
        phi = rng.normal(scale=2.0, size=n)
        tau = float(rng.choice([0.5, 1.0, 2.0]))
        yield phi, k, tau


def check_subset_likelihood(n_rows: int = 100, seed: int = 4, tol: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(seed + 1000)
    worst = 0.0
    for phi, k, tau in _random_rows(n_rows, seed):
        cand = np.arange(1, phi.size)
        members = tuple(sorted(rng.choice(cand, size=k, replace=False)))
        got = np.exp(samplers.sns_row_log_likelihood(phi, samplers.RowSubset(0, members, k), tau).log_prob)
        w = np.exp(phi[cand] / tau - (phi[cand] / tau).max())
        ref = oracles.enumerate_subset_prob(w, [int(np.flatnonzero(cand == m)[0]) for m in members])
        worst = max(worst, abs(got - ref) / ref)
    return CheckResult("Eq5-subset-likelihood", worst <= tol, f"max relative error {worst:.2e}")


def check_subset_normalization(n_rows: int = 100, seed: int = 5, tol: float = 1e-6) -> CheckResult:
    worst = 0.0
    for phi, k, tau in _random_rows(n_rows, seed):
        total = sum(
            np.exp(samplers.sns_row_log_likelihood(phi, samplers.RowSubset(0, s, k), tau).log_prob)
            for s in itertools.combinations(range(1, phi.size), k)
        )
        worst = max(worst, abs(total - 1.0))
    return CheckResult("Eq5-normalization", worst <= tol, f"max |sum - 1| {worst:.2e}")


# --------------------------------------------------------------------- score gradients


def check_bes_score_fd(n_cases: int = 100, seed: int = 6, tol: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        n = int(rng.integers(2, 6))
        phi = _random_phi(rng, n, scale=2.0)
        a = samplers.bes_sample(phi, RngStream(int(rng.integers(2**32))))
        res = samplers.bes_log_likelihood(phi, a)
        fd = oracles.finite_diff_gradient(lambda v: samplers.bes_log_likelihood(phi.replace(v), a).log_prob, phi.values)
        mask = phi.candidate_mask()
        worst = max(worst, float(np.abs(res.grad - fd)[mask].max()))
    return CheckResult("Eq3-BES-score-fd", worst <= tol, f"max abs error {worst:.2e}")


def check_sns_score_fd(n_cases: int = 100, seed: int = 7, tol: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        m = int(rng.integers(3, 9))
        k = int(rng.integers(1, min(4, m - 2) + 1))
        phi = rng.normal(scale=2.0, size=m)
        tau = float(rng.choice([0.5, 1.0, 2.0]))
        subset = samplers.RowSubset(0, tuple(sorted(rng.choice(np.arange(1, m), size=k, replace=False))), k)
        res = samplers.sns_row_log_likelihood(phi, subset, tau)
        fd = oracles.finite_diff_gradient(lambda v: samplers.sns_row_log_likelihood(v, subset, tau).log_prob, phi)
        err = float(np.abs(res.grad - fd)[1:].max()) / max(1.0, float(np.abs(fd).max()))
        worst = max(worst, err)
    return CheckResult("Eq5-SNS-score-fd", worst <= tol, f"max relative error {worst:.2e}")


# --------------------------------------------------------------------- estimators


def small_gpvar_cost(n: int, spatial_order: int, seed: int = 11, normalization: str = "row") -> GpvarCost:
    """A one-step GPVAR cost on a fixed random batch, for enumerable instances.

    Row normalization keeps node ``i``'s output a function of row ``i`` only.
    """
    rng = np.random.default_rng(seed)
    theta = rng.normal(scale=0.8, size=(spatial_order + 1, 2))
    x = rng.normal(size=(24, n))
    w, y = window_batch(x, np.arange(2, 24), 2)
    return GpvarCost(GpvarParams(theta), w, y, normalization)


def unbiasedness_instances():
    rng = np.random.default_rng(12)
    return [
        ("BES", GraphDistribution.bes(), _random_phi(rng, 3, scale=1.0)),
        ("SNS", GraphDistribution.sns(2), _random_phi(rng, 4, scale=1.0)),
    ]


def _zscore_check(name: str, probe: est.ProbeSummary, exact: np.ndarray, limit: float = 4.0) -> CheckResult:
    se = probe.standard_error
    diff = np.abs(probe.mean - exact)
    live = se > 0
    z = float((diff[live] / se[live]).max()) if live.any() else 0.0
    # coordinates with zero spread must match exactly
    flat = float(diff[~live].max()) if (~live).any() else 0.0
    ok = z <= limit and flat <= 1e-12
    return CheckResult(name, ok, f"max |z| {z:.2f} over {probe.n_repeats} draws")


def check_naive_unbiased(n_repeats: int = 100_000, which: str = "BES", seed: int = 21) -> CheckResult:
    label, dist, phi = [t for t in unbiasedness_instances() if t[0] == which][0]
    cost = small_gpvar_cost(phi.n_nodes, 1)
    exact = oracles.exact_expected_gradient(phi, dist, lambda a: cost(a).global_cost)
    probe = est.variance_probe(lambda r: est.estimate_naive(phi, dist, cost, 1, r), n_repeats, RngStream(seed))
    return _zscore_check(f"Eq4-naive-unbiased-{label}", probe, exact)


def check_baseline_unbiased(n_repeats: int = 100_000, which: str = "BES", seed: int = 22) -> CheckResult:
    label, dist, phi = [t for t in unbiasedness_instances() if t[0] == which][0]
    cost = small_gpvar_cost(phi.n_nodes, 1)
    exact = oracles.exact_expected_gradient(phi, dist, lambda a: cost(a).global_cost)
    base = est.BaselineConfig("simple")
    probe = est.variance_probe(lambda r: est.estimate_baseline(phi, dist, cost, 1, base, r), n_repeats, RngStream(seed))
    return _zscore_check(f"Eq6-baseline-unbiased-{label}", probe, exact)


def check_surrogate_unbiased(n_repeats: int = 100_000, which: str = "BES", seed: int = 23) -> CheckResult:
    """Per-node term alone (lambda = 0) with a single row-local layer."""
    label, dist, phi = [t for t in unbiasedness_instances() if t[0] == which][0]
    cost = small_gpvar_cost(phi.n_nodes, 1)
    exact = oracles.exact_expected_gradient(phi, dist, lambda a: cost(a).per_node.sum())
    probe = est.variance_probe(lambda r: est.estimate_surrogate(phi, dist, cost, 1, r, lam=0.0), n_repeats, RngStream(seed))
    return _zscore_check(f"Eq9-surrogate-unbiased-{label}", probe, exact)


def check_two_layer_unbiased(n_repeats: int = 100_000, which: str = "BES", seed: int = 24) -> CheckResult:
    label, dist, phi = [t for t in unbiasedness_instances() if t[0] == which][0]
    cost = small_gpvar_cost(phi.n_nodes, 2)
    exact = oracles.exact_expected_gradient_layers(phi, dist, lambda a, b: cost(a, b).per_node.sum(), 2)
    probe = est.variance_probe(lambda r: est.estimate_multilayer(phi, dist, cost, 2, 1, r), n_repeats, RngStream(seed))
    return _zscore_check(f"Eq8-two-layer-unbiased-{label}", probe, exact)


def variance_reduction(n_repeats: int = 10_000, seed: int = 31, batch_size: int = 32):
    """Paired-seed variance traces of the naive and simple-baseline estimators
    on a fixed batch of the default GPVAR instance, BES at initialization."""
    from .experiments import make_instance
    from .trainer import init_scores

    inst = make_instance()
    idx = inst.data.targets("train", inst.params.temporal_order)[:batch_size]
    w, y = window_batch(inst.data.values, idx, inst.params.temporal_order)
    cost = GpvarCost(inst.params, w, y)
    dist = GraphDistribution.bes()
    phi = init_scores(dist, inst.graph.n_nodes, RngStream(seed).child(0))
    rng = RngStream(seed).child(1)
    naive = est.variance_probe(lambda r: est.estimate_naive(phi, dist, cost, 1, r), n_repeats, rng)
    base = est.variance_probe(lambda r: est.estimate_baseline(phi, dist, cost, 1, est.BaselineConfig("simple"), r), n_repeats, rng)
    return naive, base


def check_variance_reduction(n_repeats: int = 10_000, min_reduction: float = 0.3) -> CheckResult:
    naive, base = variance_reduction(n_repeats)
    red = 1.0 - base.variance_trace / naive.variance_trace
    return CheckResult("Eq7-variance-reduction", red >= min_reduction, f"trace reduced by {100 * red:.2f}%")


FAST = [
    check_frechet_bes,
    check_frechet_sns,
    check_mu_bes,
    check_mu_sns,
    check_subset_likelihood,
    check_subset_normalization,
    check_bes_score_fd,
    check_sns_score_fd,
]

FULL_EXTRA = [
    check_naive_unbiased,
    lambda: check_naive_unbiased(which="SNS"),
    check_baseline_unbiased,
    check_surrogate_unbiased,
    check_two_layer_unbiased,
    check_variance_reduction,
]


def run_checks(level: str = "fast", report: Callable[[str], None] = print) -> list:
    if level not in ("fast", "full"):
        raise ValueError(f"unknown level {level!r}")
    checks = FAST + (FULL_EXTRA if level == "full" else [])
    results = []
    for fn in checks:
        start = time.perf_counter()
        res = fn()
        res.seconds = time.perf_counter() - start
        report(res.line())
        results.append(res)
    return results
