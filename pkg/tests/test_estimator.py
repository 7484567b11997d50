import numpy as np
import pytest

from graphscore import estimator as est
from graphscore import oracles, verify
from graphscore.core import GraphDistribution, RngStream, ScoreMatrix
from graphscore.estimator import BaselineConfig, CostBreakdown, RatioState

BES = GraphDistribution.bes()
SNS = GraphDistribution.sns(2)


def _phi(n, seed=0, scale=1.0):
    v = np.random.default_rng(seed).normal(scale=scale, size=(n, n))
    np.fill_diagonal(v, 0.0)
    return ScoreMatrix(v)


def _constant(c, n):
    return lambda *adjs: CostBreakdown.from_per_node(np.full(n, c))


def _edge_count(*adjs):
    a = adjs[-1]
    return CostBreakdown.from_per_node(a.to_dense().sum(axis=1))


class CountingCost:
    def __init__(self, inner):
        self.inner, self.calls = inner, 0

    def __call__(self, *adjs):
        self.calls += 1
        return self.inner(*adjs)


def test_cost_breakdown_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        CostBreakdown.from_per_node([1.0, np.nan])


def test_cost_breakdown_shift():
    c = CostBreakdown.from_per_node([1.0, 3.0]).shifted(2.0)
    assert c.global_cost == 4.0
    np.testing.assert_array_equal(c.per_node, [3.0, 5.0])


def test_baseline_config_validation():
    with pytest.raises(ValueError):
        BaselineConfig("mean")
    with pytest.raises(ValueError):
        BaselineConfig("ratio", 1.0)


def test_ratio_state_uses_past_draws_only():
    s = RatioState(0.5)
    np.testing.assert_allclose(s.denominator(np.array([4.0])), 4.0)
    np.testing.assert_allclose(s.denominator(np.array([100.0])), 4.0)
    assert s.steps == 2


def test_naive_constant_cost_mean_zero():
    phi = _phi(3)
    probe = est.variance_probe(lambda r: est.estimate_naive(phi, BES, _constant(2.0, 3), 1, r), 20_000, RngStream(1))
    live = probe.standard_error > 0
    assert np.all(np.abs(probe.mean[live]) <= 4 * probe.standard_error[live])


@pytest.mark.parametrize("dist,n", [(BES, 3), (SNS, 4)])
def test_simple_baseline_constant_cost_is_exactly_zero(dist, n):
    phi = _phi(n)
    res = est.estimate_baseline(phi, dist, _constant(1.7, n), 5, BaselineConfig("simple"), RngStream(2))
    np.testing.assert_array_equal(res.grad_phi, 0.0)
    assert res.baseline_value == pytest.approx(1.7)


def test_baseline_evaluates_frechet_mean_once():
    cost = CountingCost(_edge_count)
    est.estimate_baseline(_phi(3), BES, cost, 7, BaselineConfig("simple"), RngStream(3))
    assert cost.calls == 8
    cost = CountingCost(_edge_count)
    est.estimate_naive(_phi(3), BES, cost, 7, RngStream(3))
    assert cost.calls == 7


def test_naive_reports_no_baseline():
    assert np.isnan(est.estimate_naive(_phi(3), BES, _edge_count, 2, RngStream(0)).baseline_value)


@pytest.mark.parametrize("dist,n", [(BES, 4), (SNS, 5)])
def test_surrogate_with_equal_node_costs_is_naive(dist, n):
    phi = _phi(n, seed=4)

    def equal(a):
        return CostBreakdown.from_per_node(np.full(n, float(a.n_edges)))

    for seed in range(5):
        sur = est.estimate_surrogate(phi, dist, equal, 1, RngStream(seed), lam=0.0)
        naive = est.estimate_naive(phi, dist, equal, 1, RngStream(seed))
        np.testing.assert_allclose(sur.grad_phi, naive.grad_phi, atol=1e-12)


def test_surrogate_default_lambda():
    phi = _phi(4, seed=5)
    a = est.estimate_surrogate(phi, BES, _edge_count, 3, RngStream(6))
    b = est.estimate_surrogate(phi, BES, _edge_count, 3, RngStream(6), lam=0.25)
    np.testing.assert_array_equal(a.grad_phi, b.grad_phi)


def test_multilayer_single_layer_is_surrogate():
    phi = _phi(4, seed=7)
    cfg = BaselineConfig("simple")
    a = est.estimate_multilayer(phi, BES, _edge_count, 1, 4, RngStream(8), baseline=cfg)
    b = est.estimate_surrogate(phi, BES, _edge_count, 4, RngStream(8), lam=0.0, baseline=cfg)
    np.testing.assert_array_equal(a.grad_phi, b.grad_phi)


def test_multilayer_tied_layers_deterministic():
    phi = _phi(4, seed=9)
    cost = verify.small_gpvar_cost(4, 2)
    runs = [est.estimate_multilayer(phi, BES, cost, 2, 3, RngStream(10), tied_layers=True).grad_phi for _ in range(2)]
    assert np.all(np.isfinite(runs[0]))
    np.testing.assert_array_equal(runs[0], runs[1])


@pytest.mark.parametrize("mode", ["naive", "baseline", "surrogate"])
def test_threads_do_not_change_result(mode):
    phi = _phi(4, seed=11)
    cost = verify.small_gpvar_cost(4, 1)
    fn = {
        "naive": lambda t: est.estimate_naive(phi, BES, cost, 16, RngStream(12), threads=t),
        "baseline": lambda t: est.estimate_baseline(phi, BES, cost, 16, BaselineConfig("ratio"), RngStream(12), threads=t),
        "surrogate": lambda t: est.estimate_surrogate(phi, BES, cost, 16, RngStream(12), threads=t),
    }[mode]
    np.testing.assert_array_equal(fn(1).grad_phi, fn(4).grad_phi)


def test_per_coordinate_variance_needs_two_samples():
    res = est.estimate_naive(_phi(3), BES, _edge_count, 1, RngStream(0))
    np.testing.assert_array_equal(res.per_coordinate_variance, 0.0)
    with pytest.raises(ValueError):
        est.estimate_naive(_phi(3), BES, _edge_count, 0, RngStream(0))


def test_variance_scales_inversely_with_samples():
    phi = _phi(3, seed=13)
    one = est.variance_probe(lambda r: est.estimate_naive(phi, BES, _edge_count, 1, r), 4000, RngStream(14))
    many = est.variance_probe(lambda r: est.estimate_naive(phi, BES, _edge_count, 100, r), 400, RngStream(15))
    ratio = one.variance_trace / many.variance_trace
    assert 100 / 1.3 <= ratio <= 100 * 1.3


def test_probe_zero_cost_has_zero_variance():
    phi = _phi(3)
    probe = est.variance_probe(lambda r: est.estimate_naive(phi, BES, _constant(0.0, 3), 1, r), 100, RngStream(0))
    assert probe.variance_trace == 0.0


def test_probe_requires_enough_repeats():
    with pytest.raises(ValueError):
        est.variance_probe(lambda r: None, 99, RngStream(0))


def test_probe_variance_is_stable_when_doubling():
    phi = _phi(3, seed=16)
    fn = lambda r: est.estimate_naive(phi, BES, _edge_count, 1, r)  # noqa: E731
    a = est.variance_probe(fn, 5000, RngStream(17)).variance_trace
    b = est.variance_probe(fn, 10_000, RngStream(18)).variance_trace
    assert abs(a / b - 1) < 0.2


def test_naive_matches_oracle_edge_count():
    phi = _phi(3, seed=19)
    exact = oracles.exact_expected_gradient(phi, BES, lambda a: _edge_count(a).global_cost)
    res = est.estimate_naive(phi, BES, _edge_count, 100_000, RngStream(20))
    se = np.sqrt(res.per_coordinate_variance / res.n_samples)
    live = se > 0
    assert np.all(np.abs(res.grad_phi - exact)[live] <= 4 * se[live])


@pytest.mark.parametrize(
    "check,which",
    [
        (verify.check_naive_unbiased, "BES"),
        (verify.check_baseline_unbiased, "BES"),
        (verify.check_surrogate_unbiased, "BES"),
        (verify.check_surrogate_unbiased, "SNS"),
        (verify.check_two_layer_unbiased, "BES"),
    ],
)
def test_estimators_are_unbiased(check, which):
    result = check(n_repeats=20_000, which=which)
    assert result.passed, result.line()


def test_baseline_reduces_variance_on_paired_seeds():
    naive, base = verify.variance_reduction(n_repeats=500)
    assert base.variance_trace < naive.variance_trace


def test_ratio_baseline_tracks_state():
    phi = _phi(3, seed=25)
    state = RatioState(0.9)
    cost = verify.small_gpvar_cost(3, 1)
    for r in range(3):
        res = est.estimate_baseline(phi, BES, cost, 4, BaselineConfig("ratio", 0.9), RngStream(r), ratio_state=state)
        assert np.all(np.isfinite(res.grad_phi))
    assert state.steps == 3
    assert res.n_likelihoods == 5
