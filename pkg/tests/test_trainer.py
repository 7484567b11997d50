import dataclasses

import numpy as np
import pytest

from graphscore import samplers, trainer
from graphscore.core import GraphDistribution, RngStream, ScoreMatrix
from graphscore.gpvar import OPTIMAL_MAE, GpvarParams, gpvar_generate, make_graph
from graphscore.trainer import DatasetSplits, EpochRecord, OptimizerState, TrainConfig

THETA = np.array([[2.5, -2.0], [3.0, -0.5], [-1.0, 0.5]])


@pytest.fixture(scope="module")
def small():
    rng = RngStream(40)
    graph = make_graph("sbm", 8, rng.child(0), blocks=2, p_in=0.6, p_out=0.05)
    params = GpvarParams(THETA)
    series = gpvar_generate(graph, params, 6000, rng.child(1))
    return graph, params, DatasetSplits.from_series(series.values)


def _truth_scores(graph, scale=5.0):
    dense = graph.to_dense()
    v = np.where(dense > 0, scale, -scale)
    np.fill_diagonal(v, 0.0)
    return ScoreMatrix(v)


def _strip(history):
    # repr so that NaN fields compare equal
    return [repr(dataclasses.replace(r, wall_ms=0.0)) for r in history]


def test_sgd_constant_gradient():
    s = OptimizerState(np.array([1.0, 2.0]))
    for k in range(1, 4):
        s = trainer.sgd_step(s, [0.5, -1.0], 0.1)
        np.testing.assert_allclose(s.params, [1.0 - 0.05 * k, 2.0 + 0.1 * k])


def test_adam_zero_gradient_keeps_params():
    s = OptimizerState(np.array([1.0, -3.0]))
    s = trainer.adam_step(s, [1.0, 1.0], 0.1)
    before = s.params.copy()
    s = trainer.adam_step(s, [0.0, 0.0], 0.1)
    assert np.all(np.abs(s.params - before) < 0.1)
    m = s.m.copy()
    s2 = trainer.adam_step(OptimizerState(before.copy()), [0.0, 0.0], 0.1)
    np.testing.assert_array_equal(s2.params, before)
    assert np.all(np.abs(m) < 0.1)


def test_adam_quadratic_bowl():
    target = np.array([1.0, -2.0, 0.5])
    s = OptimizerState(np.zeros(3))
    for _ in range(500):
        s = trainer.adam_step(s, 2.0 * (s.params - target), 0.05)
    assert np.linalg.norm(s.params - target) < 1e-3


@pytest.mark.parametrize("step", [trainer.adam_step, trainer.sgd_step])
def test_optimizer_shape_mismatch(step):
    with pytest.raises(ValueError):
        step(OptimizerState(np.zeros(3)), np.zeros(2), 0.1)


@pytest.mark.parametrize(
    "kwargs",
    [{"epochs": -1}, {"lr_phi": 0.0}, {"optimizer": "rmsprop"}, {"estimator": "reinforce"}, {"eval_mode": "mean"}],
)
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_init_scores_bes_near_half():
    phi = trainer.init_scores(GraphDistribution.bes(), 10, RngStream(0))
    mu = samplers.distribution_mean(phi, GraphDistribution.bes())
    off = ~np.eye(10, dtype=bool)
    assert np.all(np.abs(mu[off] - 0.5) < 0.01)


def test_init_scores_sns_near_uniform():
    dist = GraphDistribution.sns(2)
    mu = samplers.distribution_mean(trainer.init_scores(dist, 4, RngStream(1)), dist)
    off = ~np.eye(4, dtype=bool)
    assert np.all(np.abs(mu[off] - 2 / 3) < 0.02)


def test_init_scores_deterministic():
    dist = GraphDistribution.sns(3, 2)
    a = trainer.init_scores(dist, 6, RngStream(2))
    b = trainer.init_scores(dist, 6, RngStream(2))
    assert a.values.shape == (6, 8)
    np.testing.assert_array_equal(a.values, b.values)


def test_edge_metrics_perfect_and_empty(small):
    graph = small[0]
    assert trainer.edge_metrics(graph, graph) == (1.0, 1.0, 1.0)
    empty = graph.empty(graph.n_nodes)
    p, r, acc = trainer.edge_metrics(empty, graph)
    assert r == 0.0 and acc == pytest.approx(1 - graph.n_edges / 56)


def test_evaluate_frechet_is_deterministic(small):
    graph, params, data = small
    phi = trainer.init_scores(GraphDistribution.bes(), 8, RngStream(3))
    a = trainer.evaluate(phi, GraphDistribution.bes(), params, data, "val", "frechet")
    b = trainer.evaluate(phi, GraphDistribution.bes(), params, data, "val", "frechet")
    assert a.mae == b.mae


def test_evaluate_truth_scores(small):
    graph, params, data = small
    res = trainer.evaluate(_truth_scores(graph), GraphDistribution.bes(), params, data, "test", "frechet", truth=graph)
    assert res.edge_precision == res.edge_recall == 1.0
    assert abs(res.mae / OPTIMAL_MAE - 1) < 0.05


def test_evaluate_random_scores_accuracy_near_chance():
    rng = RngStream(4)
    graph = make_graph("sbm", 20, rng.child(0), blocks=4, p_in=0.5, p_out=0.05)
    params = GpvarParams(THETA)
    data = DatasetSplits.from_series(gpvar_generate(graph, params, 500, rng.child(1)).values)
    phi = trainer.init_scores(GraphDistribution.bes(), 20, rng.child(2))
    res = trainer.evaluate(phi, GraphDistribution.bes(), params, data, "val", "frechet", truth=graph)
    assert abs(res.edge_accuracy - 0.5) < 0.1


def test_evaluate_one_sample_needs_stream(small):
    graph, params, data = small
    phi = _truth_scores(graph)
    with pytest.raises(ValueError):
        trainer.evaluate(phi, GraphDistribution.bes(), params, data, "val", "one_sample")
    res = trainer.evaluate(phi, GraphDistribution.bes(), params, data, "val", "one_sample", RngStream(0))
    assert np.isfinite(res.mae)


def test_zero_epochs_returns_initial_record(small):
    graph, params, data = small
    result = trainer.train_identification(data, params, GraphDistribution.bes(), TrainConfig(epochs=0), truth=graph)
    assert len(result.history) == 1
    rec = result.history[0]
    assert isinstance(rec, EpochRecord) and rec.epoch == 0 and np.isnan(rec.baseline_value_mean)


def test_training_is_deterministic(small):
    graph, params, data = small
    cfg = TrainConfig(epochs=2, batches_per_epoch=5, seed=7)
    a = trainer.train_identification(data, params, GraphDistribution.bes(), cfg, truth=graph)
    b = trainer.train_identification(data, params, GraphDistribution.bes(), cfg, truth=graph)
    assert _strip(a.history) == _strip(b.history)
    np.testing.assert_array_equal(a.phi.values, b.phi.values)


@pytest.mark.parametrize(
    "dist,estimator",
    [(GraphDistribution.bes(), "surrogate"), (GraphDistribution.bes(), "baseline"), (GraphDistribution.sns(3, 2), "surrogate")],
)
def test_identification_learns_small_graph(small, dist, estimator):
    graph, params, data = small
    cfg = TrainConfig(epochs=15, batches_per_epoch=20, estimator=estimator, seed=1)
    hist = trainer.train_identification(data, params, dist, cfg, truth=graph).history
    assert hist[-1].val_mae < hist[0].val_mae
    assert hist[-1].edge_accuracy > hist[0].edge_accuracy


def test_joint_from_truth_starts_at_optimum(small):
    graph, params, data = small
    cfg = TrainConfig(epochs=0)
    hist = trainer.train_joint(data, GraphDistribution.bes(), cfg, 2, 2, truth=graph, theta=THETA, phi=_truth_scores(graph)).history
    assert abs(hist[0].val_mae / OPTIMAL_MAE - 1) < 0.05
    assert hist[0].edge_accuracy == 1.0


def test_joint_updates_theta(small):
    graph, params, data = small
    cfg = TrainConfig(epochs=2, batches_per_epoch=5)
    res = trainer.train_joint(data, GraphDistribution.bes(), cfg, truth=graph)
    assert res.params.theta.shape == (4, 4)
    init = RngStream(0).child(4).normal((4, 4), 0.1)
    assert not np.allclose(res.params.theta, init)


def test_patience_stops_early(small):
    graph, params, data = small
    cfg = TrainConfig(epochs=50, batches_per_epoch=2, lr_phi=1e-6, patience=2)
    hist = trainer.train_identification(data, params, GraphDistribution.bes(), cfg).history
    assert len(hist) < 51


def test_epochs_to_threshold():
    recs = [EpochRecord(e, 0, v, 0, 0, 0, 0, 0, 0, 0) for e, v in enumerate([1.0, 0.9, 0.8, 0.85])]
    assert trainer.epochs_to_threshold(recs, 0.85) == 2.0
    assert trainer.epochs_to_threshold(recs, 0.5) == float("inf")
