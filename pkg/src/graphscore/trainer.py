"""Training loops for graph identification and joint filter/graph training."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import estimator as est
from . import samplers
from .core import BinaryAdjacency, GraphDistribution, RngStream, ScoreMatrix
from .gpvar import GpvarCost, GpvarParams, gpvar_grad_theta, gpvar_predict, normalize_adjacency, split_bounds, window_batch

log = logging.getLogger("graphscore")

LR_FLOOR = 0.025
INSTABILITY_RATE = 0.01


class NumericalError(FloatingPointError):
    """Training produced a non-finite value."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batches_per_epoch: int = 50
    batch_size: int = 32
    lr_phi: float = 0.05
    lr_theta: float = 0.05
    optimizer: str = "adam"
    estimator: str = "surrogate"
    baseline: est.BaselineConfig = field(default_factory=lambda: est.BaselineConfig("simple"))
    lam: Optional[float] = None
    m_samples: int = 1
    eval_mode: str = "frechet"
    eval_batch_size: int = 256
    cost_norm: int = 1
    normalization: str = "sym"
    seed: int = 0
    threads: int = 1
    patience: Optional[int] = None

    def __post_init__(self):
        if self.epochs < 0 or self.batches_per_epoch < 1 or self.batch_size < 1 or self.m_samples < 1:
            raise ValueError("epochs must be non-negative and batch counts positive")
        if self.lr_phi <= 0 or self.lr_theta <= 0:
            raise ValueError("learning rates must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.estimator not in ("naive", "baseline", "surrogate"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.eval_mode not in ("one_sample", "frechet"):
            raise ValueError(f"unknown eval_mode {self.eval_mode!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_mae: float
    val_mae: float
    edge_precision: float
    edge_recall: float
    edge_accuracy: float
    baseline_value_mean: float
    grad_variance_trace: float
    instability_flag_count: int
    wall_ms: float


@dataclass(frozen=True, eq=False)
class DatasetSplits:
    """A series with chronological train / validation / test boundaries."""

    values: np.ndarray
    train_end: int
    val_end: int

    @classmethod
    def from_series(cls, values, fractions=(0.7, 0.1, 0.2)) -> "DatasetSplits":
        values = np.asarray(values, dtype=float)
        train_end, val_end = split_bounds(values.shape[0], fractions)
        return cls(values, train_end, val_end)

    def targets(self, split: str, window: int) -> np.ndarray:
        lo, hi = {"train": (0, self.train_end), "val": (self.train_end, self.val_end), "test": (self.val_end, len(self.values))}[split]
        return np.arange(max(lo, window), hi)


# --------------------------------------------------------------------- optimizers


@dataclass
class OptimizerState:
    params: np.ndarray
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    t: int = 0


def sgd_step(state: OptimizerState, grad, lr: float) -> OptimizerState:
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.params.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match parameters {state.params.shape}")
    return OptimizerState(state.params - lr * grad, state.m, state.v, state.t + 1)


def adam_step(state: OptimizerState, grad, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> OptimizerState:
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.params.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match parameters {state.params.shape}")
    m = np.zeros_like(grad) if state.m is None else state.m
    v = np.zeros_like(grad) if state.v is None else state.v
    t = state.t + 1
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return OptimizerState(state.params - lr * m_hat / (np.sqrt(v_hat) + eps), m, v, t)


def _step(name: str):
    return adam_step if name == "adam" else sgd_step


# --------------------------------------------------------------------- evaluation


def init_scores(dist: GraphDistribution, n: int, rng: RngStream, scale: float = 0.01) -> ScoreMatrix:
    """Near-uniform start: i.i.d. ``N(0, scale^2)`` scores, dummies included."""
    d = dist.n_dummies if dist.is_sns else 0
    values = rng.normal((n, n + d), scale)
    values[np.arange(n), np.arange(n)] = 0.0
    return ScoreMatrix(values, d)


def edge_metrics(predicted: BinaryAdjacency, truth: BinaryAdjacency):
    """Precision, recall and accuracy over off-diagonal entries."""
    p, t = predicted.to_dense() > 0, truth.to_dense() > 0
    off = ~np.eye(p.shape[0], dtype=bool)
    tp = int((p & t & off).sum())
    fp = int((p & ~t & off).sum())
    fn = int((~p & t & off).sum())
    precision = tp / (tp + fp) if tp + fp else float(fn == 0)
    recall = tp / (tp + fn) if tp + fn else float(fp == 0)
    accuracy = float((p == t)[off].mean())
    return precision, recall, accuracy


@dataclass
class EvalResult:
    mae: float
    edge_precision: float = float("nan")
    edge_recall: float = float("nan")
    edge_accuracy: float = float("nan")


def evaluate(
    phi: ScoreMatrix,
    dist: GraphDistribution,
    params: GpvarParams,
    data: DatasetSplits,
    split: str,
    eval_mode: str,
    rng: Optional[RngStream] = None,
    truth: Optional[BinaryAdjacency] = None,
    normalization: str = "sym",
    batch_size: int = 256,
) -> EvalResult:
    """Mean absolute one-step error on a split.

    ``frechet`` predicts with the deterministic ``A0``; ``one_sample`` draws a
    fresh graph per evaluation batch. Edge metrics compare ``A0`` to ``truth``.
    """
    a0 = samplers.frechet_mean(phi, dist)
    targets = data.targets(split, params.temporal_order)
    if targets.size == 0:
        raise ValueError(f"split {split!r} has no targets")
    total = 0.0
    shift0 = normalize_adjacency(a0, normalization)
    for start in range(0, targets.size, batch_size):
        idx = targets[start : start + batch_size]
        w, y = window_batch(data.values, idx, params.temporal_order)
        if eval_mode == "frechet":
            shift = shift0
        elif eval_mode == "one_sample":
            if rng is None:
                raise ValueError("one_sample evaluation needs a random stream")
            shift = normalize_adjacency(samplers.sample(phi, dist, rng.spawn()).adjacency, normalization)
        else:
            raise ValueError(f"unknown eval_mode {eval_mode!r}")
        total += np.abs(y - gpvar_predict(params, shift, w)).sum()
    res = EvalResult(total / (targets.size * data.values.shape[1]))
    if truth is not None:
        res.edge_precision, res.edge_recall, res.edge_accuracy = edge_metrics(a0, truth)
    return res


# --------------------------------------------------------------------- training


def _estimate(cfg: TrainConfig, phi, dist, cost, rng, ratio_state):
    if cfg.estimator == "naive":
        return est.estimate_naive(phi, dist, cost, cfg.m_samples, rng, threads=cfg.threads)
    if cfg.estimator == "baseline":
        return est.estimate_baseline(phi, dist, cost, cfg.m_samples, cfg.baseline, rng, ratio_state, threads=cfg.threads)
    return est.estimate_surrogate(
        phi, dist, cost, cfg.m_samples, rng, cfg.lam, cfg.baseline, ratio_state, threads=cfg.threads
    )


def _train(
    data: DatasetSplits,
    dist: GraphDistribution,
    params: GpvarParams,
    cfg: TrainConfig,
    truth: Optional[BinaryAdjacency],
    learn_theta: bool,
    phi: Optional[ScoreMatrix] = None,
):
    root = RngStream(cfg.seed)
    n = data.values.shape[1]
    if phi is None:
        phi = init_scores(dist, n, root.child(0))
    batch_rng = root.child(1)
    est_rng = root.child(2)
    eval_rng = root.child(3)
    window = params.temporal_order
    train_targets = data.targets("train", window)
    if train_targets.size == 0:
        raise ValueError("training split is shorter than the window")
    step = _step(cfg.optimizer)
    phi_state = OptimizerState(phi.values.copy())
    theta_state = OptimizerState(params.theta.copy())
    ratio_state = est.RatioState(cfg.baseline.score_sq_decay)
    lr_phi = cfg.lr_phi
    halved = False

    def record(epoch, train_mae, baseline_mean, var_trace, flags, wall_ms):
        current = phi.replace(phi_state.params)
        ev = evaluate(current, dist, GpvarParams(theta_state.params), data, "val", cfg.eval_mode, eval_rng, truth, cfg.normalization, cfg.eval_batch_size)
        rec = EpochRecord(epoch, train_mae, ev.mae, ev.edge_precision, ev.edge_recall, ev.edge_accuracy, baseline_mean, var_trace, flags, wall_ms)
        if not np.isfinite(ev.mae):
            raise NumericalError(f"validation MAE is not finite at epoch {epoch}; try a smaller learning rate")
        return rec

    start = time.perf_counter()
    init_train = evaluate(phi, dist, params, data, "train", cfg.eval_mode, eval_rng, None, cfg.normalization, cfg.eval_batch_size).mae
    history = [record(0, init_train, float("nan"), float("nan"), 0, (time.perf_counter() - start) * 1e3)]
    best, stale = history[0].val_mae, 0

    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        costs, baselines, grads = [], [], []
        flags, n_lik = 0, 0
        for _ in range(cfg.batches_per_epoch):
            idx = train_targets[batch_rng.integers(0, train_targets.size, cfg.batch_size)]
            w, y = window_batch(data.values, idx, window)
            current_params = GpvarParams(theta_state.params)
            cost = GpvarCost(current_params, w, y, cfg.normalization, cfg.cost_norm)
            phi_now = phi.replace(phi_state.params)
            res = _estimate(cfg, phi_now, dist, cost, est_rng, ratio_state)
            if not (np.isfinite(res.mean_cost) and np.all(np.isfinite(res.grad_phi))):
                raise NumericalError(f"non-finite loss or gradient at epoch {epoch}; try a smaller learning rate")
            if learn_theta:
                g_theta = np.mean(
                    [gpvar_grad_theta(current_params, normalize_adjacency(a, cfg.normalization), w, y, cfg.cost_norm) for a in res.graphs],
                    axis=0,
                )
                theta_state = step(theta_state, g_theta, cfg.lr_theta)
            phi_state = step(phi_state, res.grad_phi, lr_phi)
            costs.append(res.mean_cost)
            baselines.append(res.baseline_value)
            grads.append(res.grad_phi)
            flags += res.n_unstable
            n_lik += res.n_likelihoods
        var_trace = float(np.var(np.array(grads), axis=0, ddof=1).sum()) if len(grads) > 1 else 0.0
        base_mean = float(np.mean(baselines)) if cfg.estimator != "naive" else float("nan")
        rec = record(epoch, float(np.mean(costs)), base_mean, var_trace, flags, 0.0)
        rec.wall_ms = (time.perf_counter() - start) * 1e3
        history.append(rec)
        log.info("epoch %d train %.4f val %.4f acc %.4f", epoch, rec.train_mae, rec.val_mae, rec.edge_accuracy)
        if not halved and n_lik and flags > INSTABILITY_RATE * n_lik and lr_phi > LR_FLOOR:
            lr_phi = max(lr_phi / 2.0, LR_FLOOR)
            halved = True
            log.warning("unstable subset likelihoods in %d of %d evaluations; lr_phi lowered to %g", flags, n_lik, lr_phi)
        if cfg.patience is not None:
            if rec.val_mae < best:
                best, stale = rec.val_mae, 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    return history, phi.replace(phi_state.params), GpvarParams(theta_state.params)


@dataclass
class TrainResult:
    history: list
    phi: ScoreMatrix
    params: GpvarParams


def train_identification(
    data: DatasetSplits,
    true_params: GpvarParams,
    dist: GraphDistribution,
    config: TrainConfig,
    truth: Optional[BinaryAdjacency] = None,
    phi: Optional[ScoreMatrix] = None,
) -> TrainResult:
    """Learn the scores with the predictor fixed to ``true_params``."""
    return TrainResult(*_train(data, dist, true_params, config, truth, False, phi))


def train_joint(
    data: DatasetSplits,
    dist: GraphDistribution,
    config: TrainConfig,
    spatial_order: int = 3,
    temporal_order: int = 4,
    truth: Optional[BinaryAdjacency] = None,
    theta: Optional[np.ndarray] = None,
    phi: Optional[ScoreMatrix] = None,
) -> TrainResult:
    """Learn scores and filter coefficients together; theta starts i.i.d. ``N(0, 0.1^2)``."""
    if theta is None:
        theta = RngStream(config.seed).child(4).normal((spatial_order + 1, temporal_order), 0.1)
    params = GpvarParams(theta)
    return TrainResult(*_train(data, dist, params, config, truth, True, phi))


def epochs_to_threshold(history, threshold: float) -> float:
    """First epoch whose validation MAE is at most ``threshold`` (``inf`` if never)."""
    for rec in history:
        if rec.val_mae <= threshold:
            return float(rec.epoch)
    return float("inf")
