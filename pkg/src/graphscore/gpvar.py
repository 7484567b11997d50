"""GPVAR data generation and the polynomial graph-filter predictor.

The process is

    X_t = tanh(sum_{l=0..L} sum_{q=1..Q} theta[l, q-1] A_tilde^l X_{t-q}) + eta_t

with ``eta_t ~ N(0, I)`` and ``A_tilde`` the normalized shift operator of
``I + A``. Windows are arrays of shape ``(..., W, N)`` whose last row is the
most recent observation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .core import BinaryAdjacency, RngStream
from .estimator import CostBreakdown

DEFAULT_THETA = np.array([[2.5, -2.0], [3.0, -0.5], [-1.0, 0.5]])
OPTIMAL_MAE = float(np.sqrt(2.0 / np.pi))


@dataclass(frozen=True, eq=False)
class GpvarParams:
    """Filter coefficients, shape ``(L + 1, Q)``."""

    theta: np.ndarray

    def __post_init__(self):
        th = np.array(self.theta, dtype=float)
        if th.ndim != 2 or th.shape[1] < 1:
            raise ValueError("theta must have shape (L + 1, Q) with Q >= 1")
        if not np.all(np.isfinite(th)):
            raise ValueError("theta has non-finite entries")
        object.__setattr__(self, "theta", th)

    @property
    def spatial_order(self) -> int:
        return self.theta.shape[0] - 1

    @property
    def temporal_order(self) -> int:
        return self.theta.shape[1]

    @classmethod
    def default(cls) -> "GpvarParams":
        return cls(DEFAULT_THETA)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("time series must be a T x N array")
        object.__setattr__(self, "values", v)

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ForecastTask:
    window: int
    horizon: int = 1
    cost_norm: int = 1

    def __post_init__(self):
        if self.cost_norm not in (1, 2):
            raise ValueError("cost_norm must be 1 or 2")
        if self.horizon < 1 or self.window < 1:
            raise ValueError("window and horizon must be positive")


def split_bounds(length: int, fractions=(0.7, 0.1, 0.2)):
    """End indices of the train and validation blocks."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError("split fractions must be three non-negative numbers summing to 1")
    train_end = int(round(fractions[0] * length))
    val_end = train_end + int(round(fractions[1] * length))
    return train_end, val_end


def normalize_adjacency(a, mode: str = "sym") -> np.ndarray:
    """Shift operator of ``I + A`` with ``D_ii`` the row sums of ``I + A``.

    ``sym`` gives ``D^-1/2 (I + A) D^-1/2``; ``row`` gives ``D^-1 (I + A)``,
    whose row ``i`` only depends on the neighborhood of node ``i``.
    """
    dense = a.to_dense() if isinstance(a, BinaryAdjacency) else np.asarray(a, dtype=float)
    m = dense + np.eye(dense.shape[0])
    deg = m.sum(axis=1)
    deg[deg <= 0] = 1.0
    if mode == "sym":
        d = 1.0 / np.sqrt(deg)
        return d[:, None] * m * d[None, :]
    if mode == "row":
        return m / deg[:, None]
    raise ValueError(f"unknown normalization {mode!r}")


def gpvar_generate(
    a, params: GpvarParams, length: int, rng: RngStream, burn_in: int = 100, normalization: str = "sym"
) -> TimeSeries:
    q = params.temporal_order
    if length <= q:
        raise ValueError("length must exceed the temporal order")
    a_tilde = normalize_adjacency(a, normalization)
    n = a_tilde.shape[0]
    powers = np.empty((params.spatial_order + 1, n, n))
    powers[0] = np.eye(n)
    for l in range(1, params.spatial_order + 1):
        powers[l] = a_tilde @ powers[l - 1]
    x = np.ascontiguousarray(rng.normal((burn_in + length, n)))
    kernels.gpvar_recursion(np.ascontiguousarray(powers), np.ascontiguousarray(params.theta), x)
    return TimeSeries(x[burn_in:])


def _layers(a_tilde, n_layers: int):
    if isinstance(a_tilde, np.ndarray) and a_tilde.ndim == 2:
        return [a_tilde] * n_layers
    layers = list(a_tilde)
    if len(layers) != n_layers:
        raise ValueError(f"expected {n_layers} layer adjacencies, got {len(layers)}")
    return layers


def filter_features(a_tilde, window, spatial_order: int, temporal_order: int) -> np.ndarray:
    """Features ``F[..., l, q, n] = (P_l X_{t-q-1})_n``.

    ``P_l`` is ``A_tilde^l`` for a single matrix, or the ordered product of
    the first ``l`` layer matrices when a sequence is given. Powers are
    applied to the lagged signals by repeated multiplication.
    """
    window = np.asarray(window, dtype=float)
    if window.shape[-2] < temporal_order:
        raise ValueError(f"window of length {window.shape[-2]} shorter than Q={temporal_order}")
    layers = _layers(a_tilde, spatial_order)
    lagged = window[..., ::-1, :][..., :temporal_order, :]  # (..., Q, N), q = 1..Q
    feats = np.empty(window.shape[:-2] + (spatial_order + 1, temporal_order, window.shape[-1]))
    y = lagged
    feats[..., 0, :, :] = y
    for l, m in enumerate(layers, start=1):
        y = y @ m.T
        feats[..., l, :, :] = y
    return feats


def gpvar_predict(params: GpvarParams, a_tilde: np.ndarray, window) -> np.ndarray:
    """One-step conditional mean, ``(..., W, N) -> (..., N)``."""
    f = filter_features(a_tilde, window, params.spatial_order, params.temporal_order)
    return np.tanh(np.einsum("lq,...lqn->...n", params.theta, f))


def gpvar_predict_multilayer(params: GpvarParams, a_tilde_layers: Sequence[np.ndarray], window) -> np.ndarray:
    """Like ``gpvar_predict`` with ``A_tilde^l`` replaced by the product of the first ``l`` layers."""
    layers = list(a_tilde_layers)
    if len(layers) != params.spatial_order:
        raise ValueError(f"expected {params.spatial_order} layer adjacencies, got {len(layers)}")
    f = filter_features(layers, window, params.spatial_order, params.temporal_order)
    return np.tanh(np.einsum("lq,...lqn->...n", params.theta, f))


def node_costs(pred, target, cost_norm: int = 1) -> np.ndarray:
    """Per-node cost averaged over any leading batch axes."""
    r = np.abs(np.asarray(target) - pred)
    if cost_norm == 2:
        r = r * r
    return r.reshape(-1, r.shape[-1]).mean(axis=0)


def gpvar_grad_theta(params: GpvarParams, a_tilde, window, target, cost_norm: int = 1) -> np.ndarray:
    """Gradient of ``mean(|target - prediction|^p)`` over nodes (and windows) w.r.t. theta.

    For ``p = 1`` the subgradient at an exactly zero residual is taken as 0.
    """
    f = filter_features(a_tilde, window, params.spatial_order, params.temporal_order)
    pred = np.tanh(np.einsum("lq,...lqn->...n", params.theta, f))
    r = np.asarray(target, dtype=float) - pred
    dloss = -np.sign(r) if cost_norm == 1 else -2.0 * r
    back = dloss * (1.0 - pred * pred)
    n = back.shape[-1]
    back = back.reshape(-1, n)
    return np.einsum("bn,blqn->lq", back, f.reshape((back.shape[0],) + f.shape[-3:])) / back.size


def make_graph(kind: str, n: int, rng: RngStream, max_tries: int = 10, **params) -> BinaryAdjacency:
    """Random undirected graph without isolated nodes.

    ``erdos_renyi(p)``, ``sbm(blocks, p_in, p_out)`` with contiguous equal
    blocks, or ``knn_geometric(k)`` on uniform points in the unit square.
    """
    if n < 2:
        raise ValueError("need at least two nodes")
    for _ in range(max_tries):
        if kind == "erdos_renyi":
            p = float(params.get("p", 0.2))
            prob = np.full((n, n), p)
        elif kind == "sbm":
            blocks = int(params.get("blocks", 4))
            p_in, p_out = float(params.get("p_in", 0.5)), float(params.get("p_out", 0.05))
            label = np.arange(n) * blocks // n
            prob = np.where(label[:, None] == label[None, :], p_in, p_out)
        elif kind == "knn_geometric":
            k = int(params.get("k", 3))
            pts = rng.uniform((n, 2))
            d = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
            np.fill_diagonal(d, np.inf)
            near = np.argsort(d, axis=1, kind="stable")[:, :k]
            a = np.zeros((n, n), dtype=bool)
            a[np.repeat(np.arange(n), k), near.ravel()] = True
            a |= a.T
            if a.any(axis=1).all():
                return BinaryAdjacency.from_dense(a)
            continue
        else:
            raise ValueError(f"unknown graph kind {kind!r}")
        if np.any((prob < 0) | (prob > 1)):
            raise ValueError("edge probabilities must lie in [0, 1]")
        upper = np.triu(rng.uniform((n, n)) < prob, k=1)
        a = upper | upper.T
        if a.any(axis=1).all():
            return BinaryAdjacency.from_dense(a)
    raise ValueError(f"could not draw a {kind} graph without isolated nodes in {max_tries} tries")


def window_batch(values, target_index, window: int):
    """Stack ``values[t - window:t]`` and ``values[t]`` for each target index ``t``."""
    values = np.asarray(values, dtype=float)
    t = np.asarray(target_index, dtype=np.intp)
    if t.size and (t.min() < window or t.max() >= values.shape[0]):
        raise ValueError("target index out of range for the window")
    offsets = np.arange(-window, 0)
    return values[t[:, None] + offsets[None, :]], values[t]


class GpvarCost:
    """GPVAR forecasting cost on a fixed batch, as a function of the graph.

    Called with one adjacency it uses powers of its shift operator; called
    with ``L`` adjacencies it uses the layered product.
    """

    def __init__(self, params: GpvarParams, windows, targets, normalization: str = "sym", cost_norm: int = 1):
        self.params = params
        self.windows = np.asarray(windows, dtype=float)
        self.targets = np.asarray(targets, dtype=float)
        self.normalization = normalization
        self.cost_norm = cost_norm
        self.calls = 0

    def predict(self, *adjacencies) -> np.ndarray:
        shifts = [normalize_adjacency(a, self.normalization) for a in adjacencies]
        if len(shifts) == 1:
            return gpvar_predict(self.params, shifts[0], self.windows)
        return gpvar_predict_multilayer(self.params, shifts, self.windows)

    def __call__(self, *adjacencies) -> CostBreakdown:
        self.calls += 1
        return CostBreakdown.from_per_node(node_costs(self.predict(*adjacencies), self.targets, self.cost_norm))
