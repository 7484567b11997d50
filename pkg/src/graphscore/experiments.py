"""Building the synthetic GPVAR instance described by a configuration."""

from __future__ import annotations

from dataclasses import dataclass

from .config import ExperimentConfig
from .core import BinaryAdjacency, RngStream
from .gpvar import GpvarParams, gpvar_generate, make_graph
from .trainer import DatasetSplits


@dataclass(frozen=True, eq=False)
class Instance:
    graph: BinaryAdjacency
    params: GpvarParams
    data: DatasetSplits


def make_instance_graph(cfg: ExperimentConfig, seed=None) -> BinaryAdjacency:
    g = cfg["graph"]
    return make_graph(g["kind"], int(g["n"]), RngStream(int(g["seed"] if seed is None else seed)), **g["params"])


def make_instance(cfg: ExperimentConfig | None = None) -> Instance:
    """Graph, generator parameters and split series; all randomness from config seeds."""
    cfg = cfg or ExperimentConfig()
    s = cfg["gpvar"]
    graph = make_instance_graph(cfg)
    params = cfg.gpvar_params()
    series = gpvar_generate(graph, params, int(s["T"]), RngStream(int(s["seed"])), int(s["burn_in"]), s["normalization"])
    return Instance(graph, params, DatasetSplits.from_series(series.values, tuple(s["splits"])))
