"""Experiment configuration: a JSON document with fixed sections.

Unknown keys are rejected so that typos fail loudly instead of silently
falling back to defaults.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from .core import GraphDistribution
from .estimator import BaselineConfig
from .gpvar import DEFAULT_THETA, GpvarParams
from .trainer import TrainConfig


class ConfigError(ValueError):
    """Invalid experiment configuration."""


DEFAULTS = {
    "graph": {"kind": "sbm", "n": 20, "params": {"blocks": 4, "p_in": 0.5, "p_out": 0.05}, "seed": 0},
    "gpvar": {
        "L": 2,
        "Q": 2,
        "theta": None,
        "T": 30000,
        "seed": 1,
        "burn_in": 100,
        "normalization": "sym",
        "splits": [0.7, 0.1, 0.2],
    },
    "distribution": {"kind": "bes", "K": 5, "dummies": 4, "temperature": 1.0},
    "estimator": {"mode": "surrogate", "M": 1, "lambda": None, "baseline": {"mode": "simple", "decay": 0.99}},
    "train": {
        "epochs": 100,
        "batches": 50,
        "batch_size": 32,
        "lr_phi": 0.05,
        "lr_theta": 0.05,
        "optimizer": "adam",
        "eval_mode": "frechet",
        "seed": 0,
        "cost_norm": 1,
        "fit_L": 3,
        "fit_Q": 4,
    },
    "output": {"dir": "runs/default", "dataset": None},
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key != "params":
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


class ExperimentConfig:
    """Validated configuration; ``data`` holds the merged JSON document."""

    def __init__(self, data: dict | None = None):
        self.data = _merge(DEFAULTS, data or {})
        try:
            self._validate()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls(data)

    def __getitem__(self, key):
        return self.data[key]

    def _validate(self) -> None:
        g = self.data["graph"]
        if g["kind"] not in ("erdos_renyi", "sbm", "knn_geometric"):
            raise ConfigError(f"unknown graph kind {g['kind']!r}")
        if int(g["n"]) < 2:
            raise ConfigError("graph.n must be at least 2")
        self.gpvar_params()
        self.distribution()
        self.train_config()
        if int(self.data["gpvar"]["T"]) <= int(self.data["gpvar"]["Q"]):
            raise ConfigError("gpvar.T must exceed gpvar.Q")

    def gpvar_params(self) -> GpvarParams:
        s = self.data["gpvar"]
        shape = (int(s["L"]) + 1, int(s["Q"]))
        if s["theta"] is None:
            if shape != DEFAULT_THETA.shape:
                raise ConfigError("gpvar.theta must be given when L, Q differ from 2, 2")
            return GpvarParams(DEFAULT_THETA)
        theta = np.array(s["theta"], dtype=float)
        if theta.shape != shape:
            raise ConfigError(f"gpvar.theta has shape {theta.shape}, expected {shape}")
        return GpvarParams(theta)

    def distribution(self) -> GraphDistribution:
        d = self.data["distribution"]
        if d["kind"] == "bes":
            return GraphDistribution.bes()
        if d["kind"] == "sns":
            dist = GraphDistribution.sns(int(d["K"]), int(d["dummies"]), float(d["temperature"]))
            try:
                dist.check(int(self.data["graph"]["n"]))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            return dist
        raise ConfigError(f"unknown distribution kind {d['kind']!r}")

    def train_config(self, seed=None, threads: int = 1) -> TrainConfig:
        t, e = self.data["train"], self.data["estimator"]
        mode = e["mode"]
        if mode not in ("naive", "baseline", "surrogate"):
            raise ConfigError(f"unknown estimator mode {mode!r}")
        return TrainConfig(
            epochs=int(t["epochs"]),
            batches_per_epoch=int(t["batches"]),
            batch_size=int(t["batch_size"]),
            lr_phi=float(t["lr_phi"]),
            lr_theta=float(t["lr_theta"]),
            optimizer=t["optimizer"],
            estimator=mode,
            baseline=BaselineConfig(e["baseline"]["mode"], float(e["baseline"]["decay"])),
            lam=None if e["lambda"] is None else float(e["lambda"]),
            m_samples=int(e["M"]),
            eval_mode=t["eval_mode"],
            cost_norm=int(t["cost_norm"]),
            normalization=self.data["gpvar"]["normalization"],
            seed=int(t["seed"] if seed is None else seed),
            threads=threads,
        )


def describe_defaults() -> str:
    return json.dumps(DEFAULTS, indent=2)
