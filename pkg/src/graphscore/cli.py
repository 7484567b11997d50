"""``graphscore`` command line.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure, 5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, samplers, verify
from .config import DEFAULTS, ConfigError, ExperimentConfig
from .core import BinaryAdjacency, RngStream, ScoreMatrix
from .gpvar import GpvarParams
from .io import DataError, dump_json, load_json, read_series, write_series
from .samplers import ConfigurationError
from .trainer import DatasetSplits, NumericalError, init_scores, train_identification, train_joint

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL, EXIT_VERIFY = 0, 2, 3, 4, 5
VERSION = f"v{__version__}"
HISTORY_COLUMNS = [
    "epoch",
    "train_mae",
    "val_mae",
    "edge_precision",
    "edge_recall",
    "edge_accuracy",
    "baseline_value_mean",
    "grad_variance_trace",
    "instability_flags",
    "wall_ms",
]
SERIES_FILE, SIDECAR_FILE = "series.bin", "series.json"

log = logging.getLogger("graphscore")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.6g}"


def _clean(x):
    """JSON-safe copy: NaN and infinities become null."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def _load_config(args) -> ExperimentConfig:
    return ExperimentConfig.load(args.config) if args.config else ExperimentConfig()


def _prepare_dir(path: Path, names, force: bool) -> None:
    existing = [n for n in names if (path / n).exists()]
    if existing and not force:
        raise ConfigError(f"{path / existing[0]} exists; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)


# --------------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    from .experiments import make_instance

    cfg = _load_config(args)
    if args.seed is not None:
        cfg.data["gpvar"]["seed"] = args.seed
    out = Path(args.out or cfg["output"]["dir"])
    _prepare_dir(out, [SERIES_FILE, SIDECAR_FILE], args.force)
    inst = make_instance(cfg)
    write_series(out / SERIES_FILE, inst.data.values)
    s = cfg["gpvar"]
    sidecar = {
        "format": "graphscore-series-1",
        "length": int(inst.data.values.shape[0]),
        "n_nodes": int(inst.data.values.shape[1]),
        "seed": int(s["seed"]),
        "burn_in": int(s["burn_in"]),
        "normalization": s["normalization"],
        "graph": {**cfg["graph"], "edges": [list(e) for e in inst.graph.edges()]},
        "theta": inst.params.theta.tolist(),
        "splits": {"fractions": list(s["splits"]), "train_end": inst.data.train_end, "val_end": inst.data.val_end},
        "version": VERSION,
    }
    dump_json(sidecar, out / SIDECAR_FILE)
    log.info("wrote %s and %s", out / SERIES_FILE, out / SIDECAR_FILE)
    return EXIT_OK


def _load_dataset(cfg: ExperimentConfig):
    root = Path(cfg["output"]["dataset"] or cfg["output"]["dir"])
    values = read_series(root / SERIES_FILE)
    side = load_json(root / SIDECAR_FILE)
    try:
        n = int(side["n_nodes"])
        truth = BinaryAdjacency.from_edges(n, side["graph"]["edges"])
        params = GpvarParams(np.array(side["theta"], dtype=float))
        splits = side["splits"]
        data = DatasetSplits(values, int(splits["train_end"]), int(splits["val_end"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"sidecar {root / SIDECAR_FILE} is malformed: {exc}") from None
    if values.shape[1] != n:
        raise DataError("series and sidecar disagree on the node count")
    return data, truth, params


def _write_history(path: Path, history, timing: bool) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_COLUMNS)
    for r in history:
        w.writerow(
            [
                _fmt(r.epoch),
                _fmt(r.train_mae),
                _fmt(r.val_mae),
                _fmt(r.edge_precision),
                _fmt(r.edge_recall),
                _fmt(r.edge_accuracy),
                _fmt(r.baseline_value_mean),
                _fmt(r.grad_variance_trace),
                _fmt(r.instability_flag_count),
                _fmt(r.wall_ms if timing else 0.0),
            ]
        )
    path.write_text(buf.getvalue())


def _train_command(args, joint: bool) -> int:
    cfg = _load_config(args)
    name = "joint" if joint else "identify"
    out = Path(args.out) if args.out else Path(cfg["output"]["dir"]) / name
    _prepare_dir(out, ["history.csv", "summary.json"], args.force)
    data, truth, true_params = _load_dataset(cfg)
    dist = cfg.distribution()
    tc = cfg.train_config(seed=args.seed, threads=args.threads)
    if joint:
        t = cfg["train"]
        result = train_joint(data, dist, tc, int(t["fit_L"]), int(t["fit_Q"]), truth=truth)
    else:
        result = train_identification(data, true_params, dist, tc, truth=truth)
    hist = result.history
    _write_history(out / "history.csv", hist, args.timing)
    best = min(hist, key=lambda r: (r.val_mae, r.epoch))
    final = hist[-1]
    summary = {
        "command": name,
        "version": VERSION,
        "seed": tc.seed,
        "epochs_run": final.epoch,
        "final": {k: getattr(final, k) for k in ("train_mae", "val_mae", "edge_precision", "edge_recall", "edge_accuracy")},
        "best": {"epoch": best.epoch, "val_mae": best.val_mae, "edge_accuracy": best.edge_accuracy},
        "frechet_edges": [list(e) for e in samplers.frechet_mean(result.phi, dist).edges()],
        "theta": result.params.theta.tolist(),
        "config": cfg.data,
    }
    dump_json(_clean(summary), out / "summary.json")
    log.info("final val MAE %.4f, edge accuracy %.4f", final.val_mae, final.edge_accuracy)
    return EXIT_OK


def cmd_identify(args) -> int:
    return _train_command(args, joint=False)


def cmd_joint(args) -> int:
    return _train_command(args, joint=True)


def cmd_sample(args) -> int:
    cfg = _load_config(args)
    dist = cfg.distribution()
    seed = args.seed if args.seed is not None else int(cfg["train"]["seed"])
    n = int(cfg["graph"]["n"])
    d = dist.n_dummies if dist.is_sns else 0
    if args.scores:
        raw = load_json(args.scores)
        try:
            values = np.array(raw, dtype=float)
            phi = ScoreMatrix(values, d)
        except (TypeError, ValueError) as exc:
            raise DataError(f"scores file {args.scores} is malformed: {exc}") from None
    elif args.init:
        phi = init_scores(dist, n, RngStream(seed).child(0))
    else:
        raise ConfigError("sample needs --scores FILE or --init")
    if args.count < 0:
        raise ConfigError("--count must be non-negative")
    out = Path(args.out or Path(cfg["output"]["dir"]) / "sample")
    _prepare_dir(out, ["samples.jsonl", "mean.json"], args.force)
    rng = RngStream(seed).child(1)
    lines = []
    for c in range(args.count):
        s = samplers.sample(phi, dist, rng.child(c))
        lines.append(json.dumps({"index": c, "edges": [list(e) for e in s.adjacency.edges()]}))
    (out / "samples.jsonl").write_text("".join(line + "\n" for line in lines))
    mean = {
        "frechet_edges": [list(e) for e in samplers.frechet_mean(phi, dist).edges()],
        "mu": samplers.distribution_mean(phi, dist).tolist(),
        "distribution": {"kind": dist.kind, "K": dist.k_neighbors, "dummies": dist.n_dummies, "temperature": dist.temperature},
        "version": VERSION,
    }
    dump_json(mean, out / "mean.json")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify.run_checks(args.level, report=lambda line: print(line, flush=True))
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


# --------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config (JSON); built-in defaults otherwise")
    common.add_argument("--out", metavar="DIR", help="output directory (default from output.dir)")
    common.add_argument("--seed", type=int, metavar="U64", help="override the command's seed")
    common.add_argument("--threads", type=int, default=1, metavar="N", help="worker cap for Monte Carlo draws")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")

    parser = argparse.ArgumentParser(
        prog="graphscore",
        description="Sparse graph learning with score-function gradient estimators.",
        epilog="Config defaults:\n" + json.dumps(DEFAULTS, indent=2),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="simulate a GPVAR dataset (seed overrides gpvar.seed)").set_defaults(
        func=cmd_generate
    )
    for name, func, text in (
        ("identify", cmd_identify, "learn the graph with the generating filter fixed"),
        ("joint", cmd_joint, "learn graph and filter together"),
    ):
        p = sub.add_parser(name, parents=[common], help=f"{text} (seed overrides train.seed)")
        p.add_argument("--timing", action="store_true", help="record wall-clock ms in history.csv (breaks byte-identical reruns)")
        p.set_defaults(func=func)
    p = sub.add_parser("sample", parents=[common], help="draw graphs from a score matrix")
    p.add_argument("--count", type=int, default=1, help="number of graphs to draw")
    p.add_argument("--scores", metavar="PATH", help="JSON score matrix, N x (N + dummies)")
    p.add_argument("--init", action="store_true", help="use freshly initialized scores")
    p.set_defaults(func=cmd_sample)
    p = sub.add_parser("verify", parents=[common], help="run the oracle cross-checks")
    p.add_argument("--level", choices=("fast", "full"), default="fast")
    p.set_defaults(func=cmd_verify)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("GRAPHSCORE_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), format="%(levelname)s %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
