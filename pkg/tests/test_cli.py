import json

import numpy as np
import pytest

from graphscore import cli, verify
from graphscore.io import read_series

SMALL = {
    "graph": {"kind": "sbm", "n": 6, "params": {"blocks": 2, "p_in": 0.7, "p_out": 0.1}, "seed": 3},
    "gpvar": {"T": 2000},
    "train": {"epochs": 2, "batches": 3, "batch_size": 8},
}


def _config(tmp_path, data=SMALL, name="cfg.json"):
    path = tmp_path / name
    merged = json.loads(json.dumps(data))
    merged.setdefault("output", {})["dir"] = str(tmp_path / "run")
    path.write_text(json.dumps(merged))
    return str(path)


def _run(*argv):
    return cli.main([str(a) for a in argv])


def test_generate_file_size_and_sidecar(tmp_path):
    assert _run("generate", "--config", _config(tmp_path)) == 0
    run = tmp_path / "run"
    assert (run / "series.bin").stat().st_size == 16 + 2000 * 6 * 8
    side = json.loads((run / "series.json").read_text())
    assert side["n_nodes"] == 6 and side["splits"]["train_end"] == 1400
    assert read_series(run / "series.bin").shape == (2000, 6)


def test_generate_default_size(tmp_path):
    assert _run("generate", "--out", tmp_path / "d") == 0
    assert (tmp_path / "d" / "series.bin").stat().st_size == 8 + 8 + 30000 * 20 * 8


def test_generate_is_byte_identical(tmp_path):
    cfg = _config(tmp_path)
    _run("generate", "--config", cfg, "--out", tmp_path / "a")
    _run("generate", "--config", cfg, "--out", tmp_path / "b")
    for name in ("series.bin", "series.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_generate_zero_theta(tmp_path):
    data = json.loads(json.dumps(SMALL))
    data["gpvar"]["theta"] = [[0.0, 0.0]] * 3
    data["gpvar"]["T"] = 10000
    assert _run("generate", "--config", _config(tmp_path, data)) == 0
    side = json.loads((tmp_path / "run" / "series.json").read_text())
    assert side["theta"] == [[0.0, 0.0]] * 3
    np.testing.assert_allclose(read_series(tmp_path / "run" / "series.bin").var(axis=0), 1.0, rtol=0.05)


def test_refuses_overwrite(tmp_path, capsys):
    cfg = _config(tmp_path)
    assert _run("generate", "--config", cfg) == 0
    assert _run("generate", "--config", cfg) == 2
    assert "--force" in capsys.readouterr().err
    assert _run("generate", "--config", cfg, "--force") == 0


def test_bad_config_exit_code(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"graph": {"size": 3}}))
    assert _run("generate", "--config", path) == 2
    assert _run("generate", "--threads", 0) == 2


def test_missing_dataset_exit_code(tmp_path):
    assert _run("identify", "--config", _config(tmp_path)) == 3


@pytest.mark.parametrize("command", ["identify", "joint"])
def test_training_commands(tmp_path, command):
    cfg = _config(tmp_path)
    assert _run("generate", "--config", cfg) == 0
    assert _run(command, "--config", cfg) == 0
    out = tmp_path / "run" / command
    lines = (out / "history.csv").read_text().splitlines()
    assert lines[0].split(",") == cli.HISTORY_COLUMNS
    assert len(lines) == 4
    summary = json.loads((out / "summary.json").read_text())
    assert summary["epochs_run"] == 2 and summary["version"] == cli.VERSION
    assert 0.0 <= summary["final"]["edge_accuracy"] <= 1.0


def test_zero_epochs_single_row(tmp_path):
    data = json.loads(json.dumps(SMALL))
    data["train"]["epochs"] = 0
    cfg = _config(tmp_path, data)
    _run("generate", "--config", cfg)
    assert _run("identify", "--config", cfg) == 0
    assert len((tmp_path / "run" / "identify" / "history.csv").read_text().splitlines()) == 2


def test_identify_is_byte_identical(tmp_path):
    cfg = _config(tmp_path)
    _run("generate", "--config", cfg)
    _run("identify", "--config", cfg, "--out", tmp_path / "a")
    _run("identify", "--config", cfg, "--out", tmp_path / "b")
    for name in ("history.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sample_count_zero(tmp_path):
    assert _run("sample", "--config", _config(tmp_path), "--init", "--count", 0) == 0
    out = tmp_path / "run" / "sample"
    assert (out / "samples.jsonl").read_text() == ""
    mean = json.loads((out / "mean.json").read_text())
    assert set(mean) >= {"frechet_edges", "mu"}


def test_sample_huge_scores_complete(tmp_path):
    scores = tmp_path / "phi.json"
    scores.write_text(json.dumps(np.full((6, 6), 1e9).tolist()))
    assert _run("sample", "--config", _config(tmp_path), "--scores", scores, "--count", 5) == 0
    for line in (tmp_path / "run" / "sample" / "samples.jsonl").read_text().splitlines():
        assert len(json.loads(line)["edges"]) == 30


def test_sample_sns_row_bound(tmp_path):
    data = {"graph": {"n": 5}, "distribution": {"kind": "sns", "K": 2, "dummies": 1}}
    assert _run("sample", "--config", _config(tmp_path, data), "--init", "--count", 50) == 0
    for line in (tmp_path / "run" / "sample" / "samples.jsonl").read_text().splitlines():
        edges = json.loads(line)["edges"]
        counts = np.bincount([i for i, _ in edges], minlength=5)
        assert counts.max() <= 2


def test_sample_needs_scores(tmp_path):
    assert _run("sample", "--config", _config(tmp_path)) == 2


def test_verify_fast_passes(capsys):
    assert _run("verify", "--level", "fast") == 0
    out = capsys.readouterr().out
    assert "8/8 checks passed" in out and "Prop1-SNS-mu" in out


def test_verify_failure_exit_code(monkeypatch):
    monkeypatch.setattr(verify, "FAST", [lambda: verify.CheckResult("always-fails", False, "forced")])
    assert _run("verify") == 5


def test_corrupted_closed_form_fails_check():
    from graphscore import samplers

    def corrupted(phi, dist):
        return samplers.sns_mean_bk(phi, dist)[:, : phi.n_nodes]

    result = verify.check_mu_sns(n_cases=5, mean_fn=corrupted)
    assert not result.passed
    assert "max deviation" in result.detail


def test_full_level_includes_two_layer_check():
    assert verify.check_two_layer_unbiased in verify.FULL_EXTRA
    assert verify.check_two_layer_unbiased(n_repeats=200).name.startswith("Eq8-two-layer-unbiased")
