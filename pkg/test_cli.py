"""
Tests for the command-line interface.
"""

import json

import pandas as pd
import pytest

from config import config as settings
from main import build_parser, main, resolve_train_config


FAST = ["--k", "4", "--batch-size", "8", "--eval-points", "8", "--eval-samples", "4", "--eval-interval", "1"]


@pytest.fixture
def trained(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--model", "snis", "--steps", "2", "--seed", "5", "--out", str(out), *FAST]) == 0
    return out


def test_train_writes_artifacts_and_prints_config(capsys, trained):
    for name in ("checkpoint.eimc", "metrics.csv", "config.json"):
        assert (trained / name).exists()
    config = json.loads((trained / "config.json").read_text())
    assert config["k"] == 4
    assert config["seed"] == 5
    assert '"k": 4' in capsys.readouterr().out


def test_eval_reproduces_final_training_evaluation(trained, tmp_path):
    out = tmp_path / "eval"
    assert main(["eval", "--checkpoint", str(trained / "checkpoint.eimc"), "--out", str(out)]) == 0
    estimate = json.loads((out / "eval.json").read_text())
    metrics = pd.read_csv(trained / "metrics.csv", float_precision="round_trip")
    assert estimate["value"] == pytest.approx(metrics["eval_bound"].iloc[-1], abs=1e-12)


def test_sample_command(trained, tmp_path):
    out = tmp_path / "samples"
    assert main(["sample", "--checkpoint", str(trained / "checkpoint.eimc"), "--n", "50", "--out", str(out)]) == 0
    samples = pd.read_csv(out / "samples.csv")
    assert list(samples.columns) == ["x", "y"]
    assert len(samples) == 50


def test_grid_command(trained, tmp_path):
    out = tmp_path / "grid"
    args = ["grid", "--checkpoint", str(trained / "checkpoint.eimc"), "--resolution", "8", "--grid-samples", "500"]
    assert main([*args, "--out", str(out)]) == 0
    for name in ("target_density.csv", "target_density.pgm", "model_histogram.csv", "model_histogram.pgm"):
        assert (out / name).exists()


def test_bounds_command(tmp_path):
    assert main(["bounds", "--n-outer", "50", "--critic-steps", "5", "--out", str(tmp_path)]) == 0
    table = pd.read_csv(tmp_path / "bounds.csv")
    assert list(table.columns) == ["bound", "k", "estimate", "se", "oracle", "gap"]
    assert len(table) == 21


def test_sweep_command(tmp_path):
    args = ["sweep", "--model", "snis", "--param", "k", "--values", "1", "2", "--steps", "1", *FAST[2:]]
    assert main([*args, "--out", str(tmp_path)]) == 0
    assert len(pd.read_csv(tmp_path / "sweep.csv")) == 2


def test_yaml_config_is_overridden_by_flags(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("model: trs\nk: 3\nsteps: 0\nproposal:\n  std: 2.0\n")
    args = build_parser().parse_args(["train", "--config", str(path), "--k", "5", "--proposal-mean", "0.5"])
    config = resolve_train_config(args)
    assert config.model == "trs"
    assert config.k == 5
    assert config.steps == 0
    assert config.proposal.std == 2.0
    assert config.proposal.mean == 0.5


def test_unset_step_count_follows_model():
    config = resolve_train_config(build_parser().parse_args(["train", "--model", "trs"]))
    assert config.t == settings.training.trs_t


def test_failures_exit_with_one(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "absent.eimc")]) == 1
    assert main(["train", "--k", "0", "--out", str(tmp_path)]) == 1


def test_usage_errors_exit_with_two():
    with pytest.raises(SystemExit) as excinfo:
        main(["train", "--model", "vae"])
    assert excinfo.value.code == 2
    with pytest.raises(SystemExit) as excinfo:
        main([])
    assert excinfo.value.code == 2


def test_grid_command_on_two_rings_with_odd_resolution(tmp_path):
    run = tmp_path / "rings"
    assert main(["train", "--target", "two_rings", "--steps", "0", "--out", str(run), *FAST]) == 0
    out = tmp_path / "grid"
    args = ["grid", "--checkpoint", str(run / "checkpoint.eimc"), "--resolution", "3", "--grid-samples", "200"]
    assert main([*args, "--out", str(out)]) == 0
    data = (out / "target_density.pgm").read_bytes()
    assert data.startswith(b"P5\n3 3\n255\n")
    assert max(data[-9:]) == 255
    density = pd.read_csv(out / "target_density.csv", header=None).to_numpy()
    assert density.shape == (3, 3)
    assert (density < float("inf")).all()
