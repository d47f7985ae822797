from __future__ import annotations

import json

import numpy as np
import pytest

from cgzsl.cli import EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main

FAST = {"epochs": 2, "batch_size": 16, "replay_per_class": 5, "mean_samples": 4}


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.delenv("CZSL_SEED", raising=False)
    assert main(["synth", "--classes", "8", "--dim-x", "8", "--dim-a", "4", "--per-class", "10",
                 "--seed", "1", "--out", str(tmp_path / "ds")]) == EXIT_OK
    assert main(["split", "--setting", "dynamic", "--tasks", "2", "--data", str(tmp_path / "ds"),
                 "--seen-per-task", "2", "--unseen-per-task", "2", "--out", str(tmp_path / "s.json")]) == EXIT_OK
    (tmp_path / "c.json").write_text(json.dumps(FAST))
    return tmp_path


def train(ws, out, *extra):
    return main(["train", "--data", str(ws / "ds"), "--schedule", str(ws / "s.json"),
                 "--config", str(ws / "c.json"), "--out", str(ws / out), *extra])


def test_synth_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--classes", "5", "--dim-x", "4", "--dim-a", "3", "--per-class", "6",
                     "--seed", "4", "--out", str(tmp_path / name)]) == EXIT_OK
    for f in sorted(p.name for p in (tmp_path / "a").iterdir()):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synth_too_few_classes(tmp_path, capsys):
    assert main(["synth", "--classes", "2", "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert "at least 4" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_split_preset_prints_counts(tmp_path, capsys):
    assert main(["split", "--setting", "static", "--preset", "apy", "--out", str(tmp_path / "s.json")]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[:3] == ["task 1: 8 seen / 24 unseen", "task 2: 16 seen / 16 unseen", "task 3: 24 seen / 8 unseen"]


def test_split_without_unseen_is_rejected(tmp_path):
    assert main(["split", "--setting", "dynamic", "--tasks", "2", "--classes", "10",
                 "--seen-per-task", "3", "--unseen-per-task", "0", "--out", str(tmp_path / "s.json")]) == EXIT_USAGE


def test_split_needs_inventory(tmp_path):
    assert main(["split", "--setting", "dynamic", "--tasks", "2", "--out", str(tmp_path / "s.json")]) == EXIT_USAGE


def test_train_then_eval_agree(workspace, capsys):
    assert train(workspace, "run") == EXIT_OK
    summary = capsys.readouterr().out.strip().splitlines()[-1]
    assert summary.startswith("mSA=")
    assert main(["eval", "--data", str(workspace / "ds"), "--schedule", str(workspace / "s.json"),
                 "--run", str(workspace / "run"), "--out", str(workspace / "ev")]) == EXIT_OK
    assert capsys.readouterr().out.strip().splitlines()[-1] == summary
    trained = json.loads((workspace / "run" / "report.json").read_text())
    evaluated = json.loads((workspace / "ev" / "report.json").read_text())
    for key in ("mSA", "mUA", "mH", "forgetting", "mAUSUC"):
        assert evaluated[key] == trained[key]
    for a, b in zip(trained["tasks"], evaluated["tasks"]):
        assert (a["seenAcc"], a["unseenAcc"], a["traces"]) == (b["seenAcc"], b["unseenAcc"], b["traces"])


def test_eval_single_task(workspace, capsys):
    assert train(workspace, "run") == EXIT_OK
    capsys.readouterr()
    assert main(["eval", "--data", str(workspace / "ds"), "--schedule", str(workspace / "s.json"),
                 "--run", str(workspace / "run"), "--task", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("task 1:") and "task 2:" not in out
    assert main(["eval", "--data", str(workspace / "ds"), "--schedule", str(workspace / "s.json"),
                 "--run", str(workspace / "run"), "--task", "3"]) == EXIT_USAGE


def test_train_is_byte_identical(workspace):
    assert train(workspace, "a") == EXIT_OK
    assert train(workspace, "b") == EXIT_OK
    for name in ("report.json", "metrics.csv", "traces.csv", "model_t2.czsm"):
        assert (workspace / "a" / name).read_bytes() == (workspace / "b" / name).read_bytes()


def test_ablation_is_recorded(workspace):
    assert train(workspace, "run", "--ablate", "replay", "--ablate", "sal") == EXIT_OK
    ablation = json.loads((workspace / "run" / "report.json").read_text())["config"]["ablation"]
    assert ablation["replay"] == "off" and ablation["sal"] == "off" and ablation["nuclear"] == "on"


def test_eval_dimension_mismatch(workspace, capsys):
    assert train(workspace, "run") == EXIT_OK
    assert main(["synth", "--classes", "8", "--dim-x", "6", "--dim-a", "4", "--per-class", "10",
                 "--out", str(workspace / "other")]) == EXIT_OK
    capsys.readouterr()
    assert main(["eval", "--data", str(workspace / "other"), "--schedule", str(workspace / "s.json"),
                 "--run", str(workspace / "run")]) == EXIT_USAGE
    assert "d_x" in capsys.readouterr().err


def test_numerical_failure_names_the_loss(workspace, capsys):
    (workspace / "c.json").write_text(json.dumps({**FAST, "lr": 1e300}))
    with np.errstate(all="ignore"):
        assert train(workspace, "run") == EXIT_NUMERIC
    err = capsys.readouterr().err
    assert "non-finite value in L_" in err


def test_seed_precedence(workspace, monkeypatch):
    (workspace / "c.json").write_text(json.dumps({**FAST, "seed": 5}))
    assert train(workspace, "r1") == EXIT_OK
    monkeypatch.setenv("CZSL_SEED", "7")
    assert train(workspace, "r2") == EXIT_OK
    assert train(workspace, "r3", "--seed", "9") == EXIT_OK
    seeds = [json.loads((workspace / r / "report.json").read_text())["config"]["seed"] for r in ("r1", "r2", "r3")]
    assert seeds == [5, 7, 9]


def test_bad_seed_env(workspace, monkeypatch):
    monkeypatch.setenv("CZSL_SEED", "abc")
    assert train(workspace, "run") == EXIT_USAGE


def test_unknown_config_key(workspace):
    (workspace / "c.json").write_text(json.dumps({"learning_rate": 1}))
    assert train(workspace, "run") == EXIT_USAGE


def test_missing_dataset(tmp_path):
    assert main(["train", "--data", str(tmp_path / "none"), "--schedule", str(tmp_path / "s.json"),
                 "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_missing_schedule_is_io_error(workspace):
    assert main(["train", "--data", str(workspace / "ds"), "--schedule", str(workspace / "nope.json"),
                 "--out", str(workspace / "o")]) == EXIT_IO


def test_report_command(workspace, capsys):
    assert train(workspace, "run") == EXIT_OK
    capsys.readouterr()
    assert main(["report", "--run", str(workspace / "run")]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "setting=dynamic T=2" and out[1] == "t,seenAcc,unseenAcc,H,AUSUC"
    assert main(["report", "--run", str(workspace / "run"), "--json", "--out", str(workspace / "copy")]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["T"] == 2
    assert (workspace / "copy" / "report.json").read_bytes() == (workspace / "run" / "report.json").read_bytes()


def test_no_command():
    assert main([]) == EXIT_USAGE
