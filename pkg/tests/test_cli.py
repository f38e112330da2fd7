import json
from pathlib import Path

import pytest

from gsomnet.cli import fmt, main, to_json

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_fmt_uses_17_digits():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(float("inf")) == "null"
    assert json.loads(to_json({"a": [0.1, 2]})) == {"a": [0.1, 2]}


def test_junction_merge(capsys):
    assert main(["junction", "--config", str(CONFIGS / "merge.json")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["q_hat"] == pytest.approx([0.2, 0.3, 0.5], abs=1e-9)
    assert out["transcript"]
    assert out["inadmissible_waves"] == []


def test_junction_two_by_two_strict_flag(capsys):
    assert main(["junction", "--config", str(CONFIGS / "two_by_two.json"), "--mode", "strict"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["q_hat"][:2] == pytest.approx([0.25, 0.25 / 0.6 * 0.4], abs=1e-9)


def test_riemann(capsys):
    assert main(["riemann", "--config", str(CONFIGS / "network.json")]) == 0
    assert "waves" in json.loads(capsys.readouterr().out)


def test_run_writes_outputs_deterministically(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = str(CONFIGS / "network.json")
    assert main(["run", "--config", cfg, "--out", str(a)]) == 0
    assert main(["run", "--config", cfg, "--out", str(b)]) == 0
    names = ["snapshots.csv", "events.csv", "genealogy.json", "summary.json"]
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    summary = json.loads((a / "summary.json").read_text())
    assert abs(summary["mass_residual"]) < 1e-8
    assert summary["truncated"] is None


def test_diagnose(tmp_path):
    assert main(["diagnose", "--config", str(CONFIGS / "network.json"), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "functionals.csv").read_text().splitlines()
    assert lines[0].startswith("time,")
    assert len(lines) > 2


def test_validate_model(capsys):
    assert main(["validate-model"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_config_errors_are_machine_readable(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {}, "junction": {"n": 2, "m": 1, "p": [0.5, 0.6], "A": [[0.9, 1.0]]}}')
    assert main(["junction", "--config", str(bad)]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config"
    assert len(err["details"]) == 2


def test_missing_config_flag(capsys):
    assert main(["run"]) == 1
    assert "--config" in capsys.readouterr().err


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_unknown_flag():
    with pytest.raises(SystemExit) as exc:
        main(["junction", "--frobnicate"])
    assert exc.value.code == 2
