import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from edgemesh import cli

from conftest import DATA

GOLDEN = Path(__file__).resolve().parent / "golden"


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("sub", ["", "node", "sim", "plan", "report"])
def test_help_matches_golden(sub, capsys, monkeypatch):
    monkeypatch.setenv("COLUMNS", "80")
    argv = ([sub] if sub else []) + ["--help"]
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    assert exc.value.code == 0
    name = f"help_{sub}.txt" if sub else "help.txt"
    assert capsys.readouterr().out == (GOLDEN / name).read_text()


def test_help_lists_every_flag(capsys, monkeypatch):
    monkeypatch.setenv("COLUMNS", "80")
    flags = {"node": ["--config"], "sim": ["--scenario", "--out", "--seed"], "plan": ["--instance", "--out"], "report": ["--in"]}
    for sub, names in flags.items():
        text = (GOLDEN / f"help_{sub}.txt").read_text()
        for name in names:
            assert name in text


def test_sim_smoke_writes_only_into_out(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, out, _ = run(["sim", "--scenario", str(DATA / "case_study.json"), "--out", "out", "--seed", "7"], capsys)
    assert code == 0
    assert json.loads(out)["files"] == ["events.csv", "figure.png", "metrics.csv", "summary.json"]
    assert [p.name for p in tmp_path.iterdir()] == ["out"]
    assert len(list((tmp_path / "out").iterdir())) == 4
    code, out, _ = run(["report", "--in", "out"], capsys)
    assert code == 0 and json.loads(out)["offloads"] == 1
    assert len(list((tmp_path / "out").iterdir())) == 4


def test_plan_outputs(tmp_path, capsys):
    code, out, _ = run(["plan", "--instance", str(DATA / "small_instance.json"), "--out", str(tmp_path / "p" / "plan.json")], capsys)
    assert code == 0 and json.loads(out)["objective"] == 3
    assert sorted(p.name for p in (tmp_path / "p").iterdir()) == ["plan.csv", "plan.json"]


@pytest.mark.parametrize(
    "argv,code,category",
    [
        (["plan", "--instance", str(DATA / "tiny_infeasible.json")], 4, "PlanInfeasible"),
        (["node", "--config", "missing.json"], 2, "ConfigInvalid"),
        (["sim", "--scenario", "missing.json", "--out", "o"], 3, "ScenarioInvalid"),
        (["plan", "--instance", "missing.json"], 5, "IoError"),
        (["report", "--in", "nowhere"], 5, "IoError"),
    ],
)
def test_error_exit_codes(argv, code, category, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    got, _, err = run(argv, capsys)
    assert got == code
    lines = err.strip().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["error"] == category


def test_sim_out_is_a_file(tmp_path, capsys):
    blocker = tmp_path / "f"
    blocker.write_text("")
    code, _, err = run(["sim", "--scenario", str(DATA / "case_study.json"), "--out", str(blocker)], capsys)
    assert code == 5 and json.loads(err)["error"] == "IoError"


def test_bad_scenario_content(tmp_path, capsys):
    bad = tmp_path / "s.json"
    bad.write_text(json.dumps({"horizon": {"num_slots": 2}, "nodes": []}))
    code, _, err = run(["sim", "--scenario", str(bad), "--out", str(tmp_path / "o")], capsys)
    assert code == 3 and not (tmp_path / "o").exists()


def test_json_logs_via_env(tmp_path):
    env = {**os.environ, "EDGEMESH_LOG": "info"}
    proc = subprocess.run(
        [sys.executable, "-m", "edgemesh", "plan", "--instance", str(DATA / "tiny_infeasible.json")],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 4
    for line in proc.stderr.strip().splitlines():
        json.loads(line)
    proc = subprocess.run(
        [sys.executable, "-m", "edgemesh", "sim", "--scenario", str(DATA / "case_study.json"), "--out", str(tmp_path)],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0
    records = [json.loads(line) for line in proc.stderr.strip().splitlines()]
    assert records and all({"ts", "level", "logger", "msg"} <= set(r) for r in records)
