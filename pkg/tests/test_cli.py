import csv
import json
import os
import subprocess
import sys

import pytest

from phasereserve.cli import main
from phasereserve.rl.training import load_checkpoint


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert run("train", "--demand", "ramp_d3", "--episodes", 2, "--seed", 3, "--out", out) == 0
    return out


def test_train_outputs(trained):
    assert (trained / "checkpoint.npz").exists()
    rows = list(csv.reader(open(trained / "reward_curve.csv")))
    assert len(rows) == 3


def test_eval_and_compare(trained, tmp_path, capsys):
    ck = trained / "checkpoint.npz"
    assert run("eval", "--checkpoint", ck, "--seeds", "0,1", "--out", tmp_path / "rl") == 0
    assert run("baseline", "--controller", "fixed", "--seeds", "0,1", "--out", tmp_path / "fx") == 0
    for s in (0, 1):
        for stem in ("trips", "signal_events", "transitions", "forecasts"):
            assert (tmp_path / "rl" / f"{stem}_seed{s}.csv").exists()
    rep = json.loads((tmp_path / "rl" / "report.json").read_text())
    assert [r["seed"] for r in rep["per_seed"]] == [0, 1]
    capsys.readouterr()
    assert run("compare", tmp_path / "rl" / "report.json", tmp_path / "fx" / "report.json",
               "--out", tmp_path / "cmp") == 0
    assert "improvement" in capsys.readouterr().out
    assert (tmp_path / "cmp" / "comparison.csv").exists()


def test_resume_adds_episodes(trained, tmp_path):
    assert run("train", "--checkpoint", trained / "checkpoint.npz", "--episodes", 1, "--out", tmp_path) == 0
    _, meta = load_checkpoint(tmp_path / "checkpoint.npz")
    assert meta["episodes"] == 3


def test_baseline_controllers(tmp_path):
    for ctl in ("sotl", "constant"):
        assert run("baseline", "--controller", ctl, "--seeds", "0", "--demand", "ramp_d1",
                   "--out", tmp_path / ctl) == 0
    assert run("baseline", "--scenario", "fourleg", "--controller", "fixed", "--durations", "20,30,15,30",
               "--seeds", "0", "--no-reservice", "--out", tmp_path / "fl") == 0
    rep = json.loads((tmp_path / "fl" / "report.json").read_text())
    assert rep["pooled"]["reservice_pct"] == 0.0


def test_sweep_scales(tmp_path):
    assert run("sweep", "--controller", "constant", "--demand", "ramp_d5", "--scales", "0.5,1.5",
               "--seeds", "0", "--out", tmp_path) == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert {r["label"] for r in rows} == {"WSx0.5", "WSx1.5"}


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["eval", "--seeds", "0"],
    ["eval", "--checkpoint", "/nonexistent/c.npz"],
    ["baseline", "--scenario", "atlantis", "--seeds", "0"],
    ["baseline", "--demand", "nope", "--seeds", "0"],
    ["baseline", "--seeds", "x-y"],
    ["baseline", "--controller", "fixed", "--durations", "99,1,1"],
    ["train", "--episodes", "0"],
    ["train", "--episodes", "ten"],
    ["compare", "/nonexistent/a.json", "/nonexistent/b.json"],
    ["sweep", "--scales", "a,b", "--demand", "ramp_d5"],
])
def test_config_errors_exit_1(argv, tmp_path):
    assert run(*argv, *([] if argv == ["bogus"] else ["--out", tmp_path])) == 1


def test_runtime_error_exit_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("baseline", "--seeds", "0", "--demand", "ramp_d1", "--out", blocker) == 2


def test_module_entry_point(tmp_path):
    env = dict(os.environ)
    r = subprocess.run([sys.executable, "-m", "phasereserve.cli", "baseline", "--seeds", "0",
                        "--demand", "ramp_d1", "--out", str(tmp_path)], capture_output=True, env=env)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "phasereserve.cli", "eval"], capture_output=True, env=env)
    assert r.returncode == 1


def _csv_bytes(d):
    return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*.csv"))}


def test_repeated_runs_are_byte_identical(tmp_path):
    for tag in ("a", "b"):
        assert run("train", "--demand", "ramp_d2", "--episodes", 2, "--seed", 7, "--out", tmp_path / tag) == 0
        assert run("eval", "--checkpoint", tmp_path / tag / "checkpoint.npz", "--seeds", "0,1",
                   "--out", tmp_path / tag / "ev") == 0
    a, b = _csv_bytes(tmp_path / "a"), _csv_bytes(tmp_path / "b")
    assert a and a == b
