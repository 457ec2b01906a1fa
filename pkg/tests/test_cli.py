import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from rachforge.cli import CURVE_COLUMNS, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO, EXIT_OK, main
from rachforge.experiment import worker_count
from rachforge.neural import read_header
from rachforge.orchestrator import LEDGER_COLUMNS

TINY = ["neural.gru_layers=1", "neural.gru_units=4", "neural.dense_units=4", "agents.window=3",
        "agents.warmup=16", "agents.batch_size=8", "predictor.batch_size=8",
        "traffic.devices=120", "cli.eval_episodes=2"]


def run(cmd, out, *extra, overrides=TINY):
    argv = [cmd, "--out", str(out)]
    for o in overrides:
        argv += ["--override", o]
    return main(argv + list(extra))


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_simulate_fixed_ledger(tmp_path):
    rc = run("simulate", tmp_path, "--seed", "3", "--trails", "2",
             overrides=["cli.scenario=fixed", "cli.episodes=3"])
    assert rc == EXIT_OK
    rows = read_rows(tmp_path / "trail_3" / "ledger.csv")
    assert tuple(rows[0]) == LEDGER_COLUMNS
    for r in rows[1:]:
        assert int(r[1]) + int(r[2]) + int(r[3]) == 54
        assert (float(r[7]), int(r[8]), int(r[9]), int(r[10])) == (0.5, 2, 2, 2)
    assert (tmp_path / "trail_4" / "episodes.json").exists()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seeds"] == [3, 4] and manifest["command"] == "simulate"
    assert "package" in manifest["code"]
    assert (tmp_path / "config.ini").exists()


def test_simulate_genie_peak(tmp_path):
    assert run("simulate", tmp_path, "--seed", "0",
               overrides=["cli.scenario=genie", "cli.episodes=100"]) == EXIT_OK
    rows = read_rows(tmp_path / "trail_0" / "ledger.csv")[1:]
    peak = [int(r[1]) for r in rows if int(r[6]) >= 54]
    assert 18 <= np.mean(peak) <= 21


def test_baseline_below_genie_after_peak(tmp_path):
    means = {}
    for scen in ("baseline", "genie"):
        run("simulate", tmp_path / scen, overrides=[f"cli.scenario={scen}", "cli.episodes=20"])
        rows = read_rows(tmp_path / scen / "trail_0" / "ledger.csv")[1:]
        means[scen] = np.mean([int(r[1]) for r in rows if 11 <= int(r[0]) <= 20])
    assert means["baseline"] < means["genie"]


def test_exit_codes(tmp_path):
    assert run("simulate", tmp_path, overrides=["cli.scenario=warp"]) == EXIT_CONFIG
    assert run("simulate", tmp_path, overrides=["cli.scenario=acb-dqn"]) == EXIT_CONFIG
    assert run("train", tmp_path, overrides=["cli.scenario=genie"]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(tmp_path / "absent.ini"),
                 "--out", str(tmp_path)]) == EXIT_IO
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("simulate", blocker / "sub", overrides=["cli.scenario=fixed"]) == EXIT_IO


def test_divergence_exit_code(tmp_path):
    with np.errstate(all="ignore"):
        rc = run("train", tmp_path, overrides=TINY + ["cli.scenario=acb-dqn",
                                                       "neural.learning_rate=1e300",
                                                       "cli.train_episodes=3"])
    assert rc == EXIT_DIVERGED
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary[0]["status"].startswith("diverged")
    assert (tmp_path / "trail_0" / "ledger.csv").exists()
    assert not (tmp_path / "trail_0" / "checkpoint").exists()


@pytest.mark.parametrize("scenario", ["hybrid-conventional", "hybrid-decoupled", "acb-pg"])
def test_train_artifacts(tmp_path, scenario):
    rc = run("train", tmp_path, overrides=TINY + [f"cli.scenario={scenario}",
                                                  "cli.train_episodes=4", "cli.eval_every=1"])
    assert rc == EXIT_OK
    trail = tmp_path / "trail_0"
    curve = read_rows(trail / "curve.csv")
    assert tuple(curve[0]) == CURVE_COLUMNS
    frames = [int(r[0]) for r in curve[1:]]
    assert len(frames) == 4 and all(b > a for a, b in zip(frames, frames[1:]))
    ledger = read_rows(trail / "ledger.csv")
    assert len(ledger) - 1 == frames[-1]
    ck = trail / "checkpoint"
    assert json.loads((ck / "seed.json").read_text())["seed"] == 0
    assert (ck / "config.ini").exists()
    slot = "acb"
    sidecar = json.loads((ck / slot / "agent.json").read_text())
    assert sidecar["slot"] == "acb" and "config" in sidecar
    weights = next(p for p in os.listdir(ck / slot) if p.endswith(".weights"))
    assert read_header(ck / slot / weights)["version"] == 1
    assert (ck / "predictor.weights").exists() == (scenario == "hybrid-decoupled")


def test_evaluate_matches_last_training_eval(tmp_path):
    ov = TINY + ["cli.scenario=hybrid-conventional", "cli.train_episodes=3", "cli.eval_every=3"]
    assert run("train", tmp_path / "t", overrides=ov) == EXIT_OK
    last = read_rows(tmp_path / "t" / "trail_0" / "curve.csv")[-1]
    assert main(["evaluate", "--checkpoint", str(tmp_path / "t" / "trail_0" / "checkpoint"),
                 "--out", str(tmp_path / "e")]) == EXIT_OK
    kpis = json.loads((tmp_path / "e" / "kpis.json").read_text())
    assert kpis["mean_vs"] == float(last[1])
    assert kpis["mean_reward"] == float(last[2])


def test_evaluate_checkpoint_mismatch(tmp_path):
    ov = TINY + ["cli.scenario=acb-dqn", "cli.train_episodes=1"]
    run("train", tmp_path / "t", overrides=ov)
    ck = str(tmp_path / "t" / "trail_0" / "checkpoint")
    bad = [o for o in ov if not o.startswith("neural.gru_units")] + ["neural.gru_units=6"]
    argv = ["evaluate", "--checkpoint", ck, "--out", str(tmp_path / "e")]
    assert main(argv + sum([["--override", o] for o in bad], [])) == EXIT_CONFIG
    other = [o for o in ov if "scenario" not in o] + ["cli.scenario=acb-pg"]
    assert main(argv + sum([["--override", o] for o in other], [])) == EXIT_CONFIG
    assert main(["evaluate", "--out", str(tmp_path / "e"), "--override",
                 "cli.scenario=acb-dqn"]) == EXIT_CONFIG


def test_genie_evaluate_equals_simulate(tmp_path):
    ov = ["cli.scenario=genie", "cli.episodes=4", "cli.eval_episodes=4"]
    run("simulate", tmp_path / "s", overrides=ov)
    run("evaluate", tmp_path / "e", overrides=ov)
    sim = json.loads((tmp_path / "s" / "summary.json").read_text())["trails"][0]
    ev = json.loads((tmp_path / "e" / "kpis.json").read_text())["trails"][0]
    for k in ("mean_vs", "mean_delay", "mean_energy", "mean_reward"):
        assert sim[k] == ev[k]


def test_resume_reproduces_uninterrupted_run(tmp_path):
    base = TINY + ["cli.scenario=hybrid-decoupled", "cli.eval_every=0",
                   "agents.exploration_fraction=0"]
    run("train", tmp_path / "full", overrides=base + ["cli.train_episodes=4"])
    run("train", tmp_path / "a", overrides=base + ["cli.train_episodes=2"])
    rc = run("train", tmp_path / "b", "--resume", str(tmp_path / "a" / "trail_0" / "checkpoint"),
             overrides=base + ["cli.train_episodes=2"])
    assert rc == EXIT_OK
    full = read_rows(tmp_path / "full" / "trail_0" / "ledger.csv")
    first = read_rows(tmp_path / "a" / "trail_0" / "ledger.csv")
    second = read_rows(tmp_path / "b" / "trail_0" / "ledger.csv")
    assert full == first + second[1:]
    assert main(["train", "--out", str(tmp_path / "c"), "--trails", "2", "--resume",
                 str(tmp_path / "a" / "trail_0" / "checkpoint")]) == EXIT_CONFIG


def test_sweep_matrix(tmp_path):
    ov = ["cli.sweep_priority=0,1", "cli.sweep_devices=100,200", "cli.sweep_schemes=genie,fixed",
          "cli.eval_episodes=2"]
    assert run("sweep", tmp_path, "--trails", "2", overrides=ov) == EXIT_OK
    rows = read_rows(tmp_path / "sweep.csv")
    assert rows[0][:3] == ["priority", "devices", "scheme"]
    assert len(rows) == 1 + 2 * 2 * 2
    assert len(read_rows(tmp_path / "sweep_trails.csv")) == 1 + 16
    assert run("sweep", tmp_path, overrides=["cli.sweep_devices=lots"]) == EXIT_CONFIG


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("RACHFORGE_THREADS", "1")
    assert worker_count(8) == 1
    monkeypatch.setenv("RACHFORGE_THREADS", "3")
    assert worker_count(8) == 3 and worker_count(2) == 2
    monkeypatch.setenv("RACHFORGE_THREADS", "x")
    with pytest.raises(ValueError):
        worker_count(2)


def test_parallel_trails_match_serial(tmp_path, monkeypatch):
    ov = ["cli.scenario=mle", "cli.episodes=2"]
    monkeypatch.setenv("RACHFORGE_THREADS", "1")
    run("simulate", tmp_path / "serial", "--trails", "2", overrides=ov)
    monkeypatch.setenv("RACHFORGE_THREADS", "2")
    run("simulate", tmp_path / "par", "--trails", "2", overrides=ov)
    for k in (0, 1):
        assert (read_rows(tmp_path / "serial" / f"trail_{k}" / "ledger.csv")
                == read_rows(tmp_path / "par" / f"trail_{k}" / "ledger.csv"))


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rachforge.cli", "simulate", "--out",
                           str(tmp_path), "--override", "cli.scenario=fixed", "--override",
                           "cli.episodes=1"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
