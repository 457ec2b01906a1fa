"""Command-line experiment runner: simulate, train, evaluate, sweep."""
import argparse
import csv
import json
import os
import pickle
import platform
import subprocess
import sys

import numpy as np

from . import __version__
from .config import LEARNING_SCENARIOS, ConfigError, load_config
from .experiment import (evaluate_trail, fan_out, is_decoupled, make_predictor, make_team,
                         scenario_kpis, simulate_trail, train_trail)
from .neural import NumericError
from .orchestrator import LEDGER_COLUMNS, TrainingLedger

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGED = 0, 2, 3, 4
CURVE_COLUMNS = ("frames_trained", "mean_vs", "mean_reward")
SWEEP_COLUMNS = ("priority", "devices", "scheme", "mean_vs", "mean_delay", "mean_energy",
                 "mean_reward", "trails")


class TrailFailed(Exception):
    pass


# ------------------------------------------------------------------- output
def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        w.writerows(rows)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (np.ndarray, tuple)):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _code_version():
    try:
        rev = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                             cwd=os.path.dirname(__file__), timeout=5)
        commit = rev.stdout.strip() if rev.returncode == 0 else None
    except (OSError, subprocess.SubprocessError):
        commit = None
    return {"package": __version__, "commit": commit, "python": platform.python_version(),
            "numpy": np.__version__}


def write_manifest(out, command, cfg, seeds):
    with open(os.path.join(out, "config.ini"), "w") as fh:
        cfg.to_ini().write(fh)
    write_json(os.path.join(out, "manifest.json"),
               {"command": command, "argv": sys.argv[1:], "config": cfg.to_dict(),
                "seeds": seeds, "code": _code_version()})


def trail_seeds(cfg):
    return [cfg.cli.seed + k for k in range(cfg.cli.trails)]


# ----------------------------------------------------------------- bundles
def save_bundle(directory, cfg, seed, team, predictor, ledger):
    """Agent checkpoints, predictor weights, config snapshot, seed and resume state."""
    os.makedirs(directory, exist_ok=True)
    for slot, agent in team.learners.items():
        agent.save(os.path.join(directory, slot), extra={"slot": slot, "trail_seed": seed})
    if predictor is not None:
        predictor.save(os.path.join(directory, "predictor.weights"))
    with open(os.path.join(directory, "config.ini"), "w") as fh:
        cfg.to_ini().write(fh)
    write_json(os.path.join(directory, "seed.json"),
               {"seed": seed, "scenario": cfg.cli.scenario, "frames_trained": ledger.frames_trained,
                "episodes": len(ledger.episodes)})
    with open(os.path.join(directory, "resume.pkl"), "wb") as fh:
        pickle.dump({"team": team, "predictor": predictor, "ledger": ledger}, fh)


def load_bundle(directory, cfg):
    """Rebuild the team (and predictor) of a bundle; shape mismatches raise ConfigError."""
    with open(os.path.join(directory, "seed.json")) as fh:
        meta = json.load(fh)
    if meta["scenario"] != cfg.cli.scenario:
        raise ConfigError(f"checkpoint holds scenario {meta['scenario']!r}, "
                          f"config asks for {cfg.cli.scenario!r}")
    seed = meta["seed"]
    team = make_team(cfg, cfg.cli.scenario, seed)
    predictor = None
    try:
        for slot, agent in team.learners.items():
            agent.load_weights(os.path.join(directory, slot))
        if is_decoupled(cfg.cli.scenario):
            predictor = make_predictor(cfg, seed).load_weights(
                os.path.join(directory, "predictor.weights"))
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"checkpoint does not match the configuration: {exc}") from exc
    return seed, team, predictor


# ---------------------------------------------------------------- commands
def _train_one(cfg, seed, out, resume):
    trail_dir = os.path.join(out, f"trail_{seed}")
    os.makedirs(trail_dir, exist_ok=True)
    state = {}
    if resume:
        with open(os.path.join(resume, "resume.pkl"), "rb") as fh:
            state = pickle.load(fh)
    team = state.get("team") or make_team(cfg, cfg.cli.scenario, seed)
    predictor = state.get("predictor")
    if predictor is None and is_decoupled(cfg.cli.scenario):
        predictor = make_predictor(cfg, seed)
    ledger = state.get("ledger") or TrainingLedger()
    start = len(ledger.rows)
    status = "ok"
    try:
        train_trail(cfg, seed, team=team, predictor=predictor, ledger=ledger)
    except NumericError as exc:
        status = f"diverged: {exc}"
    # the ledger is written even after a divergence; weights only when finite
    write_csv(os.path.join(trail_dir, "ledger.csv"), LEDGER_COLUMNS, ledger.rows[start:])
    write_csv(os.path.join(trail_dir, "curve.csv"), CURVE_COLUMNS,
              [[c[k] for k in CURVE_COLUMNS] for c in ledger.curve])
    write_json(os.path.join(trail_dir, "episodes.json"), ledger.episodes)
    if status == "ok":
        save_bundle(os.path.join(trail_dir, "checkpoint"), cfg, seed, team, predictor, ledger)
    return {"seed": seed, "status": status, "frames_trained": ledger.frames_trained,
            "final_eval": ledger.curve[-1] if ledger.curve else None}


def cmd_train(cfg, out, resume=None):
    if cfg.cli.scenario not in LEARNING_SCENARIOS:
        raise ConfigError(f"scenario {cfg.cli.scenario!r} is not trainable")
    seeds = trail_seeds(cfg)
    if resume and len(seeds) != 1:
        raise ConfigError("--resume continues a single trail; use --trails 1")
    write_manifest(out, "train", cfg, seeds)
    results = fan_out(_train_one, [(cfg, s, out, resume) for s in seeds])
    write_json(os.path.join(out, "summary.json"), results)
    return EXIT_DIVERGED if any(r["status"] != "ok" for r in results) else EXIT_OK


def _simulate_one(cfg, seed, out):
    rows, summaries = simulate_trail(cfg, seed)
    trail_dir = os.path.join(out, f"trail_{seed}")
    os.makedirs(trail_dir, exist_ok=True)
    write_csv(os.path.join(trail_dir, "ledger.csv"), LEDGER_COLUMNS, rows)
    write_json(os.path.join(trail_dir, "episodes.json"), summaries)
    return _aggregate(summaries, seed)


def _aggregate(summaries, seed):
    keys = ("mean_vs", "mean_delay", "mean_energy", "mean_reward", "dropped", "frames")
    agg = {k: float(np.mean([s[k] for s in summaries])) for k in keys}
    agg.update(seed=seed, episodes=len(summaries))
    return agg


def cmd_simulate(cfg, out):
    if cfg.cli.scenario in LEARNING_SCENARIOS:
        raise ConfigError(f"scenario {cfg.cli.scenario!r} needs training; use train")
    seeds = trail_seeds(cfg)
    write_manifest(out, "simulate", cfg, seeds)
    trails = fan_out(_simulate_one, [(cfg, s, out) for s in seeds])
    write_json(os.path.join(out, "summary.json"), {"scenario": cfg.cli.scenario, "trails": trails})
    return EXIT_OK


def cmd_evaluate(cfg, out, checkpoint=None):
    seeds = trail_seeds(cfg)
    if cfg.cli.scenario in LEARNING_SCENARIOS:
        if not checkpoint:
            raise ConfigError("evaluating a learning scenario needs --checkpoint")
        seed, team, predictor = load_bundle(checkpoint, cfg)
        ev = evaluate_trail(cfg, seed, team, predictor)
        result = {k: v for k, v in ev.items() if k != "episodes"}
        result.update(seed=seed, checkpoint=checkpoint, episodes=ev["episodes"])
        seeds = [seed]
    else:
        trails = []
        for s in seeds:
            _, summaries = simulate_trail(cfg, s, n_episodes=cfg.cli.eval_episodes, rows=False)
            trails.append(_aggregate(summaries, s) | {"episodes": summaries})
        result = {"scenario": cfg.cli.scenario, "trails": trails}
    write_manifest(out, "evaluate", cfg, seeds)
    write_json(os.path.join(out, "kpis.json"), result)
    return EXIT_OK


def _sweep_cell(cfg, seed, scheme):
    try:
        ev = scenario_kpis(cfg, seed, scheme)
    except NumericError as exc:
        raise TrailFailed(f"trail seed {seed}: {exc}") from exc
    return {k: ev[k] for k in ("mean_vs", "mean_delay", "mean_energy", "mean_reward")}


def _parse_grid(text, cast):
    try:
        return [cast(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse sweep grid {text!r}") from None


def cmd_sweep(cfg, out):
    import copy
    priorities = _parse_grid(cfg.cli.sweep_priority, float) or [cfg.orchestrator.priority]
    devices = _parse_grid(cfg.cli.sweep_devices, int) or [cfg.traffic.devices]
    schemes = [s.strip() for s in cfg.cli.sweep_schemes.split(",") if s.strip()]
    seeds = trail_seeds(cfg)
    write_manifest(out, "sweep", cfg, seeds)
    tasks, cells = [], []
    for mu in priorities:
        for n in devices:
            for scheme in schemes:
                cell = copy.deepcopy(cfg)
                cell.set("orchestrator.priority", str(mu))
                cell.set("traffic.devices", str(n))
                cell.set("cli.scenario", scheme)
                cell.validate()
                cells.append((mu, n, scheme))
                tasks += [(cell, s, scheme) for s in seeds]
    results = fan_out(_sweep_cell, tasks)
    per_trail, matrix = [], []
    for i, (mu, n, scheme) in enumerate(cells):
        chunk = results[i * len(seeds):(i + 1) * len(seeds)]
        for s, r in zip(seeds, chunk):
            per_trail.append([mu, n, scheme, s, r["mean_vs"], r["mean_delay"], r["mean_energy"],
                              r["mean_reward"]])
        matrix.append([mu, n, scheme] + [float(np.mean([r[k] for r in chunk])) for k in
                                         ("mean_vs", "mean_delay", "mean_energy", "mean_reward")]
                      + [len(chunk)])
    write_csv(os.path.join(out, "sweep.csv"), SWEEP_COLUMNS, matrix)
    write_csv(os.path.join(out, "sweep_trails.csv"),
              ("priority", "devices", "scheme", "seed", "mean_vs", "mean_delay", "mean_energy",
               "mean_reward"), per_trail)
    return EXIT_OK


# -------------------------------------------------------------------- main
def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI file with per-module sections")
    common.add_argument("--seed", type=int, help="base seed; trail k uses seed + k")
    common.add_argument("--trails", type=int, metavar="N", help="independent trails")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="set section.key, repeatable")
    parser = argparse.ArgumentParser(prog="rachforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run a non-learning scenario")
    train = sub.add_parser("train", parents=[common], help="train a learning scenario")
    train.add_argument("--resume", metavar="DIR", help="checkpoint bundle to continue from")
    ev = sub.add_parser("evaluate", parents=[common], help="greedy evaluation")
    ev.add_argument("--checkpoint", metavar="DIR", help="checkpoint bundle")
    sub.add_parser("sweep", parents=[common], help="priority / device-count grid")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"cli.seed={args.seed}")
    if args.trails is not None:
        overrides.append(f"cli.trails={args.trails}")
    if args.out is not None:
        overrides.append(f"cli.out={args.out}")
    try:
        if args.command == "evaluate" and args.checkpoint and not args.config:
            bundled = os.path.join(args.checkpoint, "config.ini")
            cfg = load_config(bundled if os.path.exists(bundled) else None, overrides)
        else:
            cfg = load_config(args.config, overrides)
        out = cfg.cli.out
        os.makedirs(out, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "train":
            return cmd_train(cfg, out, args.resume)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, out, args.checkpoint)
        return cmd_sweep(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, TrailFailed) as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
