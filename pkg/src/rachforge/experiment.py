"""Builds environments, agents and teams from a RunConfig and runs trails."""
import concurrent.futures
import dataclasses
import os

import numpy as np

from .agents import ACB_GRID, BO_ACTIONS, DQ_ACTIONS, ACAgent, DDPGAgent, DQNAgent, PGAgent
from .config import LEARNING_SCENARIOS
from .estimators import (EstimatedACBController, FixedController, GenieACBController,
                         MLEBacklogEstimator, MoMBacklogEstimator)
from .orchestrator import (LoopSettings, Team, TrainingLedger, episode_seed, evaluate,
                           hybrid_reward, run_conventional, run_decoupled)
from .predictor import TrafficPredictor
from .rach import RachEnv

SLOT_INDEX = {"acb": 0, "bo": 1, "dq": 2, "predictor": 3}


def make_env(cfg):
    r = cfg.rach_core
    return RachEnv(cfg.profile(), n_preambles=r.preambles, max_attempts=r.max_attempts,
                   energy=cfg.energy(), frame_cap=r.frame_cap or None)


def component_seed(seed, slot):
    return int(np.random.SeedSequence([int(seed), 7, SLOT_INDEX[slot]]).generate_state(1)[0])


def is_decoupled(scenario):
    return scenario in ("hybrid-decoupled", "decoupled-genie")


def loop_settings(cfg, scenario=None):
    scenario = scenario or cfg.cli.scenario
    decoupled = is_decoupled(scenario)
    label = "genie" if scenario == "decoupled-genie" else cfg.predictor.label_source
    return LoopSettings(weights=cfg.weights(), window=cfg.agents.window, decoupled=decoupled,
                        label_mode=label, raw_receptions=cfg.predictor.raw_receptions)


def _network_kw(cfg):
    n = cfg.neural
    return dict(hidden=(n.gru_units,) * n.gru_layers, dense=n.dense_units, lr=n.learning_rate,
                optimizer=n.optimizer)


def make_agent(cfg, kind, slot, seed, n_features):
    """One learner for ``slot`` ('acb', 'bo' or 'dq') of algorithm ``kind``."""
    a = cfg.agents
    gamma = a.gamma_acb if slot == "acb" else a.gamma_bo_dq
    kw = dict(window=a.window, n_features=n_features, gamma=gamma,
              seed=component_seed(seed, slot), **_network_kw(cfg))
    decay_frames = a.exploration_fraction * cfg.cli.train_episodes * cfg.traffic.frames
    actions = {"acb": ACB_GRID, "bo": BO_ACTIONS, "dq": DQ_ACTIONS}[slot]
    replay = dict(batch_size=a.batch_size, memory_size=a.memory_size, target_rate=a.target_rate,
                  warmup=a.warmup)
    if kind == "ddpg":
        if slot != "acb":
            raise ValueError("DDPG drives the continuous ACB factor only")
        return DDPGAgent(critic_lr=kw["lr"] * a.critic_lr_scale, noise_start=a.noise_start,
                         noise_end=a.noise_end, noise_frames=int(decay_frames), **replay, **kw)
    if kind == "dqn":
        return DQNAgent(actions=actions, epsilon_start=a.epsilon_start,
                        epsilon_floor=a.epsilon_floor, epsilon_frames=int(decay_frames),
                        **replay, **kw)
    if kind == "pg":
        return PGAgent(actions=actions, **kw)
    if kind == "ac":
        return ACAgent(actions=actions, critic_lr=kw["lr"] * a.critic_lr_scale, **kw)
    raise ValueError(f"unknown algorithm {kind!r}")


def make_team(cfg, scenario, seed):
    idle = cfg.idle_action()
    members = {"acb": idle.acb, "bo": idle.bo, "dq": (idle.tree_depth, idle.tree_degree)}
    width = loop_settings(cfg, scenario).state_width()
    if scenario.startswith(("hybrid", "decoupled")):
        learners = {"acb": "ddpg", "bo": "dqn", "dq": "dqn"}
    else:
        slot, kind = scenario.split("-")
        learners = {slot: kind}
    for slot, kind in learners.items():
        members[slot] = make_agent(cfg, kind, slot, seed, width)
    return Team(**members)


def make_predictor(cfg, seed):
    p = cfg.predictor
    return TrafficPredictor(max_backlog=cfg.estimators.max_backlog, window=cfg.agents.window,
                            n_features=9, batch_size=p.batch_size, buffer_size=p.buffer_size,
                            seed=component_seed(seed, "predictor"), **_network_kw(cfg))


def make_estimator(cfg, kind=None):
    kind = kind or cfg.predictor.label_source
    e = cfg.estimators
    if kind == "mom":
        return MoMBacklogEstimator(cfg.rach_core.preambles, e.max_backlog).fit()
    return MLEBacklogEstimator(cfg.rach_core.preambles, e.max_backlog, e.cache_dir or None).fit()


def make_controller(cfg, scenario):
    F = cfg.rach_core.preambles
    if scenario == "baseline":
        return FixedController(cfg.idle_action())
    if scenario == "fixed":
        return FixedController(cfg.fixed_action())
    if scenario in ("acb-fix", "bo-fix", "dq-fix"):
        # one scheme at its fixed factor, the other two idle
        fix, idle = cfg.fixed_action(), cfg.idle_action()
        keep = {"acb-fix": ("acb",), "bo-fix": ("bo",),
                "dq-fix": ("tree_depth", "tree_degree")}[scenario]
        return FixedController(dataclasses.replace(idle, **{k: getattr(fix, k) for k in keep}))
    if scenario == "genie":
        return GenieACBController(F)
    if scenario in ("mle", "mom"):
        return EstimatedACBController(make_estimator(cfg, scenario), F)
    raise ValueError(f"{scenario!r} is a learning scenario")


# ------------------------------------------------------------------ running
def simulate_trail(cfg, seed, scenario=None, n_episodes=None, rows=True):
    """Non-learning scenario over evaluation-stream seeds: (rows, episode summaries)."""
    scenario = scenario or cfg.cli.scenario
    env = make_env(cfg)
    controller = make_controller(cfg, scenario)
    w = cfg.weights()
    F = cfg.rach_core.preambles
    out_rows, summaries = [], []
    for k in range(n_episodes or cfg.cli.episodes):
        s = episode_seed(seed, k, stream=1)
        led = env.run(controller, s)
        rewards = []
        for obs, backlog in zip(led.frames, led.backlog):
            r = hybrid_reward(obs.successes, obs.mean_delay, obs.mean_energy, w, F)
            rewards.append(r)
            if rows:
                a = obs.action
                out_rows.append((obs.frame, obs.successes, obs.collided, obs.idle,
                                 obs.mean_energy, obs.mean_delay, backlog, a.acb, a.bo,
                                 a.tree_depth, a.tree_degree, r, k))
        summary = led.summary()
        summary.update(episode=k, seed=s, mean_reward=float(np.mean(rewards)),
                       total_reward=float(np.sum(rewards)))
        summaries.append(summary)
    return out_rows, summaries


def train_trail(cfg, seed, scenario=None, n_episodes=None, eval_every=None, team=None,
                predictor=None, ledger=None):
    """Train one trail; returns (team, predictor or None, TrainingLedger)."""
    scenario = scenario or cfg.cli.scenario
    if scenario not in LEARNING_SCENARIOS:
        raise ValueError(f"{scenario!r} has nothing to train")
    env = make_env(cfg)
    settings = loop_settings(cfg, scenario)
    team = team or make_team(cfg, scenario, seed)
    n_episodes = cfg.cli.train_episodes if n_episodes is None else n_episodes
    eval_every = cfg.cli.eval_every if eval_every is None else eval_every
    ledger = ledger or TrainingLedger()
    if settings.decoupled:
        predictor = predictor or make_predictor(cfg, seed)
        estimator = None if settings.label_mode == "genie" else make_estimator(cfg)
        run_decoupled(env, team, predictor, n_episodes, seed, settings, estimator,
                      eval_every=eval_every, eval_episodes=cfg.cli.eval_episodes, ledger=ledger)
    else:
        predictor = None
        run_conventional(env, team, n_episodes, seed, settings, eval_every=eval_every,
                         eval_episodes=cfg.cli.eval_episodes, ledger=ledger)
    return team, predictor, ledger


def evaluate_trail(cfg, seed, team, predictor=None, scenario=None, n_episodes=None):
    scenario = scenario or cfg.cli.scenario
    return evaluate(make_env(cfg), team, loop_settings(cfg, scenario),
                    n_episodes or cfg.cli.eval_episodes, seed, predictor)


def scenario_kpis(cfg, seed, scenario, n_episodes=None):
    """Greedy evaluation KPIs of one trail of any scenario (trained first if learning)."""
    n_eval = n_episodes or cfg.cli.eval_episodes
    if scenario in LEARNING_SCENARIOS:
        team, predictor, ledger = train_trail(cfg, seed, scenario, eval_every=0)
        ev = evaluate_trail(cfg, seed, team, predictor, scenario, n_eval)
        ev["training_rewards"] = ledger.rewards_by_episode().tolist()
        ev["training_frames"] = [e["frames_trained"] for e in ledger.episodes]
        return ev
    _, summaries = simulate_trail(cfg, seed, scenario, n_eval, rows=False)
    keys = ("mean_vs", "mean_delay", "mean_energy", "mean_reward", "dropped")
    ev = {k: float(np.mean([s[k] for s in summaries])) for k in keys}
    ev["episodes"] = summaries
    return ev


def worker_count(n_tasks):
    cap = os.environ.get("RACHFORGE_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise ValueError(f"RACHFORGE_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(limit, n_tasks))


def fan_out(fn, arg_list):
    """Run ``fn(*args)`` for each entry, in worker processes when more than one is allowed."""
    workers = worker_count(len(arg_list))
    if workers == 1:
        return [fn(*args) for args in arg_list]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*arg_list)))
