"""Reward shaping, state assembly and the two multi-agent training loops."""
import math
from dataclasses import dataclass, field

import numpy as np

from .agents import DDPGAgent, TrainingDiverged
from .neural import NumericError
from .rach import ActionSet

N_OBS_FEATURES = 9
N_ACTION_FEATURES = 4
N_RECEPTION_FEATURES = 5

LEDGER_COLUMNS = ("frame", "V_s", "V_c", "V_i", "V_e", "V_d", "backlog_true",
                  "acb", "bo", "tdepth", "tdegree", "reward", "episode")


# ---------------------------------------------------------------------- reward
@dataclass(frozen=True)
class RewardWeights:
    """Weights of the success, delay and energy terms plus their tanh scales.

    ``idle_value`` is the delay and energy sub-reward used for frames without
    any success, where neither quantity is reported.
    """

    x_s: float = 1.0
    x_d: float = 0.0
    x_e: float = 0.0
    c_d: float = 10.0
    c_e: float = 0.5
    idle_value: float = 0.5

    def __post_init__(self):
        if min(self.x_s, self.x_d, self.x_e) < 0:
            raise ValueError("reward weights must be non-negative")
        if self.c_d <= 0 or self.c_e <= 0:
            raise ValueError("tanh scales must be positive")

    @classmethod
    def from_priority(cls, mu, x_s=1.0, **kw):
        """Weights ``x_s : mu : 1 - mu``; larger mu favours low delay over low energy."""
        if not 0.0 <= mu <= 1.0:
            raise ValueError(f"priority must lie in [0, 1], got {mu}")
        return cls(x_s=x_s, x_d=mu, x_e=1.0 - mu, **kw)


def sub_reward_inverse(value, c):
    """1 - tanh(V / c): 1 at V = 0, decreasing towards 0."""
    if c <= 0:
        raise ValueError("scale must be positive")
    if np.any(np.asarray(value) < 0):
        raise ValueError("value must be non-negative")
    return 1.0 - np.tanh(np.asarray(value, dtype=np.float64) / c)


def hybrid_reward(successes, delay, energy, weights=RewardWeights(), n_preambles=54):
    r_s = successes / n_preambles
    if successes > 0:
        r_d = float(sub_reward_inverse(delay, weights.c_d))
        r_e = float(sub_reward_inverse(energy, weights.c_e))
    else:
        r_d = r_e = weights.idle_value
    return weights.x_s * r_s + weights.x_d * r_d + weights.x_e * r_e


# ---------------------------------------------------------------- state build
def action_features(action):
    if action is None:
        return np.zeros(N_ACTION_FEATURES)
    return np.array([action.acb, action.bo / 8.0, (action.tree_depth - 1) / 2.0,
                     (action.tree_degree - 2) / 4.0])


def reception_features(obs, n_preambles, weights):
    if obs is None:
        return np.zeros(N_RECEPTION_FEATURES)
    F = n_preambles
    return np.array([obs.successes / F, obs.collided / F, obs.idle / F,
                     obs.mean_energy / weights.c_e, obs.mean_delay / weights.c_d])


def observation_features(obs, n_preambles=54, weights=RewardWeights()):
    """Width-9 encoding of one frame: receptions followed by the action in force."""
    return np.concatenate([reception_features(obs, n_preambles, weights),
                           action_features(obs.action)])


def belief_features(prev_action, predicted_backlog, max_backlog, obs=None, n_preambles=54,
                    weights=RewardWeights(), raw_receptions=False):
    """One belief step: the previous joint action and the predicted backlog.

    With ``raw_receptions`` the previous frame's reception features are appended.
    """
    row = np.append(action_features(prev_action), predicted_backlog / max_backlog)
    if raw_receptions:
        row = np.concatenate([row, reception_features(obs, n_preambles, weights)])
    return row


class ObservationWindow:
    """Most recent ``length`` feature rows, oldest first, zero-padded at the start."""

    def __init__(self, length, width):
        self.length = int(length)
        self.width = int(width)
        self.reset()

    def reset(self):
        self._data = np.zeros((self.length, self.width))
        self.filled = 0

    def push(self, row):
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (self.width,):
            raise ValueError(f"expected a row of width {self.width}, got {row.shape}")
        self._data[:-1] = self._data[1:]
        self._data[-1] = row
        self.filled = min(self.filled + 1, self.length)

    def array(self):
        return self._data.copy()


# ----------------------------------------------------------------------- team
class Team:
    """Joint controller: each scheme is driven by a learner or held at a fixed value.

    ``acb`` may be a DDPG agent or any discrete agent over ACB factors, ``bo`` a
    discrete agent over exponents and ``dq`` a discrete agent over
    (depth, degree) pairs.  Non-agent values are used as constants.
    """

    SLOTS = ("acb", "bo", "dq")

    def __init__(self, acb=1.0, bo=0, dq=(1, 2)):
        self.members = {"acb": acb, "bo": bo, "dq": dq}
        for m in self.learners.values():
            if not m.is_initialized:
                m.initialize()

    @property
    def learners(self):
        return {k: v for k, v in self.members.items() if hasattr(v, "act")}

    @property
    def window(self):
        sizes = {m.window for m in self.learners.values()}
        if len(sizes) > 1:
            raise ValueError("all learners must share one window length")
        return sizes.pop() if sizes else None

    def act(self, state, explore=True):
        stored, values = {}, {}
        for slot in self.SLOTS:
            m = self.members[slot]
            if not hasattr(m, "act"):
                values[slot] = m
            elif isinstance(m, DDPGAgent):
                stored[slot] = values[slot] = m.act(state, explore)
            else:
                stored[slot] = m.act_index(state, explore)
                values[slot] = m.actions[stored[slot]]
        depth, degree = values["dq"]
        return ActionSet(acb=float(values["acb"]), bo=int(values["bo"]), tree_depth=int(depth),
                         tree_degree=int(degree)), stored

    def observe(self, state, stored, reward, next_state, done):
        # every learner receives the same shared reward
        losses = {}
        for slot, agent in self.learners.items():
            losses[slot] = agent.observe(state, stored[slot], reward, next_state, done)
        return losses


# --------------------------------------------------------------------- ledger
def episode_seed(seed, index, stream=0):
    """Independent 32-bit episode seed; stream 0 trains, stream 1 evaluates."""
    return int(np.random.SeedSequence([int(seed), int(stream), int(index)]).generate_state(1)[0])


@dataclass
class TrainingLedger:
    rows: list = field(default_factory=list)       # per frame, LEDGER_COLUMNS order
    episodes: list = field(default_factory=list)   # per-episode summary dicts
    curve: list = field(default_factory=list)      # periodic greedy evaluations
    frames_trained: int = 0

    def rewards_by_episode(self):
        return np.array([e["mean_reward"] for e in self.episodes])


@dataclass
class LoopSettings:
    """Knobs shared by both training loops."""

    weights: RewardWeights = RewardWeights()
    window: int = 20
    decoupled: bool = False
    label_mode: str = "mle"        # "mle", "mom" or "genie"
    raw_receptions: bool = False
    record_rows: bool = True

    def __post_init__(self):
        if self.label_mode not in ("mle", "mom", "genie"):
            raise ValueError(f"unknown label mode {self.label_mode!r}")

    def state_width(self):
        if not self.decoupled:
            return N_OBS_FEATURES
        return N_ACTION_FEATURES + 1 + (N_RECEPTION_FEATURES if self.raw_receptions else 0)


def play_episode(env, team, seed, settings, predictor=None, estimator=None, learn=True,
                 explore=True, ledger=None, episode=0):
    """One episode of the joint controller; returns the episode summary.

    In decoupled mode the learners see belief states built from the
    predictor's backlog guesses, and the predictor is trained online on
    labels that become available once each frame has been observed.
    """
    F = env.n_preambles
    w = settings.weights
    env.reset(seed)
    obs_win = ObservationWindow(settings.window, N_OBS_FEATURES)
    if settings.decoupled:
        if predictor is None:
            raise ValueError("decoupled mode needs a predictor")
        if predictor.window != settings.window:
            raise ValueError("predictor and agents must share the window length")
        if settings.label_mode != "genie" and learn and estimator is None:
            raise ValueError("estimated labels need a fitted backlog estimator")
        n_max = predictor.max_backlog
        belief = ObservationWindow(settings.window, settings.state_width())
        pred_in = obs_win.array()
        n_hat = int(predictor.predict(pred_in)[0])
        belief.push(belief_features(None, n_hat, n_max, None, F, w, settings.raw_receptions))
        state = belief.array()
    else:
        state = obs_win.array()

    rewards = []
    while not env.done:
        action, stored = team.act(state, explore)
        obs = env.step(action)
        r = hybrid_reward(obs.successes, obs.mean_delay, obs.mean_energy, w, F)
        if not math.isfinite(r):
            raise TrainingDiverged(f"non-finite reward at frame {obs.frame}")
        rewards.append(r)
        obs_win.push(observation_features(obs, F, w))
        backlog = env.ledger.backlog[-1]
        if settings.decoupled:
            if learn:
                if settings.label_mode == "genie":
                    label = min(backlog, n_max)
                else:
                    u = [[obs.successes, obs.collided, obs.idle]]
                    label = int(estimator.to_backlog(u, action.acb)[0])
                predictor.partial_fit(pred_in, min(label, n_max))
            pred_in = obs_win.array()
            n_hat = int(predictor.predict(pred_in)[0])
            belief.push(belief_features(action, n_hat, n_max, obs, F, w, settings.raw_receptions))
            next_state = belief.array()
        else:
            next_state = obs_win.array()
        done = env.done
        if learn:
            team.observe(state, stored, r, next_state, done)
        if ledger is not None and settings.record_rows:
            ledger.rows.append((obs.frame, obs.successes, obs.collided, obs.idle, obs.mean_energy,
                                obs.mean_delay, backlog, action.acb, action.bo, action.tree_depth,
                                action.tree_degree, r, episode))
        state = next_state

    summary = env.ledger.summary()
    summary.update(episode=episode, seed=seed, mean_reward=float(np.mean(rewards)),
                   total_reward=float(np.sum(rewards)))
    return summary


def evaluate(env, team, settings, n_episodes=20, seed=0, predictor=None):
    """Greedy, non-learning evaluation over evaluation-stream seeds."""
    out = [play_episode(env, team, episode_seed(seed, k, stream=1), settings, predictor=predictor,
                        learn=False, explore=False, episode=k)
           for k in range(n_episodes)]
    keys = ("mean_vs", "mean_delay", "mean_energy", "mean_reward", "dropped")
    agg = {k: float(np.mean([o[k] for o in out])) for k in keys}
    agg["episodes"] = out
    return agg


def _train(env, team, settings, n_episodes, seed, predictor=None, estimator=None,
           eval_every=None, eval_episodes=20, ledger=None):
    ledger = TrainingLedger() if ledger is None else ledger
    start = len(ledger.episodes)
    for k in range(start, start + n_episodes):
        try:
            summary = play_episode(env, team, episode_seed(seed, k), settings, predictor,
                                   estimator, learn=True, explore=True, ledger=ledger, episode=k)
        except NumericError as exc:
            raise TrainingDiverged(f"trail seed {seed}, episode {k}, frame {env.frame}: {exc}") \
                from exc
        ledger.frames_trained += summary["frames"]
        summary["frames_trained"] = ledger.frames_trained
        ledger.episodes.append(summary)
        if eval_every and (k + 1) % eval_every == 0:
            ev = evaluate(env, team, settings, eval_episodes, seed, predictor)
            ledger.curve.append({"frames_trained": ledger.frames_trained,
                                 "mean_vs": ev["mean_vs"], "mean_reward": ev["mean_reward"]})
    return ledger


def run_conventional(env, team, n_episodes, seed=0, settings=None, eval_every=None,
                     eval_episodes=20, ledger=None):
    """Cooperative training where every learner sees the shared observation window."""
    settings = settings or LoopSettings(window=team.window or 20)
    if settings.decoupled:
        raise ValueError("use run_decoupled for the decoupled strategy")
    return _train(env, team, settings, n_episodes, seed, eval_every=eval_every,
                  eval_episodes=eval_episodes, ledger=ledger)


def run_decoupled(env, team, predictor, n_episodes, seed=0, settings=None, estimator=None,
                  eval_every=None, eval_episodes=20, ledger=None):
    """Training on predicted-backlog belief states with an online-trained predictor."""
    settings = settings or LoopSettings(window=team.window or 20, decoupled=True)
    if not settings.decoupled:
        raise ValueError("settings must enable the decoupled strategy")
    if not predictor.is_initialized:
        predictor.initialize()
    if estimator is not None and not hasattr(estimator, "max_backlog"):
        raise ValueError("estimator must expose max_backlog")
    return _train(env, team, settings, n_episodes, seed, predictor, estimator,
                  eval_every=eval_every, eval_episodes=eval_episodes, ledger=ledger)
