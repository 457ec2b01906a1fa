"""Frame-stepped random-access environment.

Each frame proceeds in scheme order: activations and expired back-offs join
the ACB queue, listening devices pay one synchronisation, ACB-passing devices
and DQ devices due this frame pick a preamble uniformly, singletons succeed,
and collided devices move on to the next DQ queue or to back-off.  Devices
that collide on their ``max_attempts``-th attempt are dropped.
"""
from dataclasses import dataclass, field, asdict
from enum import IntEnum

import numpy as np

from .schemes import MAX_BACKOFF_EXPONENT, backoff_interval, group_lookup
from .traffic import TrafficProfile, sample_activations

MAX_TREE_DEPTH = 3
MAX_TREE_DEGREE = 6


class Phase(IntEnum):
    INACTIVE = 0
    AWAITING_ACB = 1
    DQ_SCHEDULED = 2
    BACKOFF = 3
    SUCCEEDED = 4
    DROPPED = 5


@dataclass(frozen=True)
class ActionSet:
    acb: float = 1.0
    bo: int = 0
    tree_depth: int = 1
    tree_degree: int = 2

    def __post_init__(self):
        if not 0.0 < self.acb <= 1.0:
            raise ValueError(f"ACB factor must be in (0, 1], got {self.acb}")
        if int(self.bo) != self.bo or not 0 <= self.bo <= MAX_BACKOFF_EXPONENT:
            raise ValueError(f"back-off exponent must be an integer in [0, 8], got {self.bo}")
        if int(self.tree_depth) != self.tree_depth or not 1 <= self.tree_depth <= MAX_TREE_DEPTH:
            raise ValueError(f"tree depth must be in [1, {MAX_TREE_DEPTH}], got {self.tree_depth}")
        if (int(self.tree_degree) != self.tree_degree
                or not 2 <= self.tree_degree <= MAX_TREE_DEGREE):
            raise ValueError(f"tree degree must be in [2, {MAX_TREE_DEGREE}], got {self.tree_degree}")
        object.__setattr__(self, "acb", float(self.acb))
        object.__setattr__(self, "bo", int(self.bo))
        object.__setattr__(self, "tree_depth", int(self.tree_depth))
        object.__setattr__(self, "tree_degree", int(self.tree_degree))


@dataclass(frozen=True)
class EnergyModel:
    """Per-step durations (s) and powers (W) of synchronisation and Msg1-4."""
    t_sy: float = 0.65
    t_msg1: float = 0.084
    t_msg2: float = 0.345
    t_msg3: float = 0.08
    t_msg4: float = 0.345
    p_sy: float = 0.09
    p_msg1: float = 0.545
    p_msg2: float = 0.09
    p_msg3: float = 0.545
    p_msg4: float = 0.09

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"{k} must be strictly positive")

    @property
    def listen_energy(self):
        return self.t_sy * self.p_sy

    @property
    def attempt_energy(self):
        return (self.t_msg1 * self.p_msg1 + self.t_msg2 * self.p_msg2
                + self.t_msg3 * self.p_msg3 + self.t_msg4 * self.p_msg4)


@dataclass(frozen=True)
class FrameObservation:
    frame: int
    successes: int
    collided: int
    idle: int
    mean_energy: float
    mean_delay: float
    action: ActionSet


def device_energy(n_sy, n_rach, model=EnergyModel()):
    """Energy (J) of a device that listened ``n_sy`` times and made ``n_rach`` attempts."""
    if np.any(np.asarray(n_sy) < 0) or np.any(np.asarray(n_rach) < 0):
        raise ValueError("counts must be non-negative")
    return n_sy * model.listen_energy + n_rach * model.attempt_energy


def device_delay(arrival_frame, terminal_frame):
    if np.any(np.asarray(terminal_frame) < np.asarray(arrival_frame)):
        raise ValueError("terminal frame precedes arrival")
    return np.asarray(terminal_frame) - np.asarray(arrival_frame) + 1


def frame_kpis(successes, collided, idle, energies, delays):
    """Reception tuple of a frame; energy and delay average over this frame's successes."""
    energies = np.asarray(energies, dtype=np.float64)
    delays = np.asarray(delays, dtype=np.float64)
    if energies.size == 0:
        return successes, collided, idle, 0.0, 0.0
    return successes, collided, idle, float(energies.mean()), float(delays.mean())


@dataclass
class EpisodeLedger:
    frames: list = field(default_factory=list)        # FrameObservation per frame
    backlog: list = field(default_factory=list)       # true contending devices per frame
    frame_energy: list = field(default_factory=list)  # energy spent by all devices per frame
    arrival: np.ndarray = None
    terminal: np.ndarray = None
    outcome: np.ndarray = None                        # Phase.SUCCEEDED or Phase.DROPPED
    delay: np.ndarray = None
    energy: np.ndarray = None

    def summary(self):
        n_frames = len(self.frames)
        vs = np.array([o.successes for o in self.frames], dtype=np.float64)
        n = 0 if self.outcome is None else len(self.outcome)
        return {
            "frames": n_frames,
            "devices": n,
            "succeeded": int(np.sum(self.outcome == Phase.SUCCEEDED)) if n else 0,
            "dropped": int(np.sum(self.outcome == Phase.DROPPED)) if n else 0,
            "mean_vs": float(vs.mean()) if n_frames else 0.0,
            "mean_delay": float(self.delay.mean()) if n else 0.0,
            "mean_energy": float(self.energy.mean()) if n else 0.0,
            "total_energy": float(self.energy.sum()) if n else 0.0,
        }


class RachEnv:
    """Random-access episode over a bursty population of devices.

    Parameters
    ----------
    profile : TrafficProfile
    n_preambles : int
    max_attempts : int
        Attempts after which a still-colliding device is dropped.
    energy : EnergyModel
    frame_cap : int or None
        Last frame of an episode; devices still pending are dropped there.
        Defaults to four times the traffic period.
    """

    def __init__(self, profile=TrafficProfile(), n_preambles=54, max_attempts=10,
                 energy=EnergyModel(), frame_cap=None):
        if n_preambles < MAX_TREE_DEGREE:
            raise ValueError("need at least as many preambles as the largest tree degree")
        self.profile = profile
        self.n_preambles = int(n_preambles)
        self.max_attempts = int(max_attempts)
        self.energy_model = energy
        self.frame_cap = int(frame_cap) if frame_cap else 4 * profile.total_frames
        self._groups = {d: group_lookup(self.n_preambles, d)
                        for d in range(2, MAX_TREE_DEGREE + 1)}
        self.frame = None

    # ------------------------------------------------------------------ state
    def reset(self, seed=None):
        self.rng = np.random.default_rng(seed)
        sched = sample_activations(self.profile, self.rng)
        n = self.profile.device_count
        self.arrival = sched.activation_frame
        self.phase = np.full(n, Phase.INACTIVE, dtype=np.int8)
        self.attempts = np.zeros(n, dtype=np.int64)
        self.n_sy = np.zeros(n, dtype=np.int64)
        self.n_rach = np.zeros(n, dtype=np.int64)
        self.scheduled = np.zeros(n, dtype=np.int64)
        self.terminal = np.zeros(n, dtype=np.int64)
        self.crq = np.zeros(n, dtype=np.int64)
        self.history = np.zeros((n, MAX_TREE_DEPTH), dtype=np.int64)
        self.cohort_frame = np.zeros(n, dtype=np.int64)
        self.cohort_depth = np.ones(n, dtype=np.int64)
        self.cohort_degree = np.full(n, 2, dtype=np.int64)
        self.frame = 0
        self.ledger = EpisodeLedger(arrival=self.arrival)
        return self

    @property
    def done(self):
        if self.frame is None:
            return False
        if self.frame >= self.frame_cap:
            return True
        return self.frame >= self.profile.total_frames and not np.any(self._pending())

    def _pending(self):
        return self.phase < Phase.SUCCEEDED

    def upcoming_backlog(self):
        """Devices that will contend in the next frame (ACB-eligible + DQ-due)."""
        t = self.frame + 1
        p = self.phase
        eligible = ((p == Phase.AWAITING_ACB)
                    | ((p == Phase.INACTIVE) & (self.arrival == t))
                    | ((p == Phase.BACKOFF) & (self.scheduled == t)))
        due = (p == Phase.DQ_SCHEDULED) & (self.scheduled == t)
        return int(eligible.sum() + due.sum())

    def counts(self):
        return {ph.name.lower(): int(np.sum(self.phase == ph)) for ph in Phase}

    # ------------------------------------------------------------------- step
    def step(self, action):
        if self.frame is None:
            raise RuntimeError("reset() must be called before step()")
        if self.done:
            raise RuntimeError("episode already finished")
        if not isinstance(action, ActionSet):
            action = ActionSet(*action)
        t = self.frame + 1
        F = self.n_preambles
        rng = self.rng
        p = self.phase

        p[(p == Phase.INACTIVE) & (self.arrival == t)] = Phase.AWAITING_ACB
        expired = (p == Phase.BACKOFF) & (self.scheduled == t)
        p[expired] = Phase.AWAITING_ACB
        self.crq[expired] = 0

        awaiting = np.flatnonzero(p == Phase.AWAITING_ACB)
        due = np.flatnonzero((p == Phase.DQ_SCHEDULED) & (self.scheduled == t))
        backlog = awaiting.size + due.size
        self.n_sy[awaiting] += 1
        self.n_sy[due] += 1

        passed = awaiting[rng.random(awaiting.size) <= action.acb]
        tx = np.concatenate([passed, due])
        fresh = np.zeros(tx.size, dtype=bool)
        fresh[:passed.size] = True
        picks = rng.integers(0, F, size=tx.size)
        per_preamble = np.bincount(picks, minlength=F)
        v_s = int(np.sum(per_preamble == 1))
        v_c = int(np.sum(per_preamble >= 2))
        v_i = F - v_s - v_c

        self.attempts[tx] += 1
        self.n_rach[tx] += 1
        ok = per_preamble[picks] == 1
        winners = tx[ok]
        p[winners] = Phase.SUCCEEDED
        self.terminal[winners] = t

        lost, lost_picks, lost_fresh = tx[~ok], picks[~ok], fresh[~ok]
        exhausted = self.attempts[lost] >= self.max_attempts
        p[lost[exhausted]] = Phase.DROPPED
        self.terminal[lost[exhausted]] = t
        lost, lost_picks, lost_fresh = lost[~exhausted], lost_picks[~exhausted], lost_fresh[~exhausted]
        self._resolve_collisions(t, action, lost, lost_picks, lost_fresh)

        energies = device_energy(self.n_sy[winners], self.n_rach[winners], self.energy_model)
        delays = device_delay(self.arrival[winners], t)
        kpis = frame_kpis(v_s, v_c, v_i, energies, delays)
        obs = FrameObservation(t, *kpis, action=action)
        self.frame = t
        spent = ((awaiting.size + due.size) * self.energy_model.listen_energy
                 + tx.size * self.energy_model.attempt_energy)
        self.ledger.frames.append(obs)
        self.ledger.backlog.append(backlog)
        self.ledger.frame_energy.append(spent)
        if self.done:
            self._close()
        return obs

    def _resolve_collisions(self, t, action, dev, picks, fresh):
        if dev.size == 0:
            return
        # a fresh collision opens a cohort with the tree broadcast this frame
        new = dev[fresh]
        self.cohort_frame[new] = t
        self.cohort_depth[new] = action.tree_depth
        self.cohort_degree[new] = action.tree_degree
        self.crq[new] = 1

        deg = self.cohort_degree[dev]
        group = np.empty(dev.size, dtype=np.int64)
        for d in np.unique(deg):
            sel = deg == d
            group[sel] = self._groups[int(d)][picks[sel]]
        i = self.crq[dev]                      # queue in which this transmission happened
        self.history[dev, i - 1] = group
        nxt = i + 1
        to_dq = nxt <= self.cohort_depth[dev]

        dq_dev = dev[to_dq]
        if dq_dev.size:
            pos = _positions(self.history[dq_dev], nxt[to_dq] - 1, deg[to_dq])
            self.scheduled[dq_dev] = _schedule(self.cohort_frame[dq_dev], nxt[to_dq], pos, deg[to_dq])
            self.crq[dq_dev] = nxt[to_dq]
            self.phase[dq_dev] = Phase.DQ_SCHEDULED

        bo_dev = dev[~to_dq]
        if bo_dev.size:
            self.scheduled[bo_dev] = t + backoff_interval(action.bo, self.rng, size=bo_dev.size)
            self.phase[bo_dev] = Phase.BACKOFF
            self.crq[bo_dev] = 0

    def _close(self):
        pending = self._pending()
        self.phase[pending] = Phase.DROPPED
        self.terminal[pending] = self.frame
        led = self.ledger
        led.terminal = self.terminal.copy()
        led.outcome = self.phase.copy()
        led.delay = device_delay(self.arrival, self.terminal).astype(np.float64)
        led.energy = device_energy(self.n_sy, self.n_rach, self.energy_model).astype(np.float64)

    def run(self, controller, seed=None):
        """Play a full episode; ``controller(env, last_obs)`` returns an ActionSet."""
        self.reset(seed)
        obs = None
        while not self.done:
            obs = self.step(controller(self, obs))
        return self.ledger


def _positions(history, length, degree):
    """Vectorised CRQ position for histories of the given lengths."""
    idx = np.arange(history.shape[0])
    mu = history[idx, length - 1].copy()
    i = length + 1
    for k in range(1, history.shape[1] + 1):
        use = k <= i - 2
        if not np.any(use):
            continue
        mu[use] += degree[use] ** (i[use] - 1 - k) * (history[use, k - 1] - 1)
    return mu


def _schedule(collision_frame, crq_index, position, degree):
    offset = np.zeros_like(position)
    for k in range(1, MAX_TREE_DEPTH):
        use = k <= crq_index - 2
        offset[use] += degree[use] ** k
    return collision_frame + offset + position
