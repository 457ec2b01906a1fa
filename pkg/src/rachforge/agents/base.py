"""Replay memory, episode trajectories, schedules and action spaces."""
from dataclasses import dataclass, field

import numpy as np

ACB_GRID = tuple(round(0.05 * k, 2) for k in range(1, 21))
BO_ACTIONS = tuple(range(9))
DQ_ACTIONS = tuple((d, g) for d in (1, 2, 3) for g in range(2, 7))
ACB_FLOOR = 0.01


class ReplayMemory:
    """Fixed-capacity ring buffer of (S, A, R, S', done) transitions."""

    def __init__(self, capacity, state_shape, action_dim=1):
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity,) + tuple(state_shape))
        self.next_states = np.zeros_like(self.states)
        self.actions = np.zeros((self.capacity, action_dim))
        self.rewards = np.zeros(self.capacity)
        self.dones = np.zeros(self.capacity, dtype=bool)
        self.inserted = 0   # total insertions so far
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, state, action, reward, next_state, done):
        i = self.inserted % self.capacity
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = done
        self.inserted += 1
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size, rng):
        if self.size < batch_size:
            raise ValueError(f"only {self.size} transitions stored, need {batch_size}")
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size, rng):
        idx = self.sample_indices(batch_size, rng)
        return Minibatch(self.states[idx], self.actions[idx], self.rewards[idx],
                         self.next_states[idx], self.dones[idx])


@dataclass
class Minibatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray


def discounted_returns(rewards, gamma):
    """G[t] = rewards[t] + gamma * G[t+1], where rewards[t] follows action t."""
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in reversed(range(len(rewards))):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


@dataclass
class EpisodeTrajectory:
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)

    def append(self, state, action, reward):
        self.states.append(np.asarray(state, dtype=np.float64))
        self.actions.append(int(action))
        self.rewards.append(float(reward))

    def __len__(self):
        return len(self.rewards)

    def returns(self, gamma):
        return discounted_returns(self.rewards, gamma)

    def arrays(self):
        return np.stack(self.states), np.array(self.actions, dtype=np.int64), np.array(self.rewards)


class LinearSchedule:
    """Linear ramp from ``start`` to ``end`` over ``duration`` steps, then flat."""

    def __init__(self, start, end, duration):
        self.start = start
        self.end = end
        self.duration = max(int(duration), 1)

    def __call__(self, step):
        frac = min(step / self.duration, 1.0)
        return self.start + frac * (self.end - self.start)
