import numpy as np

from ..neural import GRUNetwork, make_optimizer, soft_update, squared_error
from .base import BO_ACTIONS, LinearSchedule, ReplayMemory
from ._common import AgentBase


def dqn_update(batch, q_net, target_net, gamma):
    """Squared TD-error loss and its gradient for the primary network.

    Targets bootstrap from the target network, ``r + gamma * max_a Q'(s', a)``,
    and stop at terminal transitions.
    """
    actions = batch.actions.reshape(-1).astype(np.int64)
    q_next = target_net.forward(batch.next_states)
    target = batch.rewards + gamma * (~batch.dones) * q_next.max(axis=1)
    q = q_net.forward(batch.states)
    idx = np.arange(len(actions))
    pred = q[idx, actions]
    loss, d_pred = squared_error(pred, target)
    grad_out = np.zeros_like(q)
    grad_out[idx, actions] = d_pred
    q_net.backward(grad_out)
    return loss, q_net.grad.copy()


def select_discrete(q_values, epsilon, rng):
    """Epsilon-greedy index; greedy ties resolve to the lowest index."""
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(len(q_values)))
    return int(np.argmax(q_values))


class DQNAgent(AgentBase):
    """Q-learning agent over a discrete action list with a soft-updated target net."""

    def __init__(self, actions=BO_ACTIONS, window=20, n_features=9, hidden=(128, 128), dense=128,
                 gamma=0.9, lr=1e-4, batch_size=32, memory_size=10000, target_rate=0.2,
                 epsilon_start=1.0, epsilon_floor=0.01, epsilon_frames=2000, warmup=500,
                 optimizer="adam", seed=None):
        self.actions = actions
        self.window = window
        self.n_features = n_features
        self.hidden = hidden
        self.dense = dense
        self.gamma = gamma
        self.lr = lr
        self.batch_size = batch_size
        self.memory_size = memory_size
        self.target_rate = target_rate
        self.epsilon_start = epsilon_start
        self.epsilon_floor = epsilon_floor
        self.epsilon_frames = epsilon_frames
        self.warmup = warmup
        self.optimizer = optimizer
        self.seed = seed

    def initialize(self):
        seeds = np.random.SeedSequence(self.seed).spawn(2)
        self.q_ = GRUNetwork(self.n_features, len(self.actions), "linear", tuple(self.hidden),
                             self.dense, seed=seeds[0])
        self.target_ = self.q_.clone()
        self.opt_ = make_optimizer(self.optimizer, self.q_.params.size, self.lr)
        self.memory_ = ReplayMemory(self.memory_size, (self.window, self.n_features))
        self.epsilon_ = LinearSchedule(self.epsilon_start, self.epsilon_floor, self.epsilon_frames)
        self.rng_ = np.random.default_rng(seeds[1])
        self.steps_ = 0
        return self

    @property
    def networks(self):
        return {"q": self.q_, "q_target": self.target_}

    def q_values(self, states):
        return self.q_.forward(np.asarray(states, dtype=np.float64))

    def act_index(self, state, explore=True):
        q = self.q_values(state[None])[0]
        eps = self.epsilon_(self.steps_) if explore else 0.0
        return select_discrete(q, eps, self.rng_)

    def act(self, state, explore=True):
        return self.actions[self.act_index(state, explore)]

    def predict(self, states):
        return [self.actions[i] for i in np.argmax(self.q_values(states), axis=1)]

    def observe(self, state, action_index, reward, next_state, done):
        self.memory_.push(state, action_index, reward, next_state, done)
        self.steps_ += 1
        if len(self.memory_) < max(self.warmup, self.batch_size):
            return None
        return self.update()

    def update(self):
        batch = self.memory_.sample(self.batch_size, self.rng_)
        loss, grad = dqn_update(batch, self.q_, self.target_, self.gamma)
        self._check(loss)
        self.opt_.step(self.q_.params, grad)
        soft_update(self.target_.params, self.q_.params, self.target_rate)
        return loss
