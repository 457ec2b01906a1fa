"""On-policy agents updated once per finished episode: REINFORCE and actor-critic."""
import numpy as np

from ..neural import GRUNetwork, make_optimizer, squared_error
from .base import ACB_GRID, EpisodeTrajectory
from ._common import AgentBase


def _discount_weights(n, gamma):
    return gamma ** np.arange(n, dtype=np.float64)


def pg_update(states, actions, returns, policy, gamma):
    """REINFORCE loss ``-mean(gamma^i G^i ln pi(A^i|S^i))`` and its gradient."""
    actions = np.asarray(actions, dtype=np.int64)
    coef = _discount_weights(len(actions), gamma) * np.asarray(returns, dtype=np.float64)
    probs = policy.forward(states)
    idx = np.arange(len(actions))
    logp = np.log(np.maximum(probs[idx, actions], 1e-300))
    B = len(actions)
    loss = -float(np.sum(coef * logp) / B)
    onehot = np.zeros_like(probs)
    onehot[idx, actions] = 1.0
    policy.backward(grad_logits=-(coef[:, None] * (onehot - probs)) / B)
    return loss, policy.grad.copy()


def ac_update(states, actions, returns, actor, critic, gamma):
    """Advantage actor-critic losses over one trajectory.

    The critic minimises ``mean(gamma^i (G^i - v(S^i))^2 / 2)``; the actor's
    log-likelihood is weighted by ``gamma^i (G^i - v(S^i))`` with the critic
    value held fixed.  Returns ``(actor_loss, actor_grad, critic_loss, critic_grad)``.
    """
    actions = np.asarray(actions, dtype=np.int64)
    returns = np.asarray(returns, dtype=np.float64)
    disc = _discount_weights(len(actions), gamma)
    v = critic.forward(states)[:, 0]
    critic_loss, d_v = squared_error(v, returns, weights=disc)
    critic.backward(d_v[:, None])
    critic_grad = critic.grad.copy()
    advantage = returns - v
    actor_loss, actor_grad = pg_update(states, actions, advantage, actor, gamma)
    return actor_loss, actor_grad, critic_loss, critic_grad


class _PolicyAgent(AgentBase):
    online = False

    def _sample(self, probs):
        p = probs / probs.sum()
        return int(self.rng_.choice(len(p), p=p))

    def act_index(self, state, explore=True):
        probs = self.policy_.forward(np.asarray(state, dtype=np.float64)[None])[0]
        return self._sample(probs) if explore else int(np.argmax(probs))

    def act(self, state, explore=True):
        return self.actions[self.act_index(state, explore)]

    def predict(self, states):
        probs = self.policy_.forward(np.asarray(states, dtype=np.float64))
        return [self.actions[i] for i in np.argmax(probs, axis=1)]

    def predict_proba(self, states):
        return self.policy_.forward(np.asarray(states, dtype=np.float64))

    def observe(self, state, action_index, reward, next_state, done):
        self.trajectory_.append(state, action_index, reward)
        self.steps_ += 1
        if done:
            return self.end_episode()
        return None

    def end_episode(self):
        if len(self.trajectory_) == 0:
            return None
        traj, self.trajectory_ = self.trajectory_, EpisodeTrajectory()
        return self.update(traj)


class PGAgent(_PolicyAgent):
    """REINFORCE with a softmax GRU policy."""

    def __init__(self, actions=ACB_GRID, window=20, n_features=9, hidden=(128, 128), dense=128,
                 gamma=0.1, lr=1e-4, optimizer="adam", seed=None):
        self.actions = actions
        self.window = window
        self.n_features = n_features
        self.hidden = hidden
        self.dense = dense
        self.gamma = gamma
        self.lr = lr
        self.optimizer = optimizer
        self.seed = seed

    def initialize(self):
        seeds = np.random.SeedSequence(self.seed).spawn(2)
        self.policy_ = GRUNetwork(self.n_features, len(self.actions), "softmax",
                                  tuple(self.hidden), self.dense, seed=seeds[0])
        self.opt_ = make_optimizer(self.optimizer, self.policy_.params.size, self.lr)
        self.trajectory_ = EpisodeTrajectory()
        self.rng_ = np.random.default_rng(seeds[1])
        self.steps_ = 0
        return self

    @property
    def networks(self):
        return {"policy": self.policy_}

    def update(self, trajectory):
        states, actions, rewards = trajectory.arrays()
        loss, grad = pg_update(states, actions, trajectory.returns(self.gamma), self.policy_,
                               self.gamma)
        self._check(loss)
        self.opt_.step(self.policy_.params, grad)
        return loss


class ACAgent(_PolicyAgent):
    """Actor-critic with a softmax actor and a scalar state-value critic."""

    def __init__(self, actions=ACB_GRID, window=20, n_features=9, hidden=(128, 128), dense=128,
                 gamma=0.1, lr=1e-4, critic_lr=None, optimizer="adam", seed=None):
        self.actions = actions
        self.window = window
        self.n_features = n_features
        self.hidden = hidden
        self.dense = dense
        self.gamma = gamma
        self.lr = lr
        self.critic_lr = critic_lr
        self.optimizer = optimizer
        self.seed = seed

    def initialize(self):
        seeds = np.random.SeedSequence(self.seed).spawn(3)
        arch = dict(hidden=tuple(self.hidden), dense=self.dense)
        self.policy_ = GRUNetwork(self.n_features, len(self.actions), "softmax",
                                  seed=seeds[0], **arch)
        self.critic_ = GRUNetwork(self.n_features, 1, "linear", seed=seeds[1], **arch)
        self.opt_ = make_optimizer(self.optimizer, self.policy_.params.size, self.lr)
        self.critic_opt_ = make_optimizer(self.optimizer, self.critic_.params.size,
                                          self.critic_lr or self.lr)
        self.trajectory_ = EpisodeTrajectory()
        self.rng_ = np.random.default_rng(seeds[2])
        self.steps_ = 0
        return self

    @property
    def networks(self):
        return {"policy": self.policy_, "critic": self.critic_}

    def update(self, trajectory):
        states, actions, rewards = trajectory.arrays()
        a_loss, a_grad, c_loss, c_grad = ac_update(states, actions, trajectory.returns(self.gamma),
                                                   self.policy_, self.critic_, self.gamma)
        self._check(a_loss, c_loss)
        self.opt_.step(self.policy_.params, a_grad)
        self.critic_opt_.step(self.critic_.params, c_grad)
        return c_loss
