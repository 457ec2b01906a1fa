import numpy as np

from ..neural import GRUNetwork, make_optimizer, soft_update, squared_error
from .base import ACB_FLOOR, LinearSchedule, ReplayMemory
from ._common import AgentBase


def ddpg_update(batch, actor, critic, actor_target, critic_target, gamma):
    """Critic TD loss and deterministic policy-gradient actor loss.

    Returns ``(actor_loss, actor_grad, critic_loss, critic_grad)``, both
    gradients taken at the current (pre-update) parameters.  The actor loss is
    ``-mean v(s, pi(s))`` so that descending it ascends the critic.
    """
    a_next = actor_target.forward(batch.next_states)
    v_next = critic_target.forward(batch.next_states, a_next)[:, 0]
    target = batch.rewards + gamma * (~batch.dones) * v_next
    v = critic.forward(batch.states, batch.actions)[:, 0]
    critic_loss, d_v = squared_error(v, target)
    critic.backward(d_v[:, None])
    critic_grad = critic.grad.copy()

    a = actor.forward(batch.states)
    q = critic.forward(batch.states, a)
    actor_loss = -float(q.mean())
    d_a = critic.backward(np.full_like(q, -1.0 / len(q)))
    actor.backward(d_a)
    return actor_loss, actor.grad.copy(), critic_loss, critic_grad


def select_continuous(actor_output, sigma, rng, low=ACB_FLOOR, high=1.0):
    """Actor output plus zero-mean Gaussian noise, clipped to [low, high]."""
    noise = rng.normal(0.0, sigma, size=np.shape(actor_output)) if sigma > 0 else 0.0
    return np.clip(actor_output + noise, low, high)


class DDPGAgent(AgentBase):
    """Continuous ACB-factor agent: sigmoid actor, action-input critic."""

    def __init__(self, window=20, n_features=9, hidden=(128, 128), dense=128, gamma=0.1,
                 lr=1e-4, critic_lr=None, batch_size=32, memory_size=10000, target_rate=0.2,
                 noise_start=0.2, noise_end=0.02, noise_frames=2000, warmup=500,
                 optimizer="adam", seed=None):
        self.window = window
        self.n_features = n_features
        self.hidden = hidden
        self.dense = dense
        self.gamma = gamma
        self.lr = lr
        self.critic_lr = critic_lr
        self.batch_size = batch_size
        self.memory_size = memory_size
        self.target_rate = target_rate
        self.noise_start = noise_start
        self.noise_end = noise_end
        self.noise_frames = noise_frames
        self.warmup = warmup
        self.optimizer = optimizer
        self.seed = seed

    def initialize(self):
        seeds = np.random.SeedSequence(self.seed).spawn(3)
        arch = dict(hidden=tuple(self.hidden), dense=self.dense)
        self.actor_ = GRUNetwork(self.n_features, 1, "sigmoid", seed=seeds[0], **arch)
        self.critic_ = GRUNetwork(self.n_features, 1, "linear", n_aux=1, seed=seeds[1], **arch)
        self.actor_target_ = self.actor_.clone()
        self.critic_target_ = self.critic_.clone()
        self.actor_opt_ = make_optimizer(self.optimizer, self.actor_.params.size, self.lr)
        self.critic_opt_ = make_optimizer(self.optimizer, self.critic_.params.size,
                                          self.critic_lr or self.lr)
        self.memory_ = ReplayMemory(self.memory_size, (self.window, self.n_features))
        self.noise_ = LinearSchedule(self.noise_start, self.noise_end, self.noise_frames)
        self.rng_ = np.random.default_rng(seeds[2])
        self.steps_ = 0
        return self

    @property
    def networks(self):
        return {"actor": self.actor_, "critic": self.critic_,
                "actor_target": self.actor_target_, "critic_target": self.critic_target_}

    def act(self, state, explore=True):
        raw = self.actor_.forward(np.asarray(state, dtype=np.float64)[None])[0, 0]
        sigma = self.noise_(self.steps_) if explore else 0.0
        return float(select_continuous(raw, sigma, self.rng_))

    def predict(self, states):
        raw = self.actor_.forward(np.asarray(states, dtype=np.float64))[:, 0]
        return np.clip(raw, ACB_FLOOR, 1.0)

    def observe(self, state, action, reward, next_state, done):
        self.memory_.push(state, action, reward, next_state, done)
        self.steps_ += 1
        if len(self.memory_) < max(self.warmup, self.batch_size):
            return None
        return self.update()

    def update(self):
        batch = self.memory_.sample(self.batch_size, self.rng_)
        a_loss, a_grad, c_loss, c_grad = ddpg_update(batch, self.actor_, self.critic_,
                                                     self.actor_target_, self.critic_target_,
                                                     self.gamma)
        self._check(a_loss, c_loss)
        self.critic_opt_.step(self.critic_.params, c_grad)
        self.actor_opt_.step(self.actor_.params, a_grad)
        soft_update(self.critic_target_.params, self.critic_.params, self.target_rate)
        soft_update(self.actor_target_.params, self.actor_.params, self.target_rate)
        return c_loss
