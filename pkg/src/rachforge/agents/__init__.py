from .base import (ACB_FLOOR, ACB_GRID, BO_ACTIONS, DQ_ACTIONS, EpisodeTrajectory, LinearSchedule,
                   Minibatch, ReplayMemory, discounted_returns)
from ._common import TrainingDiverged
from .ddpg import DDPGAgent, ddpg_update, select_continuous
from .dqn import DQNAgent, dqn_update, select_discrete
from .pg import ACAgent, PGAgent, ac_update, pg_update
from ..neural import soft_update

__all__ = [
    "ACB_FLOOR", "ACB_GRID", "BO_ACTIONS", "DQ_ACTIONS", "ACAgent", "DDPGAgent", "DQNAgent",
    "EpisodeTrajectory", "LinearSchedule", "Minibatch", "PGAgent", "ReplayMemory",
    "TrainingDiverged", "ac_update", "ddpg_update", "discounted_returns", "dqn_update",
    "pg_update", "select_continuous", "select_discrete", "soft_update",
]
