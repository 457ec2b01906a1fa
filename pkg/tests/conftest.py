import numpy as np
import pytest

from rachforge.rach import ActionSet, RachEnv
from rachforge.traffic import TrafficProfile

# Small networks so learning tests run in seconds to minutes on one core.
DESK = [
    "neural.gru_layers=1",
    "neural.gru_units=16",
    "neural.dense_units=16",
    "neural.learning_rate=1e-3",
    "agents.window=5",
]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def env400():
    return RachEnv(TrafficProfile(device_count=400))


def check_frame_conservation(ledger, n_preambles=54):
    for obs in ledger.frames:
        assert obs.successes + obs.collided + obs.idle == n_preambles
        assert min(obs.successes, obs.collided, obs.idle) >= 0
        if obs.successes == 0:
            assert obs.mean_energy == 0.0 and obs.mean_delay == 0.0


def random_action(rng):
    return ActionSet(acb=float(rng.uniform(0.05, 1)), bo=int(rng.integers(0, 9)),
                     tree_depth=int(rng.integers(1, 4)), tree_degree=int(rng.integers(2, 7)))


def run_random_episode(seed, n=200):
    env = RachEnv(TrafficProfile(device_count=n))
    arng = np.random.default_rng(seed + 10_000)
    env.reset(seed)
    while not env.done:
        env.step(random_action(arng))
    return env
