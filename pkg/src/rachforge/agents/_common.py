import json
import os

import numpy as np
from sklearn.base import BaseEstimator

from ..neural import GRUNetwork, NumericError


class TrainingDiverged(NumericError):
    pass


class AgentBase(BaseEstimator):
    """Shared plumbing: lazy initialisation, divergence guard, checkpoints."""

    online = True   # updated every frame from replay; on-policy agents override

    @property
    def is_initialized(self):
        return hasattr(self, "steps_")

    def _check(self, *losses):
        for loss in losses:
            if not np.isfinite(loss):
                raise TrainingDiverged(f"{type(self).__name__}: non-finite loss {loss}")

    def end_episode(self):
        return None

    def save(self, directory, extra=None):
        os.makedirs(directory, exist_ok=True)
        for name, net in self.networks.items():
            net.save(os.path.join(directory, f"{name}.weights"), seed=self.seed)
        params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.get_params().items()}
        sidecar = {"algorithm": type(self).__name__, "config": params,
                   "training_step": int(self.steps_)}
        if extra:
            sidecar.update(extra)
        with open(os.path.join(directory, "agent.json"), "w") as fh:
            json.dump(sidecar, fh, indent=2, default=_jsonable)

    def load_weights(self, directory):
        if not self.is_initialized:
            self.initialize()
        for name, net in self.networks.items():
            loaded = GRUNetwork.load(os.path.join(directory, f"{name}.weights"))
            if loaded.params.size != net.params.size or loaded.spec != net.spec:
                raise ValueError(f"checkpoint {name} does not match the agent configuration")
            net.params[...] = loaded.params
        with open(os.path.join(directory, "agent.json")) as fh:
            self.steps_ = json.load(fh).get("training_step", 0)
        return self


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (tuple, np.ndarray)):
        return list(obj)
    raise TypeError(type(obj))
