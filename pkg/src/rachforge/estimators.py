"""Classical backlog estimation and ACB control.

The likelihood table gives P{(V_s, V_c) | n contenders} for ``n`` devices
picking uniformly among F preambles.  It is built by letting devices choose
one after another: the joint count of singleton and collided preambles is a
Markov chain whose ``n``-step distribution is the table row for ``n``.
"""
import os

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .rach import ActionSet


class LikelihoodTable:
    """P{V_s, V_c | N=n} for n in 0..max_backlog, indexed ``table[n, s, c]``."""

    def __init__(self, n_preambles, max_backlog, table):
        self.n_preambles = int(n_preambles)
        self.max_backlog = int(max_backlog)
        self.table = table

    def probability(self, n, successes, collided):
        if successes + 2 * collided > max(n, 0) or successes + collided > self.n_preambles:
            return 0.0
        return float(self.table[n, successes, collided])

    def row(self, n):
        """Distribution for ``n`` devices as {(V_s, V_c, V_i): probability}."""
        F = self.n_preambles
        s, c = np.nonzero(self.table[n])
        return {(int(a), int(b), F - int(a) - int(b)): float(self.table[n, a, b])
                for a, b in zip(s, c)}

    def save(self, path):
        np.savez_compressed(path, n_preambles=self.n_preambles, max_backlog=self.max_backlog,
                            table=self.table)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            return cls(int(data["n_preambles"]), int(data["max_backlog"]), data["table"])


def build_likelihood_table(n_preambles, max_backlog):
    F = int(n_preambles)
    if F < 1 or max_backlog < 0:
        raise ValueError("need F >= 1 and max_backlog >= 0")
    n_c = F + 1
    table = np.zeros((max_backlog + 1, F + 1, n_c))
    s = np.arange(F + 1)[:, None]
    c = np.arange(n_c)[None, :]
    idle = np.clip(F - s - c, 0, None)
    p_idle = idle / F          # new singleton
    p_single = s / F           # singleton turns into a collision
    p_coll = c / F             # joins an existing collision
    cur = np.zeros((F + 1, n_c))
    cur[0, 0] = 1.0
    table[0] = cur
    for n in range(1, max_backlog + 1):
        nxt = cur * p_coll
        nxt[1:, :] += (cur * p_idle)[:-1, :]
        nxt[:-1, 1:] += (cur * p_single)[1:, :-1]
        cur = nxt
        table[n] = cur
    return LikelihoodTable(F, max_backlog, table)


def cached_likelihood_table(n_preambles, max_backlog, cache_dir=None):
    """Build the table, reusing ``cache_dir/likelihood_F{F}_N{N}.npz`` when present."""
    if cache_dir is None:
        return build_likelihood_table(n_preambles, max_backlog)
    path = os.path.join(cache_dir, f"likelihood_F{n_preambles}_N{max_backlog}.npz")
    if os.path.exists(path):
        tab = LikelihoodTable.load(path)
        if tab.n_preambles == n_preambles and tab.max_backlog == max_backlog:
            return tab
    tab = build_likelihood_table(n_preambles, max_backlog)
    os.makedirs(cache_dir, exist_ok=True)
    tab.save(path)
    return tab


def mle_estimate(observation, table):
    """Most likely number of contenders for an observed (V_s, V_c, V_i).

    Ties go to the smaller count.
    """
    s, c, i = (int(v) for v in observation)
    F = table.n_preambles
    if s + c + i != F or min(s, c, i) < 0:
        raise ValueError(f"observation {observation} does not cover {F} preambles")
    if c >= table.table.shape[2]:
        return table.max_backlog
    col = table.table[:, s, c]
    if not col.any():
        return table.max_backlog
    return int(np.argmax(col))


def mom_estimate(idle, n_preambles, max_backlog=600):
    """Invert the expected idle count F(1-1/F)^n for n."""
    F = n_preambles
    if not 0 <= idle <= F:
        raise ValueError("idle count must be in [0, F]")
    if idle == 0:
        return float(max_backlog)
    if F == 1:
        return 0.0
    n = np.log(idle / F) / np.log(1.0 - 1.0 / F)
    return float(np.clip(n, 0.0, max_backlog))


def acb_from_backlog(backlog, n_preambles):
    if backlog < 0:
        raise ValueError("backlog must be non-negative")
    if backlog == 0:
        return 1.0
    return min(1.0, n_preambles / backlog)


def genie_controller(backlog, n_preambles):
    """ACB-only action from the true backlog; back-off and DQ disabled."""
    return ActionSet(acb=acb_from_backlog(backlog, n_preambles), bo=0, tree_depth=1, tree_degree=2)


class _BacklogEstimator(BaseEstimator):
    def _check_obs(self, X):
        X = check_array(X, dtype=np.int64, ensure_min_samples=1)
        if X.shape[1] != 3:
            raise ValueError("observations must be (V_s, V_c, V_i) rows")
        return X

    def to_backlog(self, X, acb):
        """Scale contender estimates by the ACB factor in force when observed."""
        est = self.predict(X)
        acb = np.broadcast_to(np.asarray(acb, dtype=np.float64), est.shape)
        return np.minimum(np.rint(est / acb), self.max_backlog).astype(np.int64)


class MLEBacklogEstimator(_BacklogEstimator):
    """Maximum-likelihood contender count from (V_s, V_c, V_i) observations.

    ``fit`` builds the likelihood table; ``X`` is ignored.
    """

    def __init__(self, n_preambles=54, max_backlog=600, cache_dir=None):
        self.n_preambles = n_preambles
        self.max_backlog = max_backlog
        self.cache_dir = cache_dir

    def fit(self, X=None, y=None):
        self.table_ = cached_likelihood_table(self.n_preambles, self.max_backlog, self.cache_dir)
        # argmax lookup over every reachable (V_s, V_c) pair
        tab = self.table_.table
        best = np.argmax(tab, axis=0)
        best[~tab.any(axis=0)] = self.max_backlog
        self.lookup_ = best
        return self

    def predict(self, X):
        check_is_fitted(self, "lookup_")
        X = self._check_obs(X)
        if np.any(X.sum(axis=1) != self.n_preambles) or np.any(X < 0):
            raise ValueError(f"observations must cover {self.n_preambles} preambles")
        s, c = X[:, 0], X[:, 1]
        out = np.full(len(X), self.max_backlog, dtype=np.int64)
        ok = c < self.lookup_.shape[1]
        out[ok] = self.lookup_[s[ok], c[ok]]
        return out


class MoMBacklogEstimator(_BacklogEstimator):
    """Idle-count inversion; needs no fitting beyond recording its settings."""

    def __init__(self, n_preambles=54, max_backlog=600):
        self.n_preambles = n_preambles
        self.max_backlog = max_backlog

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def predict(self, X):
        check_is_fitted(self, "fitted_")
        X = self._check_obs(X)
        return np.array([mom_estimate(i, self.n_preambles, self.max_backlog) for i in X[:, 2]])


class EstimatedACBController:
    """ACB from the contender estimate of the previous frame.

    The estimate of frame t-1 contenders is divided by the ACB factor used in
    t-1 to recover the backlog, which is then assumed unchanged for frame t.
    """

    def __init__(self, estimator, n_preambles=54):
        self.estimator = estimator
        self.n_preambles = n_preambles

    def __call__(self, env, last_obs):
        if last_obs is None:
            return ActionSet()
        u = [[last_obs.successes, last_obs.collided, last_obs.idle]]
        backlog = float(self.estimator.to_backlog(u, last_obs.action.acb)[0])
        return ActionSet(acb=acb_from_backlog(backlog, self.n_preambles))


class GenieACBController:
    def __init__(self, n_preambles=54):
        self.n_preambles = n_preambles

    def __call__(self, env, last_obs):
        return genie_controller(env.upcoming_backlog(), self.n_preambles)


class FixedController:
    def __init__(self, action=ActionSet()):
        self.action = action

    def __call__(self, env, last_obs):
        return self.action
