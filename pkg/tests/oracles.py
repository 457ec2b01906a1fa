"""Independent reference computations used as test oracles."""
import itertools

import numpy as np


def tree_leaf_ordinals(degree, length):
    """Depth-first walk of a ``degree``-ary tree; maps each root-to-leaf path to its 1-based visit order."""
    order = {}

    def walk(prefix):
        if len(prefix) == length:
            order[tuple(prefix)] = len(order) + 1
            return
        for g in range(1, degree + 1):
            walk(prefix + [g])

    walk([])
    return order


def crq_timeline(collision_frame, degree, depth):
    """Frame of every (queue, slot) pair, laying queues 2..depth end to end."""
    frame = collision_frame
    out = {}
    for i in range(2, depth + 1):
        for slot in range(1, degree ** (i - 1) + 1):
            frame += 1
            out[(i, slot)] = frame
    return out


def enumerate_receptions(F, n):
    """Exact P{(V_s, V_c)} for n devices on F preambles by listing all F**n assignments."""
    probs = {}
    total = F ** n
    for picks in itertools.product(range(F), repeat=n):
        counts = np.bincount(picks, minlength=F) if n else np.zeros(F, dtype=int)
        key = (int(np.sum(counts == 1)), int(np.sum(counts >= 2)))
        probs[key] = probs.get(key, 0) + 1
    return {k: v / total for k, v in probs.items()}


def aloha_expected_successes(n, F):
    return n * (1 - 1 / F) ** (n - 1)


def central_difference_error(loss_fn, params, analytic, n_probes=100, h=1e-5, seed=0, floor=1e-7):
    """Worst relative gap between ``analytic`` and central differences over random entries.

    ``loss_fn`` is evaluated with ``params`` perturbed in place; each probe is restored.
    """
    rng = np.random.default_rng(seed)
    idx = rng.choice(params.size, size=min(n_probes, params.size), replace=False)
    worst = 0.0
    for i in idx:
        keep = params[i]
        params[i] = keep + h
        f_plus = loss_fn()
        params[i] = keep - h
        f_minus = loss_fn()
        params[i] = keep
        numeric = (f_plus - f_minus) / (2 * h)
        scale = max(abs(analytic[i]), abs(numeric), floor)
        worst = max(worst, abs(analytic[i] - numeric) / scale)
    return worst


def reception_frequencies(F, n, draws, rng, chunk=100_000):
    """Monte-Carlo counts of (V_s, V_c) for n devices on F preambles."""
    counts = {}
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        picks = rng.integers(0, F, size=(m, n))
        per = np.zeros((m, F), dtype=np.int64)
        np.add.at(per, (np.repeat(np.arange(m), n), picks.ravel()), 1)
        s = (per == 1).sum(axis=1)
        c = (per >= 2).sum(axis=1)
        keys, k = np.unique(s * (F + 1) + c, return_counts=True)
        for key, cnt in zip(keys, k):
            kk = (int(key // (F + 1)), int(key % (F + 1)))
            counts[kk] = counts.get(kk, 0) + int(cnt)
        done += m
    return counts
