"""Mechanics of the three access-control schemes.

* ACB: a device passes the barring check when a uniform draw ``q`` satisfies
  ``q <= beta_acb``.
* BO: a back-off length drawn uniformly from the integers in
  ``[ceil(2**(beta_bo - 1)), 2**beta_bo]``.
* DQ: preambles split into ``degree`` contiguous groups; a collided device's
  group history fixes its slot in the next collision-resolution queue (CRQ).

Preamble and group indices are 1-based here, matching the protocol
description; the simulator converts at its boundary.
"""
import math

import numpy as np

MAX_BACKOFF_EXPONENT = 8


class TreeDepthExceeded(Exception):
    """Raised when a retransmission would fall beyond the DQ tree depth."""


def acb_gate(beta_acb, rng, size=None):
    """True where the device may transmit this frame."""
    if not 0.0 < beta_acb <= 1.0:
        raise ValueError(f"ACB factor must be in (0, 1], got {beta_acb}")
    q = rng.random(size)
    return q <= beta_acb


def backoff_bounds(beta_bo):
    if not (isinstance(beta_bo, (int, np.integer)) and 0 <= beta_bo <= MAX_BACKOFF_EXPONENT):
        raise ValueError(f"back-off exponent must be an integer in [0, 8], got {beta_bo!r}")
    return math.ceil(2.0 ** (beta_bo - 1)), 2 ** int(beta_bo)


def backoff_interval(beta_bo, rng, size=None):
    """Back-off length in frames."""
    low, high = backoff_bounds(beta_bo)
    return rng.integers(low, high + 1, size=size)


def preamble_groups(n_preambles, degree):
    """Split preambles 1..F into ``degree`` contiguous ranges.

    Sizes differ by at most one and the leading groups take the remainder.
    Returns a list of ``range`` objects.
    """
    if degree < 2:
        raise ValueError("tree degree must be >= 2")
    if degree > n_preambles:
        raise ValueError(f"cannot split {n_preambles} preambles into {degree} groups")
    base, extra = divmod(n_preambles, degree)
    groups, start = [], 1
    for k in range(degree):
        size = base + (1 if k < extra else 0)
        groups.append(range(start, start + size))
        start += size
    return groups


def group_lookup(n_preambles, degree):
    """Array mapping 0-based preamble index to its 1-based group ID."""
    out = np.empty(n_preambles, dtype=np.int64)
    for gid, rng_ in enumerate(preamble_groups(n_preambles, degree), start=1):
        out[rng_.start - 1:rng_.stop - 1] = gid
    return out


def dq_position(history, degree):
    """Position of a device in the next CRQ given its group-ID history.

    ``history`` holds the group IDs alpha^1..alpha^{i-1} chosen in CRQs
    1..i-1; the result is the device's 1-based slot in CRQ i::

        mu = alpha^{i-1} + sum_{k=1}^{i-2} degree**(i-1-k) * (alpha^k - 1)
    """
    history = [int(a) for a in history]
    if not history:
        raise ValueError("group history must not be empty")
    if any(a < 1 or a > degree for a in history):
        raise ValueError(f"group IDs must lie in [1, {degree}]")
    i = len(history) + 1
    mu = history[-1]
    for k in range(1, i - 1):
        mu += degree ** (i - 1 - k) * (history[k - 1] - 1)
    return mu


def dq_schedule_frame(collision_frame, crq_index, position, degree, depth=None):
    """Absolute frame in which a device holding ``position`` of CRQ i transmits.

    CRQ 2 starts the frame after the originating collision and every CRQ i
    occupies ``degree**(i-1)`` consecutive frames directly after CRQ i-1.
    Raises TreeDepthExceeded when ``crq_index`` is beyond ``depth``; the device
    then falls back to back-off.
    """
    if depth is not None and crq_index > depth:
        raise TreeDepthExceeded(f"CRQ {crq_index} exceeds tree depth {depth}")
    if crq_index < 2:
        raise ValueError("retransmission queues start at CRQ 2")
    if not 1 <= position <= degree ** (crq_index - 1):
        raise ValueError(f"position {position} outside CRQ {crq_index}")
    offset = sum(degree ** k for k in range(1, crq_index - 1))
    return collision_frame + offset + position
