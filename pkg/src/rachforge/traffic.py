"""Bursty activation traffic: time-limited Beta arrival profile."""
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, betaln


@dataclass(frozen=True)
class TrafficProfile:
    alpha: float = 3.0
    beta: float = 4.0
    total_frames: int = 20
    device_count: int = 400

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        if self.total_frames < 1:
            raise ValueError("total_frames must be >= 1")
        if self.device_count < 0:
            raise ValueError("device_count must be >= 0")


@dataclass(frozen=True)
class ArrivalSchedule:
    per_frame_rate: np.ndarray
    activation_frame: np.ndarray


def beta_density(tau, profile):
    """Activation density p(tau) on [0, T], normalised to integrate to one."""
    T = profile.total_frames
    tau = np.asarray(tau, dtype=np.float64)
    if np.any(tau < 0) or np.any(tau > T):
        raise ValueError(f"tau must lie in [0, {T}]")
    a, b = profile.alpha, profile.beta
    p = tau ** (a - 1) * (T - tau) ** (b - 1) / np.exp((a + b - 1) * np.log(T) + betaln(a, b))
    return p if p.ndim else float(p)


def frame_rates(profile):
    """Probability mass of the profile falling in each frame 1..T."""
    T = profile.total_frames
    edges = betainc(profile.alpha, profile.beta, np.arange(T + 1) / T)
    mu = np.diff(edges)
    return np.clip(mu, 0.0, 1.0)


def sample_activations(profile, rng):
    """Draw one activation frame (1-based) per device from the frame rates."""
    rng = np.random.default_rng(rng)
    mu = frame_rates(profile)
    frames = rng.choice(profile.total_frames, size=profile.device_count, p=mu / mu.sum()) + 1
    return ArrivalSchedule(per_frame_rate=mu, activation_frame=frames.astype(np.int64))
