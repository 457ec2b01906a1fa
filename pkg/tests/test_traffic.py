import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from rachforge.traffic import TrafficProfile, beta_density, frame_rates, sample_activations


def test_profile_validation():
    with pytest.raises(ValueError):
        TrafficProfile(alpha=0)
    with pytest.raises(ValueError):
        TrafficProfile(beta=-1)
    with pytest.raises(ValueError):
        TrafficProfile(total_frames=0)
    with pytest.raises(ValueError):
        TrafficProfile(device_count=-1)


def test_density_vanishes_at_zero():
    assert beta_density(0.0, TrafficProfile()) == 0.0


def test_density_normalised():
    prof = TrafficProfile()
    total, _ = integrate.quad(lambda x: beta_density(x, prof), 0, 20, epsabs=1e-13, epsrel=1e-13)
    assert abs(total - 1) < 1e-9


def test_density_mode_by_grid_search():
    prof = TrafficProfile()
    grid = np.linspace(0, 20, 20001)
    assert grid[np.argmax(beta_density(grid, prof))] == pytest.approx(8.0, abs=1e-3)


def test_density_outside_support():
    with pytest.raises(ValueError):
        beta_density(21.0, TrafficProfile())


def test_uniform_rates():
    mu = frame_rates(TrafficProfile(alpha=1, beta=1, total_frames=20))
    np.testing.assert_allclose(mu, 1 / 20, atol=1e-15)


def test_peak_frame_contains_mode():
    mu = frame_rates(TrafficProfile())
    # frame t covers [t-1, t), so tau=8 sits at the edge of frames 8 and 9;
    # numeric integration of the density picks the heavier one
    quad = [integrate.quad(lambda x: beta_density(x, TrafficProfile()), t - 1, t)[0]
            for t in range(1, 21)]
    np.testing.assert_allclose(mu, quad, atol=1e-10)
    assert np.argmax(mu) + 1 == np.argmax(quad) + 1
    assert np.argmax(mu) + 1 in (8, 9)


def test_symmetric_profile():
    mu = frame_rates(TrafficProfile(alpha=2, beta=2))
    np.testing.assert_allclose(mu, mu[::-1], atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(0.3, 8), beta=st.floats(0.3, 8), frames=st.integers(1, 60))
def test_rates_form_distribution(alpha, beta, frames):
    mu = frame_rates(TrafficProfile(alpha=alpha, beta=beta, total_frames=frames))
    assert mu.shape == (frames,)
    assert np.all((mu >= 0) & (mu <= 1))
    assert abs(mu.sum() - 1) < 1e-9


def test_empty_population():
    sched = sample_activations(TrafficProfile(device_count=0), 0)
    assert sched.activation_frame.size == 0


def test_activation_counts_binomial():
    prof = TrafficProfile(device_count=100_000)
    sched = sample_activations(prof, 7)
    counts = np.bincount(sched.activation_frame, minlength=21)[1:]
    mu = frame_rates(prof)
    n = prof.device_count
    sigma = np.sqrt(n * mu * (1 - mu))
    assert np.all(np.abs(counts - n * mu) <= 4 * sigma + 1e-9)
    chi = stats.chisquare(counts, n * mu / mu.sum())
    assert chi.pvalue > 1e-4


def test_activation_determinism():
    prof = TrafficProfile()
    a = sample_activations(prof, 3).activation_frame
    b = sample_activations(prof, 3).activation_frame
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 1 and a.max() <= 20
