import numpy as np
import pytest

from acflow.forcing import (
    NoiseModel,
    default_noise,
    empty_noise,
    noise_contribution,
    noise_from_modes,
    sample_increment,
    trace_covariance,
)


def test_trace_examples(spaces3):
    assert trace_covariance(empty_noise(spaces3)) == 0.0

    g = noise_from_modes(spaces3, [(1, 1, 1, 0.5)])
    assert trace_covariance(g) == pytest.approx(0.25, abs=1e-15)

    g2 = noise_from_modes(
        spaces3, [(1, 1, 1, np.sqrt(0.1)), (2, 1, 2, np.sqrt(0.2))]
    )
    assert trace_covariance(g2) == pytest.approx(0.3, abs=1e-14)


def test_default_noise_normalisation(spaces8):
    g = default_noise(spaces8, trace=0.01, n_terms=8)
    assert g.n_terms == 8
    assert g.n_terms <= spaces8.n_velocity
    assert trace_covariance(g) == pytest.approx(0.01, rel=1e-12)


def test_increment_determinism(spaces3):
    g = default_noise(spaces3, trace=0.01, n_terms=4)
    a = sample_increment(g, 1e-3, (42, 7, 19))
    b = sample_increment(g, 1e-3, (42, 7, 19))
    assert np.array_equal(a.dw, b.dw)
    c = sample_increment(g, 1e-3, (42, 7, 20))
    assert not np.array_equal(a.dw, c.dw)


def test_increment_empty_noise(spaces3):
    g = empty_noise(spaces3)
    inc = sample_increment(g, 1e-3, (0, 0, 0))
    assert inc.dw.shape == (0,)
    assert np.all(noise_contribution(g, inc) == 0.0)


def test_increment_rejects_bad_dt(spaces3):
    g = default_noise(spaces3, n_terms=2)
    with pytest.raises(ValueError):
        sample_increment(g, 0.0, (0, 0, 0))


def test_increment_variance_matches_dt(spaces3):
    g = default_noise(spaces3, trace=0.01, n_terms=4)
    dt = 2e-3
    n = 100_000
    draws = np.empty((n, g.n_terms))
    for path in range(n):
        draws[path] = sample_increment(g, dt, (1234, path, 0)).dw
    var = draws.var(axis=0, ddof=1)
    se = dt * np.sqrt(2.0 / (n - 1))
    assert np.all(np.abs(var - dt) <= 3.0 * se)
    mean_se = np.sqrt(dt / n)
    assert np.all(np.abs(draws.mean(axis=0)) <= 3.0 * mean_se)


def test_contribution_examples(spaces3):
    g = noise_from_modes(spaces3, [(1, 1, 1, 0.5)])
    zero = sample_increment(g, 1.0, (0, 0, 0))
    contrib = noise_contribution(g, type(zero)(np.zeros(1), 1.0, (0, 0, 0)))
    assert np.all(contrib == 0.0)

    one = type(zero)(np.ones(1), 1.0, (0, 0, 0))
    assert np.array_equal(noise_contribution(g, one), g.modes[0])


def test_contribution_linearity(spaces3, rng):
    g = default_noise(spaces3, n_terms=4)
    from acflow.forcing import WienerIncrement

    dw1 = rng.standard_normal(4)
    dw2 = rng.standard_normal(4)
    a, b = 1.7, -0.3
    lhs = noise_contribution(g, WienerIncrement(a * dw1 + b * dw2, 1.0, (0, 0, 0)))
    rhs = a * noise_contribution(
        g, WienerIncrement(dw1, 1.0, (0, 0, 0))
    ) + b * noise_contribution(g, WienerIncrement(dw2, 1.0, (0, 0, 0)))
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-15)


def test_contribution_dimension_mismatch(spaces3):
    g = default_noise(spaces3, n_terms=4)
    from acflow.forcing import WienerIncrement

    with pytest.raises(ValueError):
        noise_contribution(g, WienerIncrement(np.zeros(3), 1.0, (0, 0, 0)))


def test_contribution_moments(spaces3):
    g = default_noise(spaces3, trace=0.01, n_terms=4)
    dt = 1e-2
    n = 100_000
    sq = np.empty(n)
    mean = np.zeros(spaces3.n_velocity)
    for path in range(n):
        contrib = noise_contribution(g, sample_increment(g, dt, (777, path, 0)))
        sq[path] = float(np.dot(contrib, contrib))
        mean += contrib
    mean /= n
    expected = trace_covariance(g) * dt
    se = sq.std(ddof=1) / np.sqrt(n)
    assert abs(sq.mean() - expected) <= 3.0 * se
    assert np.abs(mean).max() <= 3.0 * np.sqrt(dt * g.modes.max() ** 2 / n) + 1e-6


def test_modes_live_in_galerkin_space(spaces3):
    g = default_noise(spaces3, n_terms=64)
    assert g.n_terms <= 2 * spaces3.n_modes**2
