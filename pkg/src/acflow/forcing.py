"""Deterministic force and additive trace-class Wiener noise.

Noise increments are generated counter-based: each (seed, path, step) triple
keys its own Philox stream, so a draw is a pure function of that triple and
Monte Carlo scheduling or parallelism cannot change results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spaces import SpectralSpaces


@dataclass(frozen=True)
class DeterministicForce:
    """Time-invariant force as a velocity coefficient vector."""

    coeffs: np.ndarray

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


@dataclass(frozen=True)
class WienerIncrement:
    """One step of Wiener increments together with its provenance triple."""

    dw: np.ndarray
    dt: float
    seed_path: tuple[int, int, int]  # (seed, path index, step index)


@dataclass(frozen=True)
class NoiseModel:
    """Finite family of velocity-space noise modes g_k."""

    modes: np.ndarray  # shape (K, n_velocity)
    trace: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "trace", float(np.sum(self.modes * self.modes)))

    @property
    def n_terms(self) -> int:
        return self.modes.shape[0]


def empty_noise(spaces: SpectralSpaces) -> NoiseModel:
    return NoiseModel(np.zeros((0, spaces.n_velocity)))


def noise_from_modes(spaces: SpectralSpaces, entries) -> NoiseModel:
    """One noise term per (j, k, d, amplitude) entry."""
    rows = []
    for j, k, d, amp in entries:
        f = spaces.velocity_from_modes([(j, k, d, amp)])
        rows.append(f.coeffs)
    if len(rows) > spaces.n_velocity:
        raise ValueError(
            f"{len(rows)} noise terms exceed the {spaces.n_velocity}-dimensional space"
        )
    if not rows:
        return empty_noise(spaces)
    return NoiseModel(np.array(rows))


def default_noise(spaces: SpectralSpaces, trace: float = 0.01, n_terms: int = 8) -> NoiseModel:
    """Lowest-mode noise with |g_k|^2 proportional to (j^2+k^2)^-2,
    normalised to the requested covariance trace."""
    order = sorted(
        range(spaces.n_velocity),
        key=lambda i: (
            spaces.velocity_enumeration[i].j ** 2 + spaces.velocity_enumeration[i].k ** 2,
            i,
        ),
    )
    chosen = order[: min(n_terms, spaces.n_velocity)]
    weights = np.array(
        [
            float(
                spaces.velocity_enumeration[i].j ** 2
                + spaces.velocity_enumeration[i].k ** 2
            )
            ** -2
            for i in chosen
        ]
    )
    if trace < 0:
        raise ValueError("noise trace must be nonnegative")
    amps = np.sqrt(trace * weights / np.sum(weights))
    rows = np.zeros((len(chosen), spaces.n_velocity))
    for row, (i, a) in enumerate(zip(chosen, amps)):
        rows[row, i] = a
    return NoiseModel(rows)


def trace_covariance(noise: NoiseModel) -> float:
    """Covariance trace sum_k |g_k|^2."""
    return noise.trace


def sample_increment(
    noise: NoiseModel, dt: float, seed_path: tuple[int, int, int]
) -> WienerIncrement:
    """Draw dW_k ~ N(0, dt) i.i.d., keyed by (seed, path, step)."""
    if dt <= 0:
        raise ValueError("time step must be positive")
    seed, path, step = seed_path
    if noise.n_terms == 0:
        return WienerIncrement(np.zeros(0), dt, (seed, path, step))
    ss = np.random.SeedSequence(seed, spawn_key=(path, step))
    rng = np.random.Generator(np.random.Philox(ss))
    dw = np.sqrt(dt) * rng.standard_normal(noise.n_terms)
    return WienerIncrement(dw, dt, (seed, path, step))


def noise_contribution(noise: NoiseModel, inc: WienerIncrement) -> np.ndarray:
    """Coefficient increment sum_k g_k dW_k."""
    if inc.dw.shape[0] != noise.n_terms:
        raise ValueError(
            f"increment has {inc.dw.shape[0]} terms, noise model has {noise.n_terms}"
        )
    if noise.n_terms == 0:
        return np.zeros(noise.modes.shape[1])
    return noise.modes.T @ inc.dw
