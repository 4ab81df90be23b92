"""Monte Carlo and pathwise verification of the a priori estimates.

Three checks are driven from simulated path ensembles:

* the exponentially weighted energy bound
    E[|u(t)|^2 + eps |p(t)|^2] e^{-delta t} + 2 nu int E||u||^2 e^{-delta s} ds
      <= initial energy + int [ |f|^2/delta + Tr(g^2) ] e^{-delta s} ds,
* the moment bound for exponents p >= 2, whose constant is not explicit;
  an implied constant is reported instead of asserted,
* the pathwise uniqueness contraction: the squared difference of two
  trajectories driven by identical noise, weighted by
  exp[-(27/nu^3) int ||u||_L4^4], must not increase beyond scheme error.

Monte Carlo paths are independent and may run concurrently; reductions are
done in path-index order so results do not depend on scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .forcing import DeterministicForce, NoiseModel, sample_increment
from .integrator import GalerkinIntegrator, PathRecord, SolverConfig, State
from .spaces import ConfigurationError, SpectralSpaces, VelocityField, l2_norm


@dataclass(frozen=True)
class MomentConfig:
    moment_p: float = 4.0
    delta: float = 1.0
    n_paths: int = 200
    confidence_z: float = 3.0

    def __post_init__(self):
        if self.moment_p < 2:
            raise ConfigurationError("moment exponent must be at least 2")
        if self.delta <= 0:
            raise ConfigurationError("delta must be positive")
        if self.n_paths < 2:
            raise ConfigurationError("need at least 2 Monte Carlo paths")


@dataclass(frozen=True)
class UniquenessWeight:
    """Accumulated weight r(t) = (27/nu^3) int_0^t ||u(s)||_L4^4 ds."""

    samples: np.ndarray

    def __post_init__(self):
        if self.samples[0] != 0.0:
            raise ValueError("weight must start at zero")
        if np.any(np.diff(self.samples) < 0):
            raise ValueError("weight must be non-decreasing")


@dataclass
class EnergyBoundReport:
    delta: float
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    se: np.ndarray
    confidence_z: float
    n_paths: int
    passed: bool
    dissipation_term: float  # mean weighted dissipation over the full horizon

    def margins(self) -> np.ndarray:
        return self.rhs + self.confidence_z * self.se - self.lhs


@dataclass
class MomentBoundReport:
    moment_p: float
    delta: float
    n_paths: int
    lhs: float
    lhs_se: float
    initial_term: float
    denominator: float
    implied_constant: float | None
    dissipation_term: float
    per_path: np.ndarray


@dataclass
class UniquenessReport:
    times: np.ndarray
    weighted_diff: np.ndarray
    weight: UniquenessWeight
    max_increase: float
    tolerance: float
    passed: bool


def simulate_paths(
    spaces: SpectralSpaces,
    config: SolverConfig,
    force: DeterministicForce | None,
    noise: NoiseModel | None,
    initial: State,
    n_paths: int,
    workers: int = 1,
    keep_history: bool = False,
) -> list[PathRecord]:
    """Run n_paths independent trajectories; deterministic in path order."""
    integ = GalerkinIntegrator(spaces, config, force=force, noise=noise)

    def run(i: int) -> PathRecord:
        return integ.run_path(initial, path_index=i, keep_history=keep_history)

    if workers <= 1:
        return [run(i) for i in range(n_paths)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(run, range(n_paths)))


def _weighted_dissipation_series(
    record: PathRecord, delta: float, nu: float, moment_p: float
) -> np.ndarray:
    """Cumulative p nu int ||u||^2 |u|^{p-2} e^{-delta s} ds on the grid."""
    weight = np.exp(-delta * record.times)
    integrand = (
        moment_p * nu * record.h1_u**2 * record.l2_u ** (moment_p - 2.0) * weight
    )
    return np.concatenate([[0.0], cumulative_trapezoid(integrand, record.times)])


def mc_energy_bound(
    spaces: SpectralSpaces,
    config: SolverConfig,
    mc: MomentConfig,
    force: DeterministicForce | None,
    noise: NoiseModel | None,
    initial: State,
    records: list[PathRecord] | None = None,
    workers: int = 1,
) -> EnergyBoundReport:
    """Monte Carlo check of the weighted energy bound at every grid time."""
    force = force or DeterministicForce(np.zeros(spaces.n_velocity))
    if records is None:
        records = simulate_paths(
            spaces, config, force, noise, initial, mc.n_paths, workers=workers
        )
    delta = mc.delta
    times = records[0].times
    weight = np.exp(-delta * times)

    per_path = np.zeros((len(records), len(times)))
    dissipations = np.zeros(len(records))
    for i, rec in enumerate(records):
        energy = rec.l2_u**2 + config.eps * rec.l2_p**2
        diss = _weighted_dissipation_series(rec, delta, config.nu, 2.0)
        per_path[i] = energy * weight + diss
        dissipations[i] = diss[-1]

    lhs = per_path.mean(axis=0)
    se = per_path.std(axis=0, ddof=1) / np.sqrt(len(records)) if len(records) > 1 else np.zeros_like(lhs)

    trace = noise.trace if noise is not None else 0.0
    f_sq = force.l2_norm() ** 2
    initial_energy = (
        l2_norm(initial.u) ** 2 + config.eps * spaces.pressure_l2(initial.p) ** 2
    )
    source = (f_sq / delta + trace) * weight
    rhs = initial_energy + np.concatenate(
        [[0.0], cumulative_trapezoid(source, times)]
    )

    passed = bool(np.all(lhs <= rhs + mc.confidence_z * se + 1e-14))
    return EnergyBoundReport(
        delta=delta,
        times=times,
        lhs=lhs,
        rhs=rhs,
        se=se,
        confidence_z=mc.confidence_z,
        n_paths=len(records),
        passed=passed,
        dissipation_term=float(dissipations.mean()),
    )


def mc_moment_bound(
    spaces: SpectralSpaces,
    config: SolverConfig,
    mc: MomentConfig,
    force: DeterministicForce | None,
    noise: NoiseModel | None,
    initial: State,
    records: list[PathRecord] | None = None,
    workers: int = 1,
) -> MomentBoundReport:
    """Monte Carlo evaluation of the p-th moment bound.

    The bound's constant is not explicit, so the report carries the implied
    constant (lhs minus initial terms, divided by the forcing integral);
    callers assert its finiteness and stability across ensemble sizes, not a
    fixed threshold.
    """
    force = force or DeterministicForce(np.zeros(spaces.n_velocity))
    if records is None:
        records = simulate_paths(
            spaces, config, force, noise, initial, mc.n_paths, workers=workers
        )
    p = mc.moment_p
    delta = mc.delta
    times = records[0].times
    weight = np.exp(-delta * times)

    per_path = np.zeros(len(records))
    dissipations = np.zeros(len(records))
    for i, rec in enumerate(records):
        sup_term = np.max((rec.l2_u**p + config.eps * rec.l2_p**p) * weight)
        diss = _weighted_dissipation_series(rec, delta, config.nu, p)[-1]
        per_path[i] = sup_term + diss
        dissipations[i] = diss

    lhs = float(per_path.mean())
    lhs_se = float(per_path.std(ddof=1) / np.sqrt(len(records)))

    trace = noise.trace if noise is not None else 0.0
    f_p = force.l2_norm() ** p
    initial_term = (
        l2_norm(initial.u) ** p + config.eps * spaces.pressure_l2(initial.p) ** p
    )
    source = (f_p + trace ** (p / 2.0)) * weight
    denominator = float(np.concatenate([[0.0], cumulative_trapezoid(source, times)])[-1])

    implied = (lhs - initial_term) / denominator if denominator > 0 else None
    return MomentBoundReport(
        moment_p=p,
        delta=delta,
        n_paths=len(records),
        lhs=lhs,
        lhs_se=lhs_se,
        initial_term=initial_term,
        denominator=denominator,
        implied_constant=implied,
        dissipation_term=float(dissipations.mean()),
        per_path=per_path,
    )


def pathwise_uniqueness_check(
    spaces: SpectralSpaces,
    config: SolverConfig,
    force: DeterministicForce | None,
    noise: NoiseModel | None,
    init_a: State,
    init_b: State,
    path_index: int = 0,
    c_check: float = 1.0,
) -> UniquenessReport:
    """Drive two trajectories with identical Wiener increments and track the
    weighted squared difference; additive noise cancels in the difference, so
    the weighted series must not increase beyond O(dt) scheme error."""
    integ = GalerkinIntegrator(spaces, config, force=force, noise=noise)
    nse = integ.noise
    n_steps = config.n_steps
    dt = config.dt

    times = np.zeros(n_steps + 1)
    diff = np.zeros(n_steps + 1)
    l4_a = np.zeros(n_steps + 1)

    def diff_energy(sa: State, sb: State) -> float:
        du = sa.u.coeffs - sb.u.coeffs
        dp = sa.p.coeffs - sb.p.coeffs
        pr2 = max(float(dp @ (spaces.gram.matrix @ dp)), 0.0)
        return float(np.dot(du, du)) + config.eps * pr2

    sa, sb = init_a, init_b
    times[0] = 0.0
    diff[0] = diff_energy(sa, sb)
    l4_a[0] = spaces.l4_norm(sa.u, integ.quad_order)
    for m in range(1, n_steps + 1):
        inc = sample_increment(nse, dt, (config.seed, path_index, m - 1))
        sa, _ = integ.step(sa, inc)
        sb, _ = integ.step(sb, inc)
        times[m] = sa.t
        diff[m] = diff_energy(sa, sb)
        l4_a[m] = spaces.l4_norm(sa.u, integ.quad_order)

    rate = 27.0 / config.nu**3
    r = np.concatenate([[0.0], cumulative_trapezoid(rate * l4_a**4, times)])
    weighted = diff * np.exp(-r)
    increases = np.diff(weighted)
    max_increase = float(increases.max()) if increases.size else 0.0
    tol = c_check * dt
    return UniquenessReport(
        times=times,
        weighted_diff=weighted,
        weight=UniquenessWeight(r),
        max_increase=max_increase,
        tolerance=tol,
        passed=max_increase <= tol,
    )


def divergence_norm_series(record: PathRecord) -> np.ndarray:
    """Per-step L2 norm of the velocity divergence along a trajectory."""
    return record.l2_div_u.copy()


def perturbed_state(spaces: SpectralSpaces, base: State, mode, amplitude: float) -> State:
    """Copy of a state with one velocity mode nudged by the given amplitude."""
    j, k, d = mode
    coeffs = base.u.coeffs.copy()
    coeffs[spaces.velocity_index(j, k, d)] += amplitude
    return State(u=VelocityField(coeffs, spaces.n_modes), p=base.p, t=base.t)


__all__ = [
    "EnergyBoundReport",
    "MomentBoundReport",
    "MomentConfig",
    "UniquenessReport",
    "UniquenessWeight",
    "divergence_norm_series",
    "mc_energy_bound",
    "mc_moment_bound",
    "pathwise_uniqueness_check",
    "perturbed_state",
    "simulate_paths",
]
