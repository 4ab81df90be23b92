"""Semi-implicit Euler-Maruyama time stepping for the coupled system

    du + [ -nu Lap u + ((u.grad) + 0.5 Div u) u + grad p ] dt
        = f dt + sum_k g_k dW_k,
    eps dp + Div u dt = 0.

The linear Stokes part and the pressure coupling are treated backward-Euler
(eliminating the new pressure gives a symmetric positive definite solve in the
velocity coefficients), the stabilised convection term explicitly, and the
noise by Euler-Maruyama.  This reproduces the energy balance

    d[|u|^2 + eps |p|^2] + 2 nu ||u||^2 dt
        = [2 (f, u) + Tr(g^2)] dt + 2 sum_k (g_k, u) dW_k

unconditionally on the linear part; the per-step ledger residual measures the
remaining discretisation error.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import cho_factor, cho_solve

from .forcing import (
    DeterministicForce,
    NoiseModel,
    WienerIncrement,
    empty_noise,
    noise_contribution,
    sample_increment,
)
from .spaces import (
    ConfigurationError,
    PressureField,
    SpectralSpaces,
    VelocityField,
    h10_norm,
    l2_norm,
)

ENERGY_CAP = 1e12


class DivergedPathError(RuntimeError):
    """Numerical blow-up; carries the step index where it happened."""

    def __init__(self, step: int, energy: float):
        super().__init__(f"energy {energy:.3e} exceeded cap at step {step}")
        self.step = step
        self.energy = energy


@dataclass(frozen=True)
class SolverConfig:
    nu: float = 0.1
    eps: float = 0.1
    delta: float = 1.0
    n_modes: int = 8
    dt: float = 1e-3
    horizon: float = 0.5
    moment_p: float = 2.0
    quad_order: int | None = None
    seed: int = 12345

    def __post_init__(self):
        if self.nu <= 0:
            raise ConfigurationError("nu must be positive")
        if self.eps <= 0:
            raise ConfigurationError("eps must be positive")
        if self.delta < 0:
            raise ConfigurationError("delta must be nonnegative")
        if self.n_modes < 1:
            raise ConfigurationError("n_modes must be positive")
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.horizon <= 0:
            raise ConfigurationError("horizon must be positive")
        if self.dt > self.horizon:
            raise ConfigurationError("dt must not exceed the horizon")
        if self.moment_p < 2:
            raise ConfigurationError("moment_p must be at least 2")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigurationError("seed must fit in 64 bits")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.horizon / self.dt)))


@dataclass(frozen=True)
class State:
    u: VelocityField
    p: PressureField
    t: float


@dataclass(frozen=True)
class EnergyLedgerEntry:
    t: float
    energy: float
    energy_change: float
    dissipation_increment: float
    work_increment: float
    ito_increment: float
    martingale_increment: float
    residual: float
    convection_pairing: float = 0.0  # (B(u_m), u_m), zero up to round-off

    def recomputed_residual(self) -> float:
        return (
            self.energy_change
            + self.dissipation_increment
            - self.work_increment
            - self.ito_increment
            - self.martingale_increment
        )


@dataclass
class PathRecord:
    """Per-step time series of one realised trajectory."""

    times: np.ndarray
    l2_u: np.ndarray
    h1_u: np.ndarray
    l4_u: np.ndarray
    l2_p: np.ndarray
    l2_div_u: np.ndarray
    energy: np.ndarray
    residual: np.ndarray
    weight_r: np.ndarray
    ledger: list[EnergyLedgerEntry]
    final_state: State
    seed: int
    path_index: int
    coeff_history: np.ndarray | None = None  # (n_steps + 1, n_velocity) if kept

    CSV_COLUMNS = ("t", "l2_u", "h1_u", "l4_u", "l2_p", "l2_div_u", "energy", "residual")

    def csv_rows(self):
        for i in range(len(self.times)):
            yield (
                self.times[i],
                self.l2_u[i],
                self.h1_u[i],
                self.l4_u[i],
                self.l2_p[i],
                self.l2_div_u[i],
                self.energy[i],
                self.residual[i],
            )


_FACTOR_CACHE: dict[tuple, tuple] = {}
_FACTOR_LOCK = threading.Lock()


def _implicit_factor(spaces: SpectralSpaces, nu: float, eps: float, dt: float):
    key = (spaces.n_modes, float(nu), float(eps), float(dt))
    with _FACTOR_LOCK:
        cached = _FACTOR_CACHE.get(key)
        if cached is None:
            m = (
                np.eye(spaces.n_velocity)
                + dt * nu * np.diag(spaces.stiffness)
                + (dt * dt / eps) * spaces.grad_div
            )
            try:
                cached = cho_factor(m)
            except np.linalg.LinAlgError as exc:  # pragma: no cover
                raise ConfigurationError(
                    "implicit system matrix is not positive definite; "
                    "configuration is corrupt"
                ) from exc
            _FACTOR_CACHE[key] = cached
    return cached


def project_initial(spaces: SpectralSpaces, u_spec, p_spec) -> State:
    """L2 projection of initial data onto the cutoff space at t = 0.

    Specs are either a preset name or a list of mode entries
    (j, k, d, amplitude) for the velocity and (family, j, k, amplitude) for
    the pressure.  Entries beyond the cutoff are dropped (orthogonal
    projection for the velocity sine basis).
    """
    u = _resolve_velocity_spec(spaces, u_spec)
    p = _resolve_pressure_spec(spaces, p_spec)
    return State(u=u, p=p, t=0.0)


VELOCITY_PRESETS = {
    "zero": [],
    "low_mode": [(1, 1, 1, 1.0)],
    "smooth": [(1, 1, 1, 1.0), (2, 1, 2, 0.5), (1, 2, 1, -0.3), (2, 2, 2, 0.2)],
}

PRESSURE_PRESETS = {
    "zero": [],
    "low_mode": [("cs", 1, 1, 0.5)],
}


def _resolve_velocity_spec(spaces: SpectralSpaces, spec) -> VelocityField:
    if spec is None:
        return spaces.zero_velocity()
    if isinstance(spec, VelocityField):
        if spec.n_modes == spaces.n_modes:
            return spec
        entries = []
        for idx, vi in enumerate(_enumerate_velocity(spec.n_modes)):
            entries.append((vi[0], vi[1], vi[2], float(spec.coeffs[idx])))
        return spaces.velocity_from_modes(entries)
    if isinstance(spec, str):
        try:
            return spaces.velocity_from_modes(VELOCITY_PRESETS[spec])
        except KeyError:
            raise ConfigurationError(f"unknown velocity preset {spec!r}") from None
    return spaces.velocity_from_modes(spec)


def _enumerate_velocity(n_modes: int):
    for d in (1, 2):
        for j in range(1, n_modes + 1):
            for k in range(1, n_modes + 1):
                yield (j, k, d)


def _resolve_pressure_spec(spaces: SpectralSpaces, spec) -> PressureField:
    if spec is None:
        return spaces.zero_pressure()
    if isinstance(spec, PressureField):
        if spec.n_modes != spaces.n_modes:
            raise ConfigurationError("pressure spec cutoff mismatch")
        return spec
    if isinstance(spec, str):
        try:
            return spaces.pressure_from_modes(PRESSURE_PRESETS[spec])
        except KeyError:
            raise ConfigurationError(f"unknown pressure preset {spec!r}") from None
    return spaces.pressure_from_modes(spec)


class GalerkinIntegrator:
    """Steps the coupled velocity/pressure system along one sample path."""

    def __init__(
        self,
        spaces: SpectralSpaces,
        config: SolverConfig,
        force: DeterministicForce | None = None,
        noise: NoiseModel | None = None,
        include_convection: bool = True,
    ):
        if config.n_modes != spaces.n_modes:
            raise ConfigurationError("config cutoff does not match the space")
        self.spaces = spaces
        self.config = config
        self.force = force or DeterministicForce(np.zeros(spaces.n_velocity))
        self.noise = noise if noise is not None else empty_noise(spaces)
        self.include_convection = include_convection
        self.quad_order = config.quad_order or spaces.default_quad_order
        self._factor = _implicit_factor(spaces, config.nu, config.eps, config.dt)

    # -- single step -------------------------------------------------------------

    def _convection_dual(self, u: VelocityField) -> np.ndarray:
        if not self.include_convection:
            return np.zeros(self.spaces.n_velocity)
        from .operators import bhat_operator

        return bhat_operator(self.spaces, u, self.quad_order).pairings

    def step(self, state: State, inc: WienerIncrement):
        """One semi-implicit step; returns the new state and ledger entry."""
        cfg = self.config
        sp = self.spaces
        dt = cfg.dt
        u_m = state.u.coeffs
        p_m = state.p.coeffs

        bhat = self._convection_dual(state.u)
        xi = noise_contribution(self.noise, inc)
        grad_dual_m = -sp.div_diagonal * (sp.gram.matrix @ p_m)

        rhs = u_m - dt * grad_dual_m - dt * bhat + dt * self.force.coeffs + xi
        u_p = cho_solve(self._factor, rhs)
        p_p = p_m - (dt / cfg.eps) * (sp.div_diagonal * u_p)

        new_u = VelocityField(u_p, sp.n_modes)
        new_p = PressureField(p_p, sp.n_modes)
        t_new = state.t + dt

        energy_old = l2_norm(state.u) ** 2 + cfg.eps * sp.pressure_l2(state.p) ** 2
        energy_new = l2_norm(new_u) ** 2 + cfg.eps * sp.pressure_l2(new_p) ** 2
        dissipation = 2.0 * cfg.nu * h10_norm(new_u) ** 2 * dt
        work = 2.0 * float(np.dot(self.force.coeffs, u_p)) * dt
        ito = self.noise.trace * dt
        martingale = 2.0 * float(np.dot(xi, u_m))
        residual = (energy_new - energy_old) + dissipation - work - ito - martingale
        entry = EnergyLedgerEntry(
            t=t_new,
            energy=energy_new,
            energy_change=energy_new - energy_old,
            dissipation_increment=dissipation,
            work_increment=work,
            ito_increment=ito,
            martingale_increment=martingale,
            residual=residual,
            convection_pairing=float(np.dot(bhat, u_m)),
        )
        return State(u=new_u, p=new_p, t=t_new), entry

    # -- full path ---------------------------------------------------------------

    def run_path(
        self, initial: State, path_index: int = 0, keep_history: bool = False
    ) -> PathRecord:
        """Integrate from 0 to the horizon; bit-reproducible from
        (seed, path index)."""
        cfg = self.config
        sp = self.spaces
        n_steps = cfg.n_steps
        state = initial

        history = np.zeros((n_steps + 1, sp.n_velocity)) if keep_history else None
        times = np.zeros(n_steps + 1)
        l2_u = np.zeros(n_steps + 1)
        h1_u = np.zeros(n_steps + 1)
        l4_u = np.zeros(n_steps + 1)
        l2_p = np.zeros(n_steps + 1)
        l2_div = np.zeros(n_steps + 1)
        energy = np.zeros(n_steps + 1)
        residual = np.zeros(n_steps + 1)
        ledger: list[EnergyLedgerEntry] = []

        def record(m, st, res):
            times[m] = st.t
            l2_u[m] = l2_norm(st.u)
            h1_u[m] = h10_norm(st.u)
            l4_u[m] = sp.l4_norm(st.u, self.quad_order)
            l2_p[m] = sp.pressure_l2(st.p)
            l2_div[m] = sp.divergence_l2(st.u)
            energy[m] = l2_u[m] ** 2 + cfg.eps * l2_p[m] ** 2
            residual[m] = res
            if history is not None:
                history[m] = st.u.coeffs

        record(0, state, 0.0)
        for m in range(1, n_steps + 1):
            inc = sample_increment(self.noise, cfg.dt, (cfg.seed, path_index, m - 1))
            state, entry = self.step(state, inc)
            ledger.append(entry)
            record(m, state, entry.residual)
            if energy[m] > ENERGY_CAP or not np.isfinite(energy[m]):
                raise DivergedPathError(m, energy[m])

        rate = 27.0 / cfg.nu**3
        weight_r = np.concatenate(
            [[0.0], cumulative_trapezoid(rate * l4_u**4, times)]
        )
        return PathRecord(
            times=times,
            l2_u=l2_u,
            h1_u=h1_u,
            l4_u=l4_u,
            l2_p=l2_p,
            l2_div_u=l2_div,
            energy=energy,
            residual=residual,
            weight_r=weight_r,
            ledger=ledger,
            final_state=state,
            seed=cfg.seed,
            path_index=path_index,
            coeff_history=history,
        )


def energy_residual(
    ledger: list[EnergyLedgerEntry],
    finer_ledger: list[EnergyLedgerEntry] | None = None,
) -> tuple[float, float | None]:
    """Max absolute ledger residual, and the empirical order under
    dt-halving when a run at half the step is supplied."""
    max_abs = max((abs(e.residual) for e in ledger), default=0.0)
    slope = None
    if finer_ledger is not None:
        finer = max((abs(e.residual) for e in finer_ledger), default=0.0)
        if max_abs > 0 and finer > 0:
            slope = float(np.log2(max_abs / finer))
    return max_abs, slope


# -- binary snapshots -------------------------------------------------------------

SNAPSHOT_MAGIC = b"ACSN"
SNAPSHOT_VERSION = 1


def write_snapshot(path, state: State, manifest_digest: str = "0" * 64) -> None:
    """Little-endian layout: magic, u32 version, 64-byte hex digest,
    u32 cutoff, u32 velocity count, u32 pressure count, f64 time,
    velocity coefficients, pressure coefficients."""
    digest = manifest_digest.ljust(64, "0")[:64].encode("ascii")
    n = state.u.n_modes
    u = np.asarray(state.u.coeffs, dtype="<f8")
    p = np.asarray(state.p.coeffs, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<I", SNAPSHOT_VERSION))
        fh.write(digest)
        fh.write(struct.pack("<III", n, u.shape[0], p.shape[0]))
        fh.write(struct.pack("<d", state.t))
        fh.write(u.tobytes())
        fh.write(p.tobytes())


def read_snapshot(path) -> tuple[State, str]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise ConfigurationError(f"not a snapshot file: bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != SNAPSHOT_VERSION:
            raise ConfigurationError(f"unsupported snapshot version {version}")
        digest = fh.read(64).decode("ascii")
        n, nu_len, np_len = struct.unpack("<III", fh.read(12))
        (t,) = struct.unpack("<d", fh.read(8))
        u = np.frombuffer(fh.read(8 * nu_len), dtype="<f8").copy()
        p = np.frombuffer(fh.read(8 * np_len), dtype="<f8").copy()
    state = State(u=VelocityField(u, n), p=PressureField(p, n), t=t)
    return state, digest


__all__ = [
    "DivergedPathError",
    "EnergyLedgerEntry",
    "GalerkinIntegrator",
    "PathRecord",
    "SolverConfig",
    "State",
    "energy_residual",
    "project_initial",
    "read_snapshot",
    "write_snapshot",
]
