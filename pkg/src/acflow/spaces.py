"""Discrete velocity and pressure spaces on the unit square.

Velocity fields live in the span of the L2-orthonormal vector sine modes

    e_{j,k,d}(x, y) = 2 sin(j pi x) sin(k pi y) e_d,    1 <= j, k <= N,

which vanish on the boundary.  Pressure fields live in the span of the two
trigonometric families

    psi_cs(j,k) = 2 cos(j pi x) sin(k pi y),
    psi_sc(j,k) = 2 sin(j pi x) cos(k pi y),

which together contain the divergence of every velocity field exactly.  The
two pressure families are not mutually orthogonal, so pressure inner products
go through an explicit Gram matrix carried by :class:`SpectralSpaces`.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, NamedTuple

import numpy as np

HARD_MODE_CAP = 64


class ConfigurationError(ValueError):
    """Invalid cutoff, step size or other solver configuration."""


class VelocityIndex(NamedTuple):
    j: int
    k: int
    d: int  # component, 1 or 2


class PressureIndex(NamedTuple):
    family: str  # "cs" (cos*sin) or "sc" (sin*cos)
    j: int
    k: int


@dataclass(frozen=True)
class VelocityField:
    """Coefficient vector over the orthonormal vector sine basis."""

    coeffs: np.ndarray
    n_modes: int

    def __post_init__(self):
        expected = 2 * self.n_modes * self.n_modes
        if self.coeffs.shape != (expected,):
            raise ConfigurationError(
                f"velocity coefficient vector must have length {expected}, "
                f"got {self.coeffs.shape}"
            )


@dataclass(frozen=True)
class PressureField:
    """Coefficient vector over the cos*sin / sin*cos pressure families."""

    coeffs: np.ndarray
    n_modes: int

    def __post_init__(self):
        expected = 2 * self.n_modes * self.n_modes
        if self.coeffs.shape != (expected,):
            raise ConfigurationError(
                f"pressure coefficient vector must have length {expected}, "
                f"got {self.coeffs.shape}"
            )


@dataclass(frozen=True)
class PressureGram:
    """Gram matrix of the pressure basis with its Cholesky factor."""

    matrix: np.ndarray
    cholesky_factor: np.ndarray


def velocity_indices(n_modes: int) -> list[VelocityIndex]:
    """Deterministic velocity enumeration: d, then j, then k, row-major."""
    return [
        VelocityIndex(j, k, d)
        for d in (1, 2)
        for j in range(1, n_modes + 1)
        for k in range(1, n_modes + 1)
    ]


def pressure_indices(n_modes: int) -> list[PressureIndex]:
    """Deterministic pressure enumeration: cs family first, then sc."""
    return [
        PressureIndex(fam, j, k)
        for fam in ("cs", "sc")
        for j in range(1, n_modes + 1)
        for k in range(1, n_modes + 1)
    ]


def l2_norm(u: VelocityField) -> float:
    """L2 norm; equals the Euclidean coefficient norm (Parseval)."""
    return float(np.linalg.norm(u.coeffs))


def h10_norm(u: VelocityField) -> float:
    """H1_0 seminorm; the stiffness form is diagonal on the sine basis."""
    n = u.n_modes
    stiff = _stiffness_diagonal(n)
    return float(np.sqrt(np.dot(stiff, u.coeffs * u.coeffs)))


def _stiffness_diagonal(n_modes: int) -> np.ndarray:
    return _stiffness_diagonal_cached(int(n_modes))


@lru_cache(maxsize=None)
def _stiffness_diagonal_cached(n_modes: int) -> np.ndarray:
    j = np.arange(1, n_modes + 1, dtype=float)
    jj, kk = np.meshgrid(j, j, indexing="ij")
    lam = (np.pi**2) * (jj**2 + kk**2)
    return np.concatenate([lam.ravel(), lam.ravel()])


def gauss_rule_01(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to (0, 1)."""
    t, w = np.polynomial.legendre.leggauss(order)
    return (t + 1.0) / 2.0, w / 2.0


def _cos_sin_integrals(n_modes: int) -> np.ndarray:
    """Matrix of integrals C[a-1, b-1] = int_0^1 cos(a pi x) sin(b pi x) dx."""
    a = np.arange(1, n_modes + 1, dtype=float)
    A, B = np.meshgrid(a, a, indexing="ij")
    odd = ((A + B) % 2) == 1
    out = np.zeros((n_modes, n_modes))
    out[odd] = 2.0 * B[odd] / (np.pi * (B[odd] ** 2 - A[odd] ** 2))
    return out


class _SynthGrid:
    """Tensor Gauss-Legendre grid with cached 1-D basis value tables."""

    def __init__(self, n_modes: int, order: int):
        self.order = order
        self.x, self.w = gauss_rule_01(order)
        j = np.arange(1, n_modes + 1, dtype=float)
        # tables indexed [mode, node]
        self.sin = np.sin(np.outer(j, np.pi * self.x))
        self.cos = np.cos(np.outer(j, np.pi * self.x))
        self.jcol = j[:, None]
        self.w2d = np.outer(self.w, self.w)


class SpectralSpaces:
    """Velocity/pressure enumerations, Gram data and coefficient operators
    for a fixed mode cutoff.  Immutable after construction and safe to share
    across concurrent path simulations.
    """

    def __init__(self, n_modes: int, hard_cap: int = HARD_MODE_CAP):
        if not isinstance(n_modes, (int, np.integer)) or n_modes < 1:
            raise ConfigurationError("mode cutoff must be a positive integer")
        if n_modes > hard_cap:
            raise ConfigurationError(
                f"mode cutoff {n_modes} exceeds the hard cap {hard_cap}"
            )
        self.n_modes = int(n_modes)
        self.n_velocity = 2 * self.n_modes**2
        self.n_pressure = 2 * self.n_modes**2
        self.velocity_enumeration = velocity_indices(self.n_modes)
        self.pressure_enumeration = pressure_indices(self.n_modes)
        self.stiffness = _stiffness_diagonal(self.n_modes)

        # Divergence coefficient map is diagonal in these enumerations:
        # mode (j,k,1) -> j*pi on cs(j,k); mode (j,k,2) -> k*pi on sc(j,k).
        j = np.arange(1, self.n_modes + 1, dtype=float)
        jj, kk = np.meshgrid(j, j, indexing="ij")
        self.div_diagonal = np.concatenate(
            [(np.pi * jj).ravel(), (np.pi * kk).ravel()]
        )

        gram = self._assemble_gram()
        try:
            chol = np.linalg.cholesky(gram)
        except np.linalg.LinAlgError as exc:
            raise ConfigurationError(
                f"pressure Gram is numerically indefinite at cutoff "
                f"{self.n_modes}; the two pressure families lose linear "
                f"independence in double precision near cutoff 16"
            ) from exc
        self.gram = PressureGram(matrix=gram, cholesky_factor=chol)

        # grad-div coupling K = D^T G D, symmetric positive definite
        self.grad_div = (
            self.div_diagonal[:, None] * gram * self.div_diagonal[None, :]
        )

        self._grids: dict[int, _SynthGrid] = {}
        self._grid_lock = threading.Lock()

    # -- construction helpers -------------------------------------------------

    def _assemble_gram(self) -> np.ndarray:
        n = self.n_modes
        c = _cos_sin_integrals(n)
        # <psi_cs(j,k), psi_sc(j',k')> = 4 * C[j,j'] * C[k',k]
        cross = np.kron(2.0 * c, 2.0 * c.T)
        gram = np.eye(2 * n * n)
        gram[: n * n, n * n :] = cross
        gram[n * n :, : n * n] = cross.T
        return gram

    def grid(self, order: int) -> _SynthGrid:
        with self._grid_lock:
            g = self._grids.get(order)
            if g is None:
                g = _SynthGrid(self.n_modes, order)
                self._grids[order] = g
        return g

    @property
    def default_quad_order(self) -> int:
        return 4 * self.n_modes + 8

    # -- index maps ------------------------------------------------------------

    def velocity_index(self, j: int, k: int, d: int) -> int:
        n = self.n_modes
        if not (1 <= j <= n and 1 <= k <= n and d in (1, 2)):
            raise ConfigurationError(f"velocity mode ({j},{k},{d}) out of range")
        return (d - 1) * n * n + (j - 1) * n + (k - 1)

    def pressure_index(self, family: str, j: int, k: int) -> int:
        n = self.n_modes
        if family not in ("cs", "sc") or not (1 <= j <= n and 1 <= k <= n):
            raise ConfigurationError(f"pressure mode ({family},{j},{k}) out of range")
        fam = 0 if family == "cs" else 1
        return fam * n * n + (j - 1) * n + (k - 1)

    # -- field constructors -----------------------------------------------------

    def zero_velocity(self) -> VelocityField:
        return VelocityField(np.zeros(self.n_velocity), self.n_modes)

    def zero_pressure(self) -> PressureField:
        return PressureField(np.zeros(self.n_pressure), self.n_modes)

    def velocity_from_modes(
        self, entries: Iterable[tuple[int, int, int, float]]
    ) -> VelocityField:
        """Build a field from (j, k, d, amplitude) entries.

        Entries outside the cutoff are dropped, which realises the exact
        L2 projection onto the span.
        """
        coeffs = np.zeros(self.n_velocity)
        for j, k, d, amp in entries:
            if d not in (1, 2):
                raise ConfigurationError(f"velocity component must be 1 or 2, got {d}")
            if 1 <= j <= self.n_modes and 1 <= k <= self.n_modes:
                coeffs[self.velocity_index(j, k, d)] += amp
        return VelocityField(coeffs, self.n_modes)

    def pressure_from_modes(
        self, entries: Iterable[tuple[str, int, int, float]]
    ) -> PressureField:
        coeffs = np.zeros(self.n_pressure)
        for fam, j, k, amp in entries:
            if fam not in ("cs", "sc"):
                raise ConfigurationError(f"pressure family must be cs or sc, got {fam}")
            if 1 <= j <= self.n_modes and 1 <= k <= self.n_modes:
                coeffs[self.pressure_index(fam, j, k)] += amp
        return PressureField(coeffs, self.n_modes)

    # -- norms and pairings ------------------------------------------------------

    def pressure_l2(self, p: PressureField) -> float:
        q = self.gram.matrix @ p.coeffs
        return float(np.sqrt(max(np.dot(p.coeffs, q), 0.0)))

    def pressure_inner(self, p: PressureField, q: PressureField) -> float:
        return float(p.coeffs @ (self.gram.matrix @ q.coeffs))

    def l4_norm(self, u: VelocityField, quad_order: int | None = None) -> float:
        """L4 norm of the vector field by tensor Gauss-Legendre quadrature."""
        if quad_order is None:
            quad_order = self.default_quad_order
        if quad_order < 4 * self.n_modes:
            raise ConfigurationError(
                f"quad_order {quad_order} too small; need at least {4 * self.n_modes}"
            )
        g = self.grid(quad_order)
        v1, v2 = self._component_values(u, g)
        mag2 = v1 * v1 + v2 * v2
        return float(np.sum(mag2 * mag2 * g.w2d) ** 0.25)

    def component_l4_norm(
        self, u: VelocityField, d: int, quad_order: int | None = None
    ) -> float:
        """L4 norm of a single scalar component."""
        if quad_order is None:
            quad_order = self.default_quad_order
        g = self.grid(quad_order)
        vals = self._component_values(u, g)[d - 1]
        return float(np.sum(vals**4 * g.w2d) ** 0.25)

    def divergence(self, u: VelocityField) -> PressureField:
        """Exact coefficient map onto the pressure basis."""
        return PressureField(self.div_diagonal * u.coeffs, self.n_modes)

    def divergence_l2(self, u: VelocityField) -> float:
        return self.pressure_l2(self.divergence(u))

    def gradient_dual(self, p: PressureField) -> np.ndarray:
        """Pairings <grad p, e_i> for every velocity basis function.

        Computed through the duality <grad p, w> = -<p, Div w>; the pressure
        field itself is never differentiated.
        """
        return -self.div_diagonal * (self.gram.matrix @ p.coeffs)

    def pressure_gradient_pairing(self, p: PressureField, i: int) -> float:
        return float(self.gradient_dual(p)[i])

    # -- synthesis ----------------------------------------------------------------

    def _coeff_blocks(self, u: VelocityField) -> np.ndarray:
        n = self.n_modes
        return u.coeffs.reshape(2, n, n)

    def _component_values(self, u: VelocityField, g: _SynthGrid) -> np.ndarray:
        """Values of both components on the tensor grid, shape (2, Q, Q)."""
        c = self._coeff_blocks(u)
        return 2.0 * (g.sin.T @ c @ g.sin)

    def _component_gradients(self, u: VelocityField, g: _SynthGrid) -> np.ndarray:
        """Partial derivatives on the grid, shape (2, 2, Q, Q): [i, d] = d_i u_d."""
        c = self._coeff_blocks(u)
        cj = c * (np.pi * g.jcol[None, :, :])
        ck = c * (np.pi * g.jcol.T[None, :, :])
        d1 = 2.0 * (g.cos.T @ cj @ g.sin)
        d2 = 2.0 * (g.sin.T @ ck @ g.cos)
        return np.stack([d1, d2])

    def synthesize(self, u: VelocityField, points) -> np.ndarray:
        """Pointwise values of the field at (x, y) points in [0, 1]^2."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        j = np.arange(1, self.n_modes + 1, dtype=float)
        sx = np.sin(np.outer(j, np.pi * pts[:, 0]))
        sy = np.sin(np.outer(j, np.pi * pts[:, 1]))
        c = self._coeff_blocks(u)
        vals = 2.0 * np.einsum("jm,djk,km->md", sx, c, sy)
        return vals

    def synthesize_pressure(self, p: PressureField, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.n_modes
        j = np.arange(1, n + 1, dtype=float)
        sx = np.sin(np.outer(j, np.pi * pts[:, 0]))
        cx = np.cos(np.outer(j, np.pi * pts[:, 0]))
        sy = np.sin(np.outer(j, np.pi * pts[:, 1]))
        cy = np.cos(np.outer(j, np.pi * pts[:, 1]))
        a = p.coeffs[: n * n].reshape(n, n)
        b = p.coeffs[n * n :].reshape(n, n)
        vals = 2.0 * (
            np.einsum("jm,jk,km->m", cx, a, sy)
            + np.einsum("jm,jk,km->m", sx, b, cy)
        )
        return vals


def build_spaces(n_modes: int) -> SpectralSpaces:
    """Construct the velocity/pressure enumerations and the pressure Gram.

    The returned object carries ``velocity_enumeration``,
    ``pressure_enumeration`` and ``gram`` together with the coefficient-space
    operators built on them.
    """
    return SpectralSpaces(n_modes)
