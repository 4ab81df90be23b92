"""Stokes operator, stabilised convection form and inequality verifiers.

The convection form is the antisymmetrised pairing

    b(u, v, w) = 0.5 * sum_{i,j} int [u_i (d_i v_j) w_j - u_i (d_i w_j) v_j]

evaluated pseudo-spectrally: fields and gradients are synthesised on a tensor
Gauss-Legendre grid, multiplied pointwise and quadrated.  Because the two
halves of the integrand cancel exactly when v == w, the null pairings
b(u, v, v) = 0 and <B(u), u> = 0 hold to round-off by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spaces import (
    SpectralSpaces,
    VelocityField,
    _stiffness_diagonal,
    h10_norm,
    l2_norm,
)


@dataclass(frozen=True)
class DualVector:
    """Pairings <F, e_i> against every velocity basis function."""

    pairings: np.ndarray
    n_modes: int

    def pair(self, u: VelocityField) -> float:
        return float(np.dot(self.pairings, u.coeffs))


@dataclass(frozen=True)
class MonotonicityReport:
    margin: float
    stokes_term: float
    convection_term: float
    ball_term: float
    rhs: float
    r: float
    in_ball: bool

    def recomputed_margin(self) -> float:
        return self.stokes_term + self.convection_term + self.ball_term - self.rhs


def stokes_apply(u: VelocityField, nu: float) -> DualVector:
    """Viscous Stokes pairing; diagonal on the sine basis."""
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    return DualVector(nu * _stiffness_diagonal(u.n_modes) * u.coeffs, u.n_modes)


class _ConvectionArrays:
    """Grid-sampled data for b(u, v, .) shared across pairings.

    a:   0.5 * w2d * ((u . grad) v)_d               -> pairs with w_d
    b1:  0.5 * w2d * u_1 v_d                        -> pairs with d_1 w_d
    b2:  0.5 * w2d * u_2 v_d                        -> pairs with d_2 w_d
    """

    def __init__(self, spaces: SpectralSpaces, u, v, quad_order):
        g = spaces.grid(quad_order)
        uv = spaces._component_values(u, g)
        vv = spaces._component_values(v, g)
        gv = spaces._component_gradients(v, g)
        adv = uv[0] * gv[0] + uv[1] * gv[1]  # ((u . grad) v)_d
        self.a = 0.5 * g.w2d * adv
        self.b1 = 0.5 * g.w2d * (uv[0] * vv)
        self.b2 = 0.5 * g.w2d * (uv[1] * vv)
        self.grid = g


def _pair_convection(arrays: _ConvectionArrays, w_vals, w_grads) -> float:
    total = 0.0
    for d in range(2):
        total += float(np.sum(arrays.a[d] * w_vals[d]))
        total -= float(np.sum(arrays.b1[d] * w_grads[0][d]))
        total -= float(np.sum(arrays.b2[d] * w_grads[1][d]))
    return total


def trilinear_bhat(
    spaces: SpectralSpaces,
    u: VelocityField,
    v: VelocityField,
    w: VelocityField,
    quad_order: int | None = None,
) -> float:
    """Antisymmetrised convection form b(u, v, w)."""
    if not (u.n_modes == v.n_modes == w.n_modes == spaces.n_modes):
        raise ValueError("fields must share the space cutoff")
    if quad_order is None:
        quad_order = spaces.default_quad_order
    arrays = _ConvectionArrays(spaces, u, v, quad_order)
    g = arrays.grid
    w_vals = spaces._component_values(w, g)
    w_grads = spaces._component_gradients(w, g)
    return _pair_convection(arrays, w_vals, w_grads)


def bhat_operator(
    spaces: SpectralSpaces, u: VelocityField, quad_order: int | None = None
) -> DualVector:
    """Pairings of the stabilised convection operator against every basis
    function, from a single pseudo-spectral pass over u.

    The adjoint transforms below contract the same grid arrays that
    :func:`trilinear_bhat` pairs against a synthesised test field, so the two
    agree to summation round-off.
    """
    if quad_order is None:
        quad_order = spaces.default_quad_order
    arrays = _ConvectionArrays(spaces, u, u, quad_order)
    g = arrays.grid
    n = spaces.n_modes
    jpi = np.pi * np.arange(1, n + 1, dtype=float)
    pair = np.zeros((2, n, n))
    for d in range(2):
        t1 = 2.0 * (g.sin @ arrays.a[d] @ g.sin.T)
        t2 = 2.0 * (g.cos @ arrays.b1[d] @ g.sin.T) * jpi[:, None]
        t3 = 2.0 * (g.sin @ arrays.b2[d] @ g.cos.T) * jpi[None, :]
        pair[d] = t1 - t2 - t3
    return DualVector(pair.reshape(-1), spaces.n_modes)


# -- inequality checks ---------------------------------------------------------


def check_ladyzhenskaya(
    spaces: SpectralSpaces, u: VelocityField, quad_order: int | None = None
) -> list[tuple[float, float]]:
    """Per-component interpolation inequality
    ||phi||_L4^4 <= 2 ||phi||_L2^2 ||grad phi||_L2^2."""
    n = spaces.n_modes
    out = []
    for d in (1, 2):
        lhs = spaces.component_l4_norm(u, d, quad_order) ** 4
        block = u.coeffs.reshape(2, n, n)[d - 1].ravel()
        l2sq = float(np.dot(block, block))
        stiff = spaces.stiffness[: n * n]
        h1sq = float(np.dot(stiff, block * block))
        out.append((lhs, 2.0 * l2sq * h1sq))
    return out


def check_product_l1(
    spaces: SpectralSpaces,
    u: VelocityField,
    v: VelocityField,
    quad_order: int | None = None,
) -> tuple[float, float]:
    """Product bound ||phi psi||_L2^2 <= ||phi d1 phi||_L1 ||psi d2 psi||_L1
    with phi the first component of u and psi the second component of v."""
    if quad_order is None:
        quad_order = spaces.default_quad_order
    g = spaces.grid(quad_order)
    phi = spaces._component_values(u, g)[0]
    psi = spaces._component_values(v, g)[1]
    d1phi = spaces._component_gradients(u, g)[0][0]
    d2psi = spaces._component_gradients(v, g)[1][1]
    lhs = float(np.sum((phi * psi) ** 2 * g.w2d))
    rhs = float(np.sum(np.abs(phi * d1phi) * g.w2d)) * float(
        np.sum(np.abs(psi * d2psi) * g.w2d)
    )
    return lhs, rhs


def check_convection_bound(
    spaces: SpectralSpaces,
    u: VelocityField,
    w: VelocityField,
    quad_order: int | None = None,
) -> tuple[float, float]:
    """Convection bound |<B(u), w>| <= 2 ||u||^{3/2} |u|^{1/2} ||w||_L4."""
    lhs = abs(trilinear_bhat(spaces, u, u, w, quad_order))
    rhs = (
        2.0
        * h10_norm(u) ** 1.5
        * l2_norm(u) ** 0.5
        * spaces.l4_norm(w, quad_order)
    )
    return lhs, rhs


def check_convection_difference(
    spaces: SpectralSpaces,
    u: VelocityField,
    v: VelocityField,
    nu: float,
    quad_order: int | None = None,
) -> tuple[float, float]:
    """Difference bound |<B(u) - B(v), u - v>| <=
    (nu/2) ||u-v||^2 + 27/(2 nu^3) |u-v|^2 ||v||_L4^4."""
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    w = VelocityField(u.coeffs - v.coeffs, u.n_modes)
    lhs = abs(
        trilinear_bhat(spaces, u, u, w, quad_order)
        - trilinear_bhat(spaces, v, v, w, quad_order)
    )
    rhs = 0.5 * nu * h10_norm(w) ** 2 + (27.0 / (2.0 * nu**3)) * l2_norm(
        w
    ) ** 2 * spaces.l4_norm(v, quad_order) ** 4
    return lhs, rhs


def monotonicity_margin(
    spaces: SpectralSpaces,
    u: VelocityField,
    v: VelocityField,
    nu: float,
    r: float,
    quad_order: int | None = None,
) -> MonotonicityReport:
    """Local monotonicity of the Stokes-plus-convection operator on the
    L4 ball of radius r, tested with w = u - v."""
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    if r < 0:
        raise ValueError("ball radius must be nonnegative")
    w = VelocityField(u.coeffs - v.coeffs, u.n_modes)
    stokes_term = nu * h10_norm(w) ** 2
    convection_term = trilinear_bhat(spaces, u, u, w, quad_order) - trilinear_bhat(
        spaces, v, v, w, quad_order
    )
    ball_term = (27.0 * r**4 / (2.0 * nu**3)) * l2_norm(w) ** 2
    rhs = 0.5 * nu * h10_norm(w) ** 2
    in_ball = spaces.l4_norm(v, quad_order) <= r
    margin = stokes_term + convection_term + ball_term - rhs
    return MonotonicityReport(
        margin=margin,
        stokes_term=stokes_term,
        convection_term=convection_term,
        ball_term=ball_term,
        rhs=rhs,
        r=r,
        in_ball=in_ball,
    )


def check_ibp_identity(
    spaces: SpectralSpaces,
    u: VelocityField,
    v: VelocityField,
    w: VelocityField,
    quad_order: int | None = None,
) -> float:
    """Residual of the integration-by-parts identity
    <(u.grad)v, w> + <(Div u) w, v> + <(u.grad)w, v> = 0."""
    if quad_order is None:
        quad_order = spaces.default_quad_order
    g = spaces.grid(quad_order)
    uu = spaces._component_values(u, g)
    vv = spaces._component_values(v, g)
    ww = spaces._component_values(w, g)
    gv = spaces._component_gradients(v, g)
    gw = spaces._component_gradients(w, g)
    gu = spaces._component_gradients(u, g)
    div_u = gu[0][0] + gu[1][1]
    adv_v = uu[0] * gv[0] + uu[1] * gv[1]
    adv_w = uu[0] * gw[0] + uu[1] * gw[1]
    t1 = float(np.sum((adv_v[0] * ww[0] + adv_v[1] * ww[1]) * g.w2d))
    t2 = float(np.sum(div_u * (ww[0] * vv[0] + ww[1] * vv[1]) * g.w2d))
    t3 = float(np.sum((adv_w[0] * vv[0] + adv_w[1] * vv[1]) * g.w2d))
    return t1 + t2 + t3


# -- randomized inequality suite -------------------------------------------------


def sample_field(
    spaces: SpectralSpaces,
    rng: np.random.Generator,
    smoothness: float = 2.0,
    amplitude: float = 1.0,
) -> VelocityField:
    """Random field with coefficients ~ N(0, (j^2+k^2)^-smoothness)."""
    n = spaces.n_modes
    j = np.arange(1, n + 1, dtype=float)
    jj, kk = np.meshgrid(j, j, indexing="ij")
    sigma = (jj**2 + kk**2) ** (-smoothness / 2.0)
    sigma = np.concatenate([sigma.ravel(), sigma.ravel()])
    coeffs = amplitude * sigma * rng.standard_normal(spaces.n_velocity)
    return VelocityField(coeffs, n)


NULL_PAIRING_TOL = 1e-12
MONOTONICITY_TOL = 1e-10


def _scale(*fields: VelocityField) -> float:
    s = 1.0
    for f in fields:
        s *= max(h10_norm(f), 1e-30)
    return s


def run_inequality_suite(
    n_samples: int,
    seed: int,
    cutoffs=(2, 4, 6),
    viscosities=(0.05, 0.1, 1.0),
) -> tuple[list[dict], bool]:
    """Randomized search for violations of the operator inequalities.

    Returns one ledger row per check instance:
    {lemma, seed, lhs, rhs, margin, pass}.  Sample generation is a pure
    function of (seed, sample index) so any violation is reproducible.
    """
    spaces_by_cutoff = {n: SpectralSpaces(n) for n in cutoffs}
    rows: list[dict] = []
    all_pass = True

    def add(lemma, sample_seed, lhs, rhs, ok):
        nonlocal all_pass
        rows.append(
            {
                "lemma": lemma,
                "seed": sample_seed,
                "lhs": lhs,
                "rhs": rhs,
                "margin": rhs - lhs,
                "pass": bool(ok),
            }
        )
        all_pass = all_pass and bool(ok)

    for i in range(n_samples):
        spaces = spaces_by_cutoff[cutoffs[i % len(cutoffs)]]
        nu = viscosities[(i // len(cutoffs)) % len(viscosities)]
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        u = sample_field(spaces, rng)
        v = sample_field(spaces, rng)
        w = sample_field(spaces, rng)

        lhs, rhs = check_product_l1(spaces, u, v)
        add("product_l1", i, lhs, rhs, lhs <= rhs * (1 + 1e-12) + 1e-14)

        for lhs, rhs in check_ladyzhenskaya(spaces, u):
            add("ladyzhenskaya", i, lhs, rhs, lhs <= rhs * (1 + 1e-12) + 1e-14)

        lhs, rhs = check_convection_bound(spaces, u, w)
        add("convection_bound", i, lhs, rhs, lhs <= rhs * (1 + 1e-12) + 1e-14)

        lhs, rhs = check_convection_difference(spaces, u, v, nu)
        add("convection_difference", i, lhs, rhs, lhs <= rhs * (1 + 1e-12) + 1e-14)

        # pull v into the L4 ball of radius r = ||v||_L4 (the tightest ball)
        r = spaces.l4_norm(v)
        report = monotonicity_margin(spaces, u, v, nu, r)
        tol = MONOTONICITY_TOL * _scale(u, v)
        add(
            "local_monotonicity",
            i,
            report.rhs - report.ball_term - report.convection_term,
            report.stokes_term,
            report.in_ball and report.margin >= -tol,
        )

        null_tol = NULL_PAIRING_TOL * _scale(u, u, u)
        val = abs(trilinear_bhat(spaces, u, u, u))
        add("null_self_pairing", i, val, null_tol, val <= null_tol)

        null_tol = NULL_PAIRING_TOL * _scale(u, v, v)
        val = abs(trilinear_bhat(spaces, u, v, v))
        add("null_mixed_pairing", i, val, null_tol, val <= null_tol)

    return rows, all_pass
