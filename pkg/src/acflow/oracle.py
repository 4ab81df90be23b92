"""Brute-force tensor quadrature used by the test suite.

Everything here is evaluated by summing basis modes pointwise on a tensor
Gauss-Legendre grid, one mode at a time.  It deliberately shares no code with
the fast spectral routines (no cached value tables, no batched contractions),
so agreement between the two paths certifies both.  Allowed to be slow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spaces import (
    PressureField,
    VelocityField,
    gauss_rule_01,
    pressure_indices,
    velocity_indices,
)


@dataclass(frozen=True)
class QuadRule:
    """1-D Gauss-Legendre rule on (0, 1)."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int


def make_rule(order: int) -> QuadRule:
    if order < 2:
        raise ValueError("quadrature order must be at least 2")
    x, w = gauss_rule_01(order)
    return QuadRule(nodes=x, weights=w, order=order)


def oracle_integrate(f, rule: QuadRule) -> float:
    """Tensor-product quadrature of a pointwise scalar function f(x, y)."""
    x, y = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
    w2d = np.outer(rule.weights, rule.weights)
    return float(np.sum(np.asarray(f(x, y)) * w2d))


def velocity_values(u: VelocityField, x, y) -> list[np.ndarray]:
    """Mode-by-mode evaluation of both components at the given points."""
    comps = [np.zeros_like(np.asarray(x, dtype=float)) for _ in range(2)]
    for idx, (j, k, d) in enumerate(velocity_indices(u.n_modes)):
        c = u.coeffs[idx]
        if c == 0.0:
            continue
        comps[d - 1] += c * 2.0 * np.sin(j * np.pi * x) * np.sin(k * np.pi * y)
    return comps


def velocity_gradients(u: VelocityField, x, y) -> list[list[np.ndarray]]:
    """grads[i][d] = d_i u_d evaluated pointwise, i, d in {0, 1}."""
    shape = np.asarray(x, dtype=float).shape
    grads = [[np.zeros(shape) for _ in range(2)] for _ in range(2)]
    for idx, (j, k, d) in enumerate(velocity_indices(u.n_modes)):
        c = u.coeffs[idx]
        if c == 0.0:
            continue
        grads[0][d - 1] += (
            c * 2.0 * j * np.pi * np.cos(j * np.pi * x) * np.sin(k * np.pi * y)
        )
        grads[1][d - 1] += (
            c * 2.0 * k * np.pi * np.sin(j * np.pi * x) * np.cos(k * np.pi * y)
        )
    return grads


def pressure_values(p: PressureField, x, y) -> np.ndarray:
    vals = np.zeros_like(np.asarray(x, dtype=float))
    for idx, (fam, j, k) in enumerate(pressure_indices(p.n_modes)):
        c = p.coeffs[idx]
        if c == 0.0:
            continue
        if fam == "cs":
            vals += c * 2.0 * np.cos(j * np.pi * x) * np.sin(k * np.pi * y)
        else:
            vals += c * 2.0 * np.sin(j * np.pi * x) * np.cos(k * np.pi * y)
    return vals


def pressure_mode_values(index, x, y) -> np.ndarray:
    fam, j, k = index
    if fam == "cs":
        return 2.0 * np.cos(j * np.pi * x) * np.sin(k * np.pi * y)
    return 2.0 * np.sin(j * np.pi * x) * np.cos(k * np.pi * y)


def oracle_l2(u: VelocityField, rule: QuadRule) -> float:
    def f(x, y):
        v1, v2 = velocity_values(u, x, y)
        return v1 * v1 + v2 * v2

    return float(np.sqrt(max(oracle_integrate(f, rule), 0.0)))


def oracle_h10(u: VelocityField, rule: QuadRule) -> float:
    def f(x, y):
        g = velocity_gradients(u, x, y)
        return sum(g[i][d] ** 2 for i in range(2) for d in range(2))

    return float(np.sqrt(max(oracle_integrate(f, rule), 0.0)))


def oracle_l4(u: VelocityField, rule: QuadRule) -> float:
    def f(x, y):
        v1, v2 = velocity_values(u, x, y)
        return (v1 * v1 + v2 * v2) ** 2

    return float(max(oracle_integrate(f, rule), 0.0) ** 0.25)


def oracle_component_l4(u: VelocityField, d: int, rule: QuadRule) -> float:
    def f(x, y):
        return velocity_values(u, x, y)[d - 1] ** 4

    return float(max(oracle_integrate(f, rule), 0.0) ** 0.25)


def oracle_velocity_inner(u: VelocityField, v: VelocityField, rule: QuadRule) -> float:
    def f(x, y):
        a1, a2 = velocity_values(u, x, y)
        b1, b2 = velocity_values(v, x, y)
        return a1 * b1 + a2 * b2

    return oracle_integrate(f, rule)


def oracle_gradient_inner(u: VelocityField, v: VelocityField, rule: QuadRule) -> float:
    """int grad u : grad v, the stiffness pairing."""

    def f(x, y):
        gu = velocity_gradients(u, x, y)
        gv = velocity_gradients(v, x, y)
        return sum(gu[i][d] * gv[i][d] for i in range(2) for d in range(2))

    return oracle_integrate(f, rule)


def oracle_pressure_inner(p: PressureField, q: PressureField, rule: QuadRule) -> float:
    def f(x, y):
        return pressure_values(p, x, y) * pressure_values(q, x, y)

    return oracle_integrate(f, rule)


def oracle_divergence(u: VelocityField, x, y) -> np.ndarray:
    g = velocity_gradients(u, x, y)
    return g[0][0] + g[1][1]


def oracle_div_pairing(p: PressureField, w: VelocityField, rule: QuadRule) -> float:
    """int p * Div w, evaluated pointwise."""

    def f(x, y):
        return pressure_values(p, x, y) * oracle_divergence(w, x, y)

    return oracle_integrate(f, rule)


def oracle_trilinear(
    u: VelocityField, v: VelocityField, w: VelocityField, rule: QuadRule
) -> float:
    """Antisymmetrised convection form, term by term:

    0.5 * sum_{i,j} int [u_i (d_i v_j) w_j - u_i (d_i w_j) v_j] dx
    """

    def f(x, y):
        uu = velocity_values(u, x, y)
        vv = velocity_values(v, x, y)
        ww = velocity_values(w, x, y)
        gv = velocity_gradients(v, x, y)
        gw = velocity_gradients(w, x, y)
        total = np.zeros_like(np.asarray(x, dtype=float))
        for i in range(2):
            for jc in range(2):
                total += uu[i] * gv[i][jc] * ww[jc] - uu[i] * gw[i][jc] * vv[jc]
        return 0.5 * total

    return oracle_integrate(f, rule)


def oracle_convection_inner(
    u: VelocityField, v: VelocityField, w: VelocityField, rule: QuadRule
) -> float:
    """Plain convection pairing int ((u . grad) v) . w."""

    def f(x, y):
        uu = velocity_values(u, x, y)
        ww = velocity_values(w, x, y)
        gv = velocity_gradients(v, x, y)
        total = np.zeros_like(np.asarray(x, dtype=float))
        for i in range(2):
            for jc in range(2):
                total += uu[i] * gv[i][jc] * ww[jc]
        return total

    return oracle_integrate(f, rule)


def oracle_weighted_inner(
    u: VelocityField, v: VelocityField, weight: VelocityField, rule: QuadRule
) -> float:
    """int (Div weight) (u . v), used for the integration-by-parts identity."""

    def f(x, y):
        a1, a2 = velocity_values(u, x, y)
        b1, b2 = velocity_values(v, x, y)
        return oracle_divergence(weight, x, y) * (a1 * b1 + a2 * b2)

    return oracle_integrate(f, rule)
