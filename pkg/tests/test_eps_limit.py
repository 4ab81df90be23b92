import numpy as np
import pytest

from acflow import l2_norm
from acflow.eps_limit import (
    EpsSweepPlan,
    epsilon_sweep,
    leray_project,
    leray_projector,
    run_incompressible_reference,
)
from acflow.forcing import default_noise
from acflow.integrator import SolverConfig, project_initial
from acflow.operators import sample_field
from acflow.spaces import ConfigurationError


def test_plan_validation():
    with pytest.raises(ConfigurationError):
        EpsSweepPlan(eps_values=())
    with pytest.raises(ConfigurationError):
        EpsSweepPlan(eps_values=(1e-2, 1e-1))
    with pytest.raises(ConfigurationError):
        EpsSweepPlan(eps_values=(1e-1, -1e-2))
    with pytest.raises(ConfigurationError):
        EpsSweepPlan(n_paths=0)


def test_projector_is_orthogonal_projection(spaces4):
    p = leray_projector(spaces4)
    assert np.abs(p @ p - p).max() <= 1e-10
    assert np.abs(p - p.T).max() <= 1e-10


def test_divergence_constraint_has_trivial_kernel(spaces4):
    # the divergence coefficient map is square and invertible on this basis
    # pair, so the only exactly divergence-free field in the span is zero and
    # the projector annihilates everything
    constraint = spaces4.gram.matrix * spaces4.div_diagonal[None, :]
    s = np.linalg.svd(constraint, compute_uv=False)
    assert s.min() > 1e-12 * s.max()
    assert np.abs(leray_projector(spaces4)).max() <= 1e-12


def test_projector_kills_discrete_gradients(spaces4, rng):
    p = leray_projector(spaces4)
    c = rng.standard_normal(spaces4.n_pressure)
    grad = (spaces4.gram.matrix * spaces4.div_diagonal[None, :]).T @ c
    assert np.linalg.norm(p @ grad) <= 1e-10 * max(np.linalg.norm(grad), 1.0)


def test_projected_field_is_divergence_free_and_idempotent(spaces4, rng):
    u = sample_field(spaces4, rng)
    pu = leray_project(spaces4, u)
    assert spaces4.divergence_l2(pu) <= 1e-10 * max(l2_norm(u), 1.0)
    ppu = leray_project(spaces4, pu)
    assert np.abs(ppu.coeffs - pu.coeffs).max() <= 1e-12


def test_projector_fixes_divergence_free_fields(spaces4):
    # the divergence-free subspace is trivial here, so its only member is
    # the zero field; the projector must fix it exactly
    zero = spaces4.zero_velocity()
    assert np.array_equal(leray_project(spaces4, zero).coeffs, zero.coeffs)


def test_reference_run_stays_divergence_free(spaces4):
    cfg = SolverConfig(n_modes=4, dt=1e-3, horizon=0.05, seed=12)
    noise = default_noise(spaces4, n_terms=4)
    initial = project_initial(spaces4, "smooth", None)
    rec = run_incompressible_reference(spaces4, cfg, None, noise, initial)
    assert np.all(rec.l2_div_u <= 1e-9)
    assert np.all(rec.l2_p == 0.0)


def test_reference_matches_projected_linear_flow(spaces4):
    # with convection disabled the reference is the implicit heat flow
    # restricted to the projector range; on a trivial range it is the zero
    # trajectory and the comparison still runs
    from scipy.linalg import expm

    cfg = SolverConfig(n_modes=4, dt=1e-4, horizon=0.01, seed=3)
    initial = project_initial(spaces4, "low_mode", None)
    rec = run_incompressible_reference(
        spaces4, cfg, None, None, initial, include_convection=False
    )
    p = leray_projector(spaces4)
    a = p @ np.diag(-cfg.nu * spaces4.stiffness) @ p
    exact = expm(a * cfg.horizon) @ (p @ initial.u.coeffs)
    assert np.linalg.norm(rec.final_state.u.coeffs - exact) <= 50 * cfg.dt + 1e-12


def test_reference_reproducible(spaces4):
    cfg = SolverConfig(n_modes=4, dt=1e-3, horizon=0.02, seed=12)
    noise = default_noise(spaces4, n_terms=4)
    initial = project_initial(spaces4, None, None)
    a = run_incompressible_reference(spaces4, cfg, None, noise, initial, path_index=1)
    b = run_incompressible_reference(spaces4, cfg, None, noise, initial, path_index=1)
    assert np.array_equal(a.l2_u, b.l2_u)


def test_single_eps_sweep_row(spaces4):
    plan = EpsSweepPlan(
        eps_values=(1e-2,),
        base=SolverConfig(n_modes=4, dt=1e-3, horizon=0.05, seed=7),
        n_paths=3,
    )
    rep = epsilon_sweep(spaces4, plan)
    assert len(rep.rows) == 1
    assert rep.rows[0].eps == 1e-2
    assert rep.div_rates == [] and rep.diff_rates == []
    assert rep.passed == (rep.sweep_valid and rep.pressure_bounded)


def test_sweep_statistics_decrease(spaces4):
    plan = EpsSweepPlan(
        eps_values=(1e-1, 1e-3),
        base=SolverConfig(n_modes=4, dt=1e-3, horizon=0.1, seed=42),
        n_paths=4,
    )
    rep = epsilon_sweep(spaces4, plan)
    assert rep.sweep_valid
    assert rep.divergence_strictly_decreasing
    assert rep.difference_decreasing
    assert rep.pressure_bounded
    assert rep.rows[0].div_sup > rep.rows[1].div_sup
    assert all(r.excluded_paths == 0 for r in rep.rows)


def test_sweep_noise_coupling_uses_shared_increments(spaces4):
    # the coupled and reference runs must consume identical increments:
    # with a trivial projector the reference is zero, so the gap statistic
    # equals the coupled field's own norm at every step
    plan = EpsSweepPlan(
        eps_values=(1e-2,),
        base=SolverConfig(n_modes=4, dt=1e-3, horizon=0.02, seed=99),
        n_paths=2,
        force_modes=((1, 1, 1, 0.4),),
    )
    rep = epsilon_sweep(spaces4, plan)
    from acflow.forcing import DeterministicForce
    from acflow.integrator import GalerkinIntegrator
    from dataclasses import replace

    cfg = replace(plan.base, eps=1e-2)
    integ = GalerkinIntegrator(
        spaces4,
        cfg,
        force=DeterministicForce(spaces4.velocity_from_modes(plan.force_modes).coeffs),
        noise=default_noise(spaces4, trace=plan.noise_trace),
    )
    recs = [
        integ.run_path(project_initial(spaces4, None, None), path_index=i)
        for i in range(2)
    ]
    sup = max(np.mean([r.l2_u**2 for r in recs], axis=0).max() for _ in (0,))
    assert rep.rows[0].diff_sup == pytest.approx(sup, rel=1e-12)
