import numpy as np
import pytest
from numpy.testing import assert_allclose

from analysis.analysis_checks import m0_closed_form
from kinetics.equilibrium_recursion import recursion
from kinetics.integrator_rk45 import integrate
from kinetics.size_distribution import SimulationConfig, SizeDistribution
from transforms.hj_solver import (VISCOSITY_A, HJProblem, HJState, blowup_functional, evolve_F, evolve_G,
                                  max_stable_dt_F, max_stable_dt_G, refine_and_estimate_order,
                                  slope_diagnostics, stationary_residual_G, step_F, step_G, theta_cutoff)
from transforms.transform_bernstein import TransformGrid, transform_F, transform_G, uniform_x_grid, uniform_z_grid
from utils.errors import CFLViolation, SchemeError


def monomer_state(m, form="z", step=0.01, x_max=15.0, **params):
    rho = SizeDistribution.from_sizes({1: m}, 4)
    if form == "z":
        return HJState.initial(transform_G(rho, uniform_z_grid(step)), **params)
    return HJState.initial(transform_F(rho, uniform_x_grid(step, x_max)), **params)


#
# COEFFICIENTS
# ----------------------------------------------------------------------------
@pytest.mark.parametrize('x, a', [(0.0, 0.0), (0.5, 0.5), (1.0, 1.0), (2.0, 1.8125), (3.0, 2.0), (7.0, 2.0)])
def test_viscosity_coefficient_values(x, a):
    assert float(VISCOSITY_A(x)) == pytest.approx(a)


def test_viscosity_coefficient_is_smooth_and_concave():
    assert VISCOSITY_A.verified()


def test_theta_cutoff_floor():
    assert_allclose(theta_cutoff(np.array([0.0, 1.0]), 10), [0.1, np.e - 1.0])


#
# STATE VALIDATION
# ----------------------------------------------------------------------------
def test_state_rejects_band_violation():
    nodes = uniform_z_grid(0.1)
    grid  = TransformGrid("z", nodes, 0.3 * (1.0 - nodes) + 0.01, 0.3)
    with pytest.raises(ValueError, match="band"):
        HJState.initial(grid)


def test_state_rejects_non_uniform_grid():
    nodes = np.array([0.0, 0.1, 0.3, 0.4])
    with pytest.raises(ValueError):
        HJState(grid=TransformGrid("z", nodes, 0.3 * (1.0 - nodes), 0.3), time=0.0, mass_m=0.3)


def test_state_rejects_z_grid_reaching_one():
    nodes = np.linspace(0.0, 1.0, 11)
    with pytest.raises(ValueError):
        HJState(grid=TransformGrid("z", nodes, 0.3 * (1.0 - nodes), 0.3), time=0.0, mass_m=0.3)


#
# Z-FORM
# ----------------------------------------------------------------------------
def test_origin_follows_m0_law():
    run = evolve_G(monomer_state(0.3), 1.0)
    assert run.final.time == 1.0
    assert run.final.values[0] == pytest.approx(m0_closed_form(0.3, 0.3, 1.0), rel=1e-12)


def test_snapshots_at_requested_times():
    run = evolve_G(monomer_state(0.3), 1.0, [0.25, 0.5, 2.0])
    assert run.times == [0.0, 0.25, 0.5, 1.0]
    assert [s.time for s in run.snapshots] == run.times


def test_snapshot_times_accept_arrays():
    run = evolve_G(monomer_state(0.3), 1.0, np.linspace(0.25, 0.75, 3))
    assert run.times == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])


def test_evolution_stays_in_band():
    run = evolve_G(monomer_state(0.3), 2.0)
    assert run.max_band_drift <= 1e-6


def test_step_above_bound_is_rejected():
    state = monomer_state(0.3)
    with pytest.raises(CFLViolation):
        step_G(state, 10.0 * max_stable_dt_G(state))


def test_upwind_sign_change_is_rejected():
    nodes = uniform_z_grid(0.1)
    state = HJState(grid=TransformGrid("z", nodes, 1.0 - 10.0 * nodes, 0.3), time=0.0, mass_m=0.3)
    with pytest.raises(SchemeError):
        step_G(state, 1e-4)


def test_z_form_tracks_transformed_ode():
    start = SizeDistribution.from_sizes({1: 0.3}, 512)
    hj    = evolve_G(HJState.initial(transform_G(start, uniform_z_grid(1e-3))), 1.0).final.grid
    traj  = integrate(start, SimulationConfig(truncation_n=512, t_end=1.0, output_stride=0, output_dt=0.5))
    assert np.max(np.abs(hj.values - transform_G(traj.final, hj.nodes).values)) <= 5e-3 * 0.3


def test_equilibrium_transform_is_stationary():
    table = recursion(0.3, 2048)
    grid  = transform_G(SizeDistribution(table.values), uniform_z_grid(1e-3))
    assert stationary_residual_G(grid, 0.3) <= 1e-4


@pytest.mark.slow
def test_equilibrium_transform_does_not_drift():
    table = recursion(0.3, 2048)
    start = HJState.initial(transform_G(SizeDistribution(table.values), uniform_z_grid(2.5e-4)))
    state = start
    for _ in range(1000):
        state = step_G(state, max_stable_dt_G(state))
    assert np.max(np.abs(state.values - start.values)) <= 1e-5


@pytest.mark.slow
def test_unit_mass_decays():
    final = evolve_G(monomer_state(1.0, step=2e-3), 30.0).final.grid.restrict(0.9)
    assert np.max(np.abs(final.values)) <= 1e-3


#
# MONOTONICITY
# ----------------------------------------------------------------------------
def geometric_state(form):
    rho = SizeDistribution(0.05 * 0.5 ** np.arange(1, 33))
    if form == "z":
        return HJState.initial(transform_G(rho, uniform_z_grid(0.01)))
    return HJState.initial(transform_F(rho, uniform_x_grid(0.02, 5.0)))


@pytest.mark.parametrize('form', ["z", "x"])
def test_step_preserves_order_under_single_node_perturbation(form):
    step, bound = (step_G, max_stable_dt_G) if form == "z" else (step_F, max_stable_dt_F)
    rng   = np.random.default_rng(31)
    upper = geometric_state(form)
    for _ in range(20):
        node   = int(rng.integers(0 if form == "z" else 1, len(upper.grid)))
        values = upper.values.copy()
        values[node] -= 1e-4 * rng.random() * values[node]
        lower  = HJState(grid=upper.grid.with_values(values), time=0.0, mass_m=upper.mass_m)
        dt     = min(bound(upper), bound(lower))
        assert np.all(step(lower, dt).values <= step(upper, dt).values + 1e-15)


#
# REFINEMENT
# ----------------------------------------------------------------------------
def test_transport_order_is_one():
    speed   = 0.8
    problem = HJProblem(mass_m=0.3, initial=lambda z: 0.3 * (1.0 - z) ** 2, t_final=0.5, kind="transport",
                        exact=lambda z, t: 0.3 * (1.0 - z * np.exp(-speed * t)) ** 2)
    estimate = refine_and_estimate_order(problem, [0.02, 0.01, 0.005])
    assert not estimate.degenerate
    assert 0.7 <= estimate.order <= 1.3
    assert estimate.errors[0] > estimate.errors[1] > estimate.errors[2]


def test_constant_data_is_degenerate():
    problem  = HJProblem(mass_m=0.3, initial=lambda z: np.full(z.shape, 0.2), t_final=0.5, kind="transport")
    estimate = refine_and_estimate_order(problem, [0.02, 0.01, 0.005])
    assert estimate.degenerate
    assert estimate.order is None


def test_hj_refinement_order():
    problem  = HJProblem(mass_m=0.3, initial=lambda z: 0.3 * (1.0 - z), t_final=1.0)
    estimate = refine_and_estimate_order(problem, [4e-3, 2e-3, 1e-3])
    assert estimate.order is not None and 0.7 <= estimate.order <= 1.3


@pytest.mark.parametrize('sizes', [[0.02, 0.01], [0.02, 0.015, 0.01]])
def test_refinement_rejects_grid_sizes(sizes):
    problem = HJProblem(mass_m=0.3, initial=lambda z: 0.3 * (1.0 - z), t_final=0.1)
    with pytest.raises(ValueError):
        refine_and_estimate_order(problem, sizes)


#
# X-FORM
# ----------------------------------------------------------------------------
def test_x_form_keeps_shape():
    run = evolve_F(monomer_state(0.3, form="x", step=0.01), 1.0, [0.5])
    for snap in run.snapshots:
        assert snap.values[0] == 0.0
        diag = slope_diagnostics(snap.grid)
        assert diag.min_fx >= -1e-6
        assert diag.max_fx <= 0.3 + 1e-6
        assert diag.max_fxx <= 1e-6


def test_larger_cutoff_lowers_solution():
    coarse = monomer_state(0.3, form="x", step=0.01, x_max=5.0, cutoff_n=10)
    fine   = monomer_state(0.3, form="x", step=0.01, x_max=5.0, cutoff_n=20)
    for _ in range(50):
        dt     = min(max_stable_dt_F(coarse), max_stable_dt_F(fine))
        coarse = step_F(coarse, dt)
        fine   = step_F(fine, dt)
    assert np.all(fine.values <= coarse.values + 1e-12)
    assert np.max(coarse.values - fine.values) > 0.0


def test_viscosity_limits_step():
    state = monomer_state(0.3, form="x", step=0.01, x_max=5.0, viscosity_eps=0.5)
    assert max_stable_dt_F(state) <= 0.5 * 0.01 ** 2 / (0.5 * 2.0) * (1.0 + 1e-12)


def test_zero_data_grows_monotonically_in_time():
    nodes = uniform_x_grid(0.02, 5.0)
    state = HJState.initial(TransformGrid("x", nodes, np.zeros(nodes.size), 0.3))
    dt    = max_stable_dt_F(state)
    for _ in range(100):
        after = step_F(state, dt)
        assert np.all(after.values >= state.values - 1e-15)
        state = after
    assert state.values[-1] > 0.0


def test_vanishing_viscosity_converges_to_inviscid_solution():
    dt, steps = 0.005, 200
    finals = {}
    for eps in (0.0, 0.01, 0.02, 0.04):
        state = monomer_state(0.3, form="x", step=0.05, viscosity_eps=eps)
        for _ in range(steps):
            state = step_F(state, dt)
        finals[eps] = state.values
    gaps = [np.max(np.abs(finals[eps] - finals[0.0])) for eps in (0.04, 0.02, 0.01)]
    assert gaps[0] > gaps[1] > gaps[2] > 0.0
    assert 1.5 <= gaps[0] / gaps[1] <= 2.5
    assert 1.5 <= gaps[1] / gaps[2] <= 2.5


#
# BLOW-UP FUNCTIONAL
# ----------------------------------------------------------------------------
def test_blowup_prediction_for_mass_two():
    report = blowup_functional([monomer_state(2.0, form="x", step=0.01)])
    assert report.sigma == 0.5
    assert report.delta == pytest.approx(-0.375)
    assert report.phi[0] == pytest.approx(1.5 - 0.5 * np.log(4.0), abs=1e-3)
    assert report.predicted_exit == pytest.approx(3.15, abs=0.01)
    assert report.maximiser[0] == pytest.approx(np.log(4.0), abs=0.01)


def test_blowup_needs_supercritical_mass():
    with pytest.raises(ValueError):
        blowup_functional([monomer_state(0.3, form="x", step=0.01)])
