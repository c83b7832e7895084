import numpy as np
import pytest
from numpy.testing import assert_allclose

from analysis.analysis_checks import m0_closed_form
from kinetics.integrator_rk45 import RK45Integrator, absolute_tolerance, detect_gelation, integrate
from kinetics.size_distribution import InitialDataSpec, SimulationConfig, SizeDistribution, build_initial
from utils.errors import NegativityFailure


@pytest.fixture(scope="module")
def subcritical_run():
    spec = InitialDataSpec.monodisperse(1, 0.3)
    cfg  = SimulationConfig(truncation_n=512, t_end=20.0, output_stride=0, output_dt=0.25)
    return integrate(build_initial(spec, 512), cfg)


def test_embedded_error_is_fifth_order():
    stepper = RK45Integrator(SimulationConfig(truncation_n=8, t_end=1.0))
    y = np.append(0.1 * 0.5 ** np.arange(1, 9), 0.0)
    f = stepper.fun(0.0, y)
    coarse = np.max(np.abs(stepper.attempt(0.0, y, f, 0.02)[2]))
    fine   = np.max(np.abs(stepper.attempt(0.0, y, f, 0.01)[2]))
    assert 24.0 <= coarse / fine <= 40.0


def test_tail_tolerance_scales_with_size_squared():
    atol = absolute_tolerance(1e-12, 4)
    assert_allclose(atol, [1e-12, 1e-12 / 4, 1e-12 / 9, 1e-12 / 16, 1e-12])


def test_snapshots_land_on_output_marks(subcritical_run):
    assert_allclose(subcritical_run.times, 0.25 * np.arange(81), atol=1e-12)
    assert len(subcritical_run.snapshots) == len(subcritical_run.moments) == 81


def test_m0_follows_closed_form(subcritical_run):
    law = m0_closed_form(0.3, 0.3, subcritical_run.times)
    assert np.max(np.abs(subcritical_run.moment_series("m0") - law)) <= 1e-6


def test_mass_is_conserved_without_gel(subcritical_run):
    cfg = subcritical_run.config
    assert subcritical_run.gel_mass_series()[-1] < 1e-10
    assert subcritical_run.gel_flux_series[-1] < 1e-12
    assert subcritical_run.projection_mass <= 100 * cfg.abs_tol
    bound = (cfg.abs_tol + cfg.rel_tol * 0.3) * subcritical_run.times * 10
    assert np.all(subcritical_run.mass_defect() <= bound)


def test_no_gelation_below_critical_mass(subcritical_run):
    assert detect_gelation(subcritical_run) is None


def test_density_series_matches_snapshots(subcritical_run):
    series = subcritical_run.density_series(1)
    assert series[0] == pytest.approx(0.3)
    assert series[-1] == subcritical_run.final.density(1)


def test_doubling_truncation_leaves_small_sizes_unchanged():
    spec  = InitialDataSpec.monodisperse(1, 0.3)
    final = {}
    for n in (256, 512):
        cfg      = SimulationConfig(truncation_n=n, t_end=5.0, output_stride=0, output_dt=5.0)
        final[n] = integrate(build_initial(spec, n), cfg).final.densities[:20]
    assert np.max(np.abs(final[512] - final[256])) < 1e-8


def test_output_stride_snapshots():
    cfg  = SimulationConfig(truncation_n=16, t_end=1.0, output_stride=1)
    traj = integrate(build_initial(InitialDataSpec.monodisperse(1, 0.3), 16), cfg)
    assert len(traj) == traj.accepted_steps + 1
    assert traj.times[-1] == pytest.approx(1.0)
    assert np.all(np.diff(traj.times) > 0.0)


def test_truncation_mismatch_rejected():
    cfg = SimulationConfig(truncation_n=16, t_end=1.0)
    with pytest.raises(ValueError):
        integrate(SizeDistribution.zeros(8), cfg)


#
# POSITIVITY PROJECTION
# ----------------------------------------------------------------------------
def test_projection_clips_small_negatives():
    stepper = RK45Integrator(SimulationConfig(truncation_n=3, t_end=1.0))
    y = np.array([0.1, -5e-13, 0.2, 0.0])
    assert stepper.project(y, 0.5)
    assert y[1] == 0.0
    assert stepper.projection_mass == pytest.approx(1e-12)


def test_projection_rejects_large_negatives():
    stepper = RK45Integrator(SimulationConfig(truncation_n=3, t_end=1.0))
    with pytest.raises(NegativityFailure):
        stepper.project(np.array([0.1, -1e-6, 0.2, 0.0]), 0.5)


#
# GELATION
# ----------------------------------------------------------------------------
@pytest.mark.parametrize('threshold', [0.0, 1.0, -0.5])
def test_detect_gelation_threshold_range(threshold, subcritical_run):
    with pytest.raises(ValueError):
        detect_gelation(subcritical_run, threshold)


@pytest.mark.slow
def test_supercritical_mass_gels():
    spec = InitialDataSpec.monodisperse(1, 2.0)
    cfg  = SimulationConfig(truncation_n=4096, t_end=3.0, output_stride=0, output_dt=0.01)
    traj = integrate(build_initial(spec, 4096), cfg)
    onset = detect_gelation(traj, 0.01)
    assert onset is not None and onset <= 3.0
    assert np.all(np.diff(traj.gel_mass_series()) >= 0.0)
    total = traj.moment_series("m1") + traj.gel_mass_series()
    assert_allclose(total, 2.0, rtol=1e-5)
