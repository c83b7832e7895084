import numpy as np
import pytest
from numpy.testing import assert_allclose

from kinetics.size_distribution import (InitialDataSpec, SimulationConfig, SizeDistribution, build_initial,
                                        moment, moments, parse_initial_spec)


#
# SIZE DISTRIBUTION
# ----------------------------------------------------------------------------
def test_distribution_stores_read_only_copy():
    raw = np.array([0.5, 0.25, 0.0])
    rho = SizeDistribution(raw)
    raw[0] = 9.0
    assert rho.density(1) == 0.5
    assert rho.truncation_n == 3
    with pytest.raises(ValueError):
        rho.densities[0] = 1.0


@pytest.mark.parametrize('densities', [
    [0.1],                          # N < 2
    [[0.1, 0.2], [0.3, 0.4]],       # not 1-D
    [0.1, -1e-3],                   # negative
    [0.1, np.nan],                  # not finite
])
def test_distribution_rejects_invalid(densities):
    with pytest.raises(ValueError):
        SizeDistribution(np.array(densities))


def test_density_beyond_truncation_is_zero():
    rho = SizeDistribution.from_sizes({1: 0.5, 3: 0.25}, 4)
    assert rho.density(3) == 0.25
    assert rho.density(10) == 0.0
    with pytest.raises(ValueError):
        rho.density(0)


def test_from_sizes_rejects_out_of_range():
    with pytest.raises(ValueError):
        SizeDistribution.from_sizes({5: 1.0}, 4)


def test_negative_gel_rejected():
    with pytest.raises(ValueError):
        SizeDistribution(np.ones(3), gel_mass=-1.0)


#
# MOMENTS
# ----------------------------------------------------------------------------
def test_moments_of_monomers():
    m = moments(SizeDistribution.from_sizes({1: 0.3}, 8))
    assert (m.m0, m.m1, m.m2) == pytest.approx((0.3, 0.3, 0.3))


def test_moments_exclude_gel():
    rho = SizeDistribution.from_sizes({2: 0.5}, 4, gel_mass=7.0)
    assert moment(rho, 0) == pytest.approx(0.5)
    assert moment(rho, 1) == pytest.approx(1.0)
    assert moment(rho, 2) == pytest.approx(2.0)
    assert moment(rho, 3) == pytest.approx(4.0)


@pytest.mark.parametrize('order', [0, 1, 2, 3])
def test_moment_is_linear(order):
    rng  = np.random.default_rng(order)
    x, y = rng.random(20), rng.random(20)
    a, b = 0.7, 2.5
    combined = moment(SizeDistribution(a * x + b * y), order)
    expected = a * moment(SizeDistribution(x), order) + b * moment(SizeDistribution(y), order)
    assert combined == pytest.approx(expected, rel=1e-12)


def test_moment_order_out_of_range():
    with pytest.raises(ValueError):
        moment(SizeDistribution.zeros(4), 4)


#
# INITIAL DATA
# ----------------------------------------------------------------------------
def test_monodisperse_at_size_two():
    rho = build_initial(InitialDataSpec(kind="monodisperse", declared_mass=0.3, size_j0=2), 16)
    assert rho.density(2) == pytest.approx(0.15)
    assert moment(rho, 1) == pytest.approx(0.3)


def test_geometric_matches_declared_mass():
    rho = build_initial(InitialDataSpec.geometric(0.5, 0.3), 512)
    assert moment(rho, 1) == pytest.approx(0.3, rel=1e-14)
    assert_allclose(rho.densities[1:] / rho.densities[:-1], 0.5, rtol=1e-12)


def test_geometric_truncation_too_short():
    with pytest.raises(ValueError, match="increase the truncation"):
        build_initial(InitialDataSpec.geometric(0.99, 1.0), 64)


def test_explicit_values_and_mass():
    spec = InitialDataSpec.explicit([0.1, 0.2])
    assert spec.declared_mass == pytest.approx(0.5)
    rho = build_initial(spec, 4)
    assert_allclose(rho.densities, [0.1, 0.2, 0.0, 0.0])


def test_zero_mass_gives_empty_distribution():
    rho = build_initial(InitialDataSpec(kind="monodisperse", declared_mass=0.0), 4)
    assert moment(rho, 0) == 0.0


@pytest.mark.parametrize('text, kind, mass', [
    ("monodisperse:1", "monodisperse", 0.3),
    ("monodisperse:4", "monodisperse", 0.3),
    ("geometric:0.5", "geometric", 0.3),
    ("explicit:0.1,0.2", "explicit", 0.5),
])
def test_parse_initial_spec(text, kind, mass):
    spec = parse_initial_spec(text, 0.3)
    assert spec.kind == kind
    assert spec.declared_mass == pytest.approx(mass)


@pytest.mark.parametrize('text', ["cubic:2", "geometric:1.5", "monodisperse:zero", "explicit:"])
def test_parse_initial_spec_rejects(text):
    with pytest.raises(ValueError):
        parse_initial_spec(text, 0.3)


#
# SIMULATION CONFIG
# ----------------------------------------------------------------------------
@pytest.mark.parametrize('kwargs', [
    dict(truncation_n=1, t_end=1.0),
    dict(truncation_n=8, t_end=0.0),
    dict(truncation_n=8, t_end=1.0, output_stride=-1),
    dict(truncation_n=8, t_end=1.0, output_stride=0),
    dict(truncation_n=8, t_end=1.0, abs_tol=0.0),
    dict(truncation_n=8, t_end=1.0, convolution_mode="spectral"),
    dict(truncation_n=8, t_end=1.0, output_dt=-0.1),
    dict(truncation_n=8, t_end=1.0, workers=0),
])
def test_simulation_config_rejects(kwargs):
    with pytest.raises(ValueError):
        SimulationConfig(**kwargs)


def test_simulation_config_stride_zero_with_output_dt():
    cfg = SimulationConfig(truncation_n=8, t_end=1.0, output_stride=0, output_dt=0.5)
    assert cfg.convolution_mode == "auto"
