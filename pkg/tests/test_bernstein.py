import numpy as np
import pytest
from numpy.testing import assert_allclose

from kinetics.size_distribution import InitialDataSpec, SizeDistribution, build_initial, moment
from transforms.transform_bernstein import (TransformGrid, check_complete_monotonicity, chebyshev_nodes,
                                            extract_density, extraction_error_constant, extraction_nodes,
                                            power_amplification, taylor_remainder_check, transform_F,
                                            transform_F_derivative, transform_G, uniform_x_grid, uniform_z_grid)
from utils.errors import GridTooCoarse, IllConditioned


@pytest.fixture
def small_rho():
    return SizeDistribution(np.random.default_rng(7).random(12) * 0.1)


#
# TRANSFORMS
# ----------------------------------------------------------------------------
def test_monomers_give_linear_G():
    z = uniform_z_grid(0.1)
    g = transform_G(SizeDistribution.from_sizes({1: 0.3}, 4), z)
    assert_allclose(g.values, 0.3 * (1.0 - z), atol=1e-15)
    assert g.mass_m == pytest.approx(0.3)


def test_G_at_zero_is_m0(small_rho):
    g = transform_G(small_rho, [0.0, 0.5])
    assert g.values[0] == pytest.approx(moment(small_rho, 0))


def test_G_is_F_at_minus_log(small_rho):
    z = np.linspace(0.05, 0.95, 19)
    f = transform_F(small_rho, -np.log(z))
    assert_allclose(f.nodes, -np.log(z[::-1]))
    assert_allclose(transform_G(small_rho, z).values, f.values[::-1], rtol=1e-12)


def test_transform_sorts_nodes(small_rho):
    shuffled = transform_G(small_rho, [0.5, 0.0, 0.25])
    assert_allclose(shuffled.nodes, [0.0, 0.25, 0.5])
    assert_allclose(shuffled.values, transform_G(small_rho, [0.0, 0.25, 0.5]).values)
    with pytest.raises(ValueError):
        transform_F(small_rho, [0.5, 0.5])


def test_F_derivatives_at_zero(small_rho):
    assert transform_F_derivative(small_rho, [0.0], 1)[0] == pytest.approx(moment(small_rho, 1))
    assert transform_F_derivative(small_rho, [0.0], 2)[0] == pytest.approx(-moment(small_rho, 2))


def test_F_derivative_matches_finite_difference(small_rho):
    x, h = 0.7, 1e-5
    f = transform_F(small_rho, [x - h, x + h]).values
    assert transform_F_derivative(small_rho, [x], 1)[0] == pytest.approx((f[1] - f[0]) / (2 * h), rel=1e-8)


def test_transform_rejects_bad_nodes(small_rho):
    with pytest.raises(ValueError):
        transform_G(small_rho, [0.5, 1.5])
    with pytest.raises(ValueError):
        transform_F(small_rho, [-0.1])


#
# GRIDS
# ----------------------------------------------------------------------------
def test_uniform_z_grid_stops_short_of_one():
    z = uniform_z_grid(0.25)
    assert_allclose(z, [0.0, 0.25, 0.5, 0.75])
    assert_allclose(uniform_z_grid(0.25, upper=0.5), [0.0, 0.25, 0.5])


def test_uniform_x_grid_reaches_x_max():
    x = uniform_x_grid(0.5, 2.0)
    assert_allclose(x, [0.0, 0.5, 1.0, 1.5, 2.0])


def test_chebyshev_nodes_inside_window():
    nodes = chebyshev_nodes(16, 0.5)
    assert np.all(nodes > 0.0) and np.all(nodes < 0.5)
    assert np.all(np.diff(nodes) > 0.0)


def test_grid_band_violation():
    nodes = uniform_z_grid(0.25)
    inside = TransformGrid("z", nodes, 0.3 * (1.0 - nodes), 0.3)
    assert inside.band_violation() == 0.0
    above = inside.with_values(inside.values + 0.01)
    assert above.band_violation() == pytest.approx(0.01)


def test_grid_rejects_unsorted_nodes():
    with pytest.raises(ValueError):
        TransformGrid("z", np.array([0.0, 0.5, 0.25]), np.zeros(3), 0.3)


#
# DENSITY EXTRACTION
# ----------------------------------------------------------------------------
def test_extraction_error_halves_with_step():
    rng = np.random.default_rng(7)
    for l in range(1, 6):
        rho = SizeDistribution(0.1 * 0.8 ** np.arange(1, 13) * (1.0 + 0.5 * rng.random(12)))
        errors = []
        for h in (0.01, 0.005):
            g = transform_G(rho, extraction_nodes(l, h))
            errors.append(abs(extract_density(g, l, h) - rho.density(l)))
        assert 1.6 <= errors[0] / errors[1] <= 2.4


def test_extraction_on_fine_grid_default_step(small_rho):
    g = transform_G(small_rho, uniform_z_grid(1e-4, upper=0.01))
    for l in (1, 2, 3):
        assert extract_density(g, l) == pytest.approx(small_rho.density(l), abs=5e-3)


def test_high_order_extraction_solves_collocation(small_rho):
    g = transform_G(small_rho, uniform_z_grid(1e-3))
    for l in (9, 10, 12):
        assert extract_density(g, l, support=12) == pytest.approx(small_rho.density(l), abs=1e-6)


@pytest.mark.parametrize('l', [9, 10, 12])
def test_high_order_extraction_long_tail(l):
    rho = SizeDistribution(0.1 * 0.8 ** np.arange(1, 17))
    g   = transform_G(rho, uniform_z_grid(1e-3))
    assert extract_density(g, l, support=16) == pytest.approx(rho.density(l), rel=2e-2)


def test_high_order_extraction_refuses_ill_conditioned_support():
    rho = SizeDistribution(0.1 * 0.8 ** np.arange(1, 65))
    g   = transform_G(rho, uniform_z_grid(1e-3))
    with pytest.raises(IllConditioned):
        extract_density(g, 12, support=64)


def test_high_order_extraction_needs_support(small_rho):
    g = transform_G(small_rho, uniform_z_grid(1e-3))
    with pytest.raises(ValueError):
        extract_density(g, 9)
    with pytest.raises(ValueError):
        extract_density(g, 13, support=12)


def test_power_amplification_grows_with_support():
    assert power_amplification(3, 3) == pytest.approx(32.0)          # T_3(2t - 1) = 32 t**3 + ...
    assert power_amplification(12, 16) < power_amplification(12, 32)


def test_extraction_missing_nodes(small_rho):
    g = transform_G(small_rho, uniform_z_grid(0.01, upper=0.2))
    with pytest.raises(GridTooCoarse):
        extract_density(g, 2, 0.003)


def test_extraction_step_too_large(small_rho):
    g = transform_G(small_rho, uniform_z_grid(0.1))
    with pytest.raises(ValueError):
        extract_density(g, 5, 0.1)


def test_extraction_error_constant():
    assert extraction_error_constant(1) == 16.0
    assert extraction_error_constant(2) == 192.0


#
# COMPLETE MONOTONICITY AND TAYLOR REMAINDER
# ----------------------------------------------------------------------------
def test_geometric_transform_is_completely_monotone():
    rho = build_initial(InitialDataSpec.geometric(0.5, 0.3), 256)
    report = check_complete_monotonicity(transform_G(rho, uniform_z_grid(1e-3, upper=0.9)), 4, 0.01)
    assert report.passed
    assert set(report.worst_by_order()) == {1, 2, 3, 4}


def test_increasing_grid_violates_monotonicity():
    nodes = uniform_z_grid(0.01, upper=0.9)
    grid  = TransformGrid("z", nodes, nodes ** 2, 0.3)
    report = check_complete_monotonicity(grid, 2, 0.01)
    assert not report.passed
    assert not report.orders[0].passed


def test_monotonicity_needs_aligned_step():
    grid = TransformGrid("z", uniform_z_grid(0.01), np.zeros(100), 0.3)
    with pytest.raises(GridTooCoarse):
        check_complete_monotonicity(grid, 2, 0.015)


def test_monotonicity_needs_room_below_one():
    full  = uniform_z_grid(0.01)
    with pytest.raises(ValueError, match="z_max"):
        check_complete_monotonicity(TransformGrid("z", full, np.zeros(full.size), 0.3), 2, 0.01)
    short = uniform_z_grid(0.01, upper=0.9)
    grid  = TransformGrid("z", short, np.zeros(short.size), 0.3)
    assert check_complete_monotonicity(grid, 2, 0.01).passed


def test_taylor_remainder_bound_holds():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n   = int(rng.integers(2, 40))
        raw = rng.random(n)
        rho = SizeDistribution(raw / max(float(np.dot(np.arange(1, n + 1), raw)), 1.0))
        for z in (0.1, 0.5, 0.9):
            for k in (0, 1, 5, 20):
                assert taylor_remainder_check(rho, z, k).satisfied


def test_taylor_gap_is_series_tail(small_rho):
    z, k = 0.4, 3
    check = taylor_remainder_check(small_rho, z, k)
    g0 = transform_G(small_rho, [0.0]).values[0]
    gz = transform_G(small_rho, [z]).values[0]
    partial = sum(small_rho.density(l) * z ** l for l in range(1, k + 1))
    assert check.gap == pytest.approx(abs(gz - (g0 - partial)), rel=1e-10)
