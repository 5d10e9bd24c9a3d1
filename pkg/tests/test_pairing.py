import numpy as np
import pytest
from scipy import integrate

from gridfnapp.asymptotics import FINITE, INFINITESIMAL, evaluate_over_ladder, fit_power_law, make_ladder
from gridfnapp.errors import DomainMismatchError, NotADistributionError, SupportError
from gridfnapp.experiments import alternating
from gridfnapp.grid_core import (
    GridFunction,
    closed_box,
    diff,
    make_level,
    open_box,
    sample,
    shift,
    whole_window,
)
from gridfnapp.pairing import (
    TestFunction,
    centered_battery,
    derivative_pairing_residual,
    equivalent,
    l2_project,
    l2_projection_defect,
    make_battery,
    pair,
    project_distribution,
    standard_function,
)


def _sign(level):
    d = whole_window(level)
    return GridFunction.from_points(d, np.where(d.indices[:, 0] >= 0, 1.0, -1.0))


def _spike(level):
    d = whole_window(level)
    return GridFunction.from_points(d, np.where(d.indices[:, 0] == 0, float(level.n_cells), 0.0))


def _zero(level):
    return GridFunction.zeros(whole_window(level))


def _quad(func, phi):
    lo, hi = phi.support()
    val, _ = integrate.quad(lambda x: func(x) * float(phi(np.array([x]))[0]), lo[0], hi[0],
                            epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


# ---------------------------------------------------------
# test functions and batteries
# ---------------------------------------------------------

def test_bump_peak_and_support():
    phi = TestFunction((0.0,), 1.0)
    assert phi.value_at(0.0) == pytest.approx(np.exp(-1.0))
    assert np.all(phi(np.array([-2.0, -1.0, 1.0, 1.5])) == 0.0)


def test_bump_derivative_matches_difference_quotient():
    phi = TestFunction((0.2,), 0.7)
    x, h = 0.45, 1e-6
    numeric = (phi.value_at(x + h) - phi.value_at(x - h)) / (2 * h)
    assert float(phi.derivative((1,), np.array(x))) == pytest.approx(numeric, rel=1e-6)


def test_bump_radius_must_be_positive():
    with pytest.raises(SupportError):
        TestFunction((0.0,), 0.0)


def test_battery_is_deterministic():
    assert make_battery(-1, 1, seed=3) == make_battery(-1, 1, seed=3)
    assert make_battery(-1, 1, seed=3) != make_battery(-1, 1, seed=4)


def test_battery_stays_inside_the_box():
    battery = make_battery(0.0, 1.0, count=12)
    assert len(battery) == 12
    assert all(phi.inside(0.0, 1.0) for phi in battery)
    radii = [phi.radius for phi in battery]
    assert radii == sorted(radii)


def test_battery_avoid_point_is_core_or_outside():
    for phi in make_battery(-1.0, 1.0, count=12, avoid=[0.0]):
        t = abs(phi.center[0]) / phi.radius
        assert t <= 0.5 or t >= 1.05


def test_battery_covers_probes():
    probes = [0.95, -0.9]
    battery = make_battery(-1.0, 1.0, count=4, probes=probes)
    for p in probes:
        assert any(phi.covers(p) for phi in battery)


def test_centered_battery():
    battery = centered_battery(0.5, [0.1, 0.2])
    assert [phi.center for phi in battery] == [(0.5,), (0.5,)]


# ---------------------------------------------------------
# pairings
# ---------------------------------------------------------

def test_spike_pairs_to_point_value():
    level = make_level(0, 720)
    phi = TestFunction((0.1,), 0.3)
    assert pair(_spike(level), phi) == pytest.approx(phi.value_at(0.0), rel=1e-15)


def test_zero_pairs_to_zero():
    assert pair(_zero(make_level(0, 720)), TestFunction((0.0,), 0.5)) == 0.0


def test_smooth_pairing_matches_quadrature():
    level = make_level(0, 720)
    phi = TestFunction((0.3,), 0.4)
    f = sample(np.sin, whole_window(level))
    assert pair(f, phi) == pytest.approx(_quad(np.sin, phi), abs=1e-10)


def test_pair_is_linear(rng):
    d = whole_window(make_level(0, 720))
    f = GridFunction.from_points(d, rng.uniform(-1, 1, d.count))
    g = sample(np.cos, d)
    phi = TestFunction((0.1,), 0.5)
    a, b = 2.5, -0.75
    expected = a * pair(f, phi) + b * pair(g, phi)
    assert pair(a * f + b * g, phi) == pytest.approx(expected, abs=1e-13)


def test_pair_rejects_escaping_support():
    with pytest.raises(SupportError):
        pair(_zero(make_level(0, 720)), TestFunction((0.9,), 0.3))


def test_pair_rejects_dimension_mismatch():
    with pytest.raises(DomainMismatchError):
        pair(_zero(make_level(0, 64)), TestFunction((0.0, 0.0), 0.3))


# ---------------------------------------------------------
# projection and equivalence
# ---------------------------------------------------------

def test_alternating_projects_to_zero(ladder):
    battery = make_battery(-1.0, 1.0, count=6)
    dist = project_distribution(lambda lv: alternating(lv, -1.0, 1.0), battery, ladder)
    assert all(abs(v) <= 1e-9 for v in dist.limits)


def test_sign_difference_projects_to_twice_delta():
    ladder = make_ladder(4, window=2)
    battery = make_battery(-2.0, 2.0, count=6, probes=[0.0], avoid=[0.0])
    dist = project_distribution(lambda lv: diff(_sign(lv)), battery, ladder)
    for phi, value in zip(battery, dist.limits):
        assert value == pytest.approx(2 * phi.value_at(0.0), abs=1e-5)


def test_continuous_sample_projects_to_itself(ladder):
    battery = make_battery(-1.0, 1.0, count=4)
    dist = project_distribution(lambda lv: sample(np.cos, whole_window(lv)), battery, ladder)
    for phi, value in zip(battery, dist.limits):
        assert value == pytest.approx(_quad(np.cos, phi), abs=1e-8)


def test_diverging_family_is_not_a_distribution(ladder):
    battery = make_battery(-1.0, 1.0, count=3)
    with pytest.raises(NotADistributionError) as info:
        project_distribution(lambda lv: GridFunction.constant(open_box(lv, -1.0, 1.0), lv.n_cells),
                             battery, ladder)
    assert info.value.index == 0


def test_alternating_is_equivalent_to_zero(ladder):
    battery = make_battery(-1.0, 1.0, count=6)
    assert equivalent(lambda lv: alternating(lv, -1.0, 1.0), _zero, battery, ladder)


def test_spike_is_not_equivalent_to_zero(ladder):
    result = equivalent(_spike, _zero, centered_battery(0.0, [0.2, 0.5]), ladder)
    assert result.verdict is False
    assert not result


def test_small_constant_offset_is_not_equivalent_to_zero(ladder):
    battery = make_battery(-1.0, 1.0, count=4)
    family = lambda lv: GridFunction.constant(whole_window(lv), 0.01 + lv.n_cells**-0.5)
    result = equivalent(family, _zero, battery, ladder)
    assert result.verdict is False
    for est, verdict in result.evidence:
        assert est.classification == FINITE
        assert verdict is False


def test_shift_by_one_step_is_equivalent(ladder):
    battery = make_battery(-1.0, 1.0, count=6)

    def f(lv):
        return sample(np.sin, whole_window(lv))

    assert equivalent(f, lambda lv: shift(f(lv), 1), battery, ladder)


def test_equivalence_laws(ladder):
    battery = make_battery(-1.0, 1.0, count=4)
    f = lambda lv: alternating(lv, -1.0, 1.0)
    g = lambda lv: -alternating(lv, -1.0, 1.0)
    assert equivalent(f, f, battery, ladder)
    assert bool(equivalent(f, _zero, battery, ladder)) == bool(equivalent(_zero, f, battery, ladder))
    assert equivalent(f, _zero, battery, ladder) and equivalent(_zero, g, battery, ladder)
    assert equivalent(f, g, battery, ladder)


def test_derivative_residuals_of_constant():
    level = make_level(0, 720)
    f = GridFunction.constant(whole_window(level), 4.0)
    adjoint, distributional = derivative_pairing_residual(f, TestFunction((0.1,), 0.5))
    assert abs(adjoint) <= 1e-12
    assert abs(distributional) <= 1e-10


def test_derivative_residuals_of_sign():
    phi = TestFunction((0.1,), 0.5)
    coarse = derivative_pairing_residual(_sign(make_level(0, 720)), phi)
    fine = derivative_pairing_residual(_sign(make_level(1, 720)), phi)
    assert abs(coarse[0]) <= 1e-12 and abs(fine[0]) <= 1e-12
    assert abs(coarse[1]) <= 1e-2
    assert abs(fine[1]) < abs(coarse[1])


# ---------------------------------------------------------
# L2 projection
# ---------------------------------------------------------

def test_projection_of_constant(level8):
    p = l2_project(lambda x: 3.0 + 0.0 * x, open_box(level8, 0.0, 1.0))
    np.testing.assert_allclose(p.point_values(), 3.0, rtol=1e-14)


def test_projection_of_identity_is_cell_midpoint(level8):
    d = open_box(level8, 0.0, 1.0)
    (y,) = d.point_coords()
    np.testing.assert_allclose(l2_project(lambda x: x, d).point_values(), y + 1 / 16, rtol=1e-13)


def test_projection_of_product_2d():
    d = open_box(make_level(0, 8), 0.0, 1.0, dim=2)
    x, y = d.point_coords()
    p = l2_project(lambda a, b: a * b, d)
    np.testing.assert_allclose(p.point_values(), (x + 1 / 16) * (y + 1 / 16), rtol=1e-13)


def test_projection_approaches_samples(ladder):
    def gap(level):
        d = whole_window(level)
        return float(np.max(np.abs(l2_project(np.sin, d).values - sample(np.sin, d).values)))

    est = fit_power_law(evaluate_over_ladder(gap, ladder))
    assert est.classification == INFINITESIMAL
    assert est.exponent == pytest.approx(-1.0, abs=0.05)


def test_defect_of_smooth_function(ladder):
    est = l2_projection_defect(lambda x: np.sin(np.pi * x), ladder, lambda lv: open_box(lv, 0.0, 1.0))
    assert est.classification == INFINITESIMAL
    assert est.exponent == pytest.approx(-1.0, abs=0.1)


def test_defect_of_grid_aligned_step(ladder):
    est = l2_projection_defect(lambda x: (x > 0.5).astype(float), ladder,
                               lambda lv: open_box(lv, 0.0, 1.0), breakpoints=[0.5])
    assert est.classification == INFINITESIMAL
    assert est.exponent == -np.inf


def test_defect_of_off_grid_step(ladder):
    b = 649 / 2160
    est = l2_projection_defect(lambda x: (x > b).astype(float), ladder,
                               lambda lv: open_box(lv, 0.0, 1.0), breakpoints=[b])
    assert est.classification == INFINITESIMAL
    assert est.exponent == pytest.approx(-0.5, abs=0.05)


# ---------------------------------------------------------
# standard functions
# ---------------------------------------------------------

def test_square_is_s_continuous(ladder):
    (res,) = standard_function(lambda lv: sample(lambda x: x**2, closed_box(lv, 0.0, 1.0)), [0.5], ladder)
    assert res.value.classification == FINITE
    assert res.value.limit == pytest.approx(0.25)
    assert res.s_continuous


def test_alternating_is_not_s_continuous(ladder):
    (res,) = standard_function(lambda lv: alternating(lv, 0.0, 1.0), [0.5], ladder)
    assert not res.s_continuous


def test_sign_is_not_s_continuous_at_zero(ladder):
    (res,) = standard_function(_sign, [0.0], ladder)
    assert not res.s_continuous
