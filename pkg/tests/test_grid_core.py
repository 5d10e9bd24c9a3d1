import numpy as np
import pytest

from gridfnapp.errors import (
    DomainMismatchError,
    EmptyDomainError,
    GridAlignmentError,
    LevelMismatchError,
    NormOrderError,
    SamplingError,
)
from gridfnapp.grid_core import (
    GridFunction,
    alpha_diff,
    closed_box,
    diff,
    discretize,
    fundamental_theorem_residual,
    grid_integral,
    inner_product,
    lambda_boundary,
    lp_norm,
    make_level,
    open_box,
    product_rule_residual,
    sample,
    shift,
    shifted_boundary,
    shifted_interior,
    step_extension,
    step_extension_eval,
    summation_by_parts_residual,
    whole_window,
)
from gridfnapp.pairing import TestFunction

EPS = np.finfo(float).eps


def _sign(level):
    d = whole_window(level)
    return GridFunction.from_points(d, np.where(d.indices[:, 0] >= 0, 1.0, -1.0))


def _spike(level, j=0):
    d = whole_window(level)
    return GridFunction.from_points(d, np.where(d.indices[:, 0] == j, float(level.n_cells), 0.0))


# ---------------------------------------------------------
# levels
# ---------------------------------------------------------

@pytest.mark.parametrize("exponent, n", [(0, 720), (1, 1440), (3, 5760)])
def test_make_level_sizes(exponent, n):
    level = make_level(exponent, 720, 2)
    assert level.n_cells == n
    assert level.step == pytest.approx(1.0 / n)
    assert level.half_width == 2 * n
    assert level.side == 4 * n + 1


def test_make_level_rational_window():
    level = make_level(0, 720, "1/3")
    assert level.half_width == 240


def test_make_level_rejects_misaligned_window():
    with pytest.raises(GridAlignmentError):
        make_level(0, 720, "1/7")


def test_make_level_rejects_bad_base():
    with pytest.raises(GridAlignmentError):
        make_level(0, 0)


# ---------------------------------------------------------
# domains
# ---------------------------------------------------------

def test_open_unit_interval(level8):
    d = open_box(level8, 0.0, 1.0)
    (x,) = d.point_coords()
    np.testing.assert_allclose(x, np.arange(1, 8) / 8)


def test_open_unit_square():
    d = open_box(make_level(0, 4), 0.0, 1.0, dim=2)
    assert d.count == 9


def test_discretize_disc_matches_brute_force():
    level = make_level(0, 4)
    d = discretize(lambda x, y: x**2 + y**2 < 1, level, 2)
    expected = sum(1 for i in range(-4, 5) for j in range(-4, 5) if (i / 4) ** 2 + (j / 4) ** 2 < 1)
    assert d.count == expected


def test_discretize_empty_raises(level8):
    with pytest.raises(EmptyDomainError):
        discretize(lambda x: x > 5, level8)


def test_lambda_boundary_interval(level8):
    b = lambda_boundary(open_box(level8, 0.0, 1.0))
    (x,) = b.point_coords()
    np.testing.assert_allclose(x, [1 / 8, 7 / 8])


def test_lambda_boundary_square():
    b = lambda_boundary(open_box(make_level(0, 4), 0.0, 1.0, dim=2))
    assert b.count == 8
    assert not b.contains_index((2, 2))


def test_shifted_interior(level8):
    d = open_box(level8, 0.0, 1.0)
    (x,) = shifted_interior(d, (1,)).point_coords()
    np.testing.assert_allclose(x, np.arange(1, 7) / 8)
    assert shifted_interior(d, (0,)).same_as(d)


def test_shifted_interior_diagonal():
    d = open_box(make_level(0, 4), 0.0, 1.0, dim=2)
    inner = shifted_interior(d, (1, 1))
    assert sorted(map(tuple, inner.indices)) == [(1, 1), (1, 2), (2, 1), (2, 2)]


def test_shifted_boundary_zero_is_lambda_boundary(level8):
    d = closed_box(level8, 0.0, 1.0)
    assert shifted_boundary(d, (0,)).same_as(lambda_boundary(d))


# ---------------------------------------------------------
# sampling and differences
# ---------------------------------------------------------

def test_sample_square():
    d = open_box(make_level(0, 4), 0.0, 1.0)
    f = sample(lambda x: x**2, d)
    np.testing.assert_allclose(f.point_values(), [1 / 16, 1 / 4, 9 / 16])


def test_sample_singular_off_grid_is_fine(level8):
    f = sample(lambda x: 1 / x, open_box(level8, 0.0, 1.0))
    assert np.all(np.isfinite(f.point_values()))


def test_sample_non_finite_raises(level8):
    with np.errstate(divide="ignore"):
        with pytest.raises(SamplingError):
            sample(lambda x: 1 / x, whole_window(level8))


def test_forward_difference_of_square():
    level = make_level(0, 64)
    f = sample(lambda x: x**2, whole_window(level))
    df = diff(f)
    (x,) = df.domain.point_coords()
    np.testing.assert_allclose(df.point_values(), 2 * x + 1 / 64, rtol=0, atol=16 * EPS * 64)
    assert df.domain.count == f.domain.count - 1


def test_sign_difference_is_a_spike():
    level = make_level(0, 720)
    df = diff(_sign(level))
    assert df.at(-1) == 2 * 720
    nonzero = np.flatnonzero(df.point_values())
    assert nonzero.size == 1


def test_constant_difference_vanishes(level8):
    df = diff(GridFunction.constant(open_box(level8, 0.0, 1.0), 3.0))
    assert np.all(df.point_values() == 0.0)


def test_second_difference_of_square():
    level = make_level(0, 16)
    f = sample(lambda x: x**2, whole_window(level))
    d2 = alpha_diff(f, (2,))
    np.testing.assert_allclose(d2.point_values(), 2.0, atol=1e-9)


def test_mixed_difference_of_product():
    level = make_level(0, 8)
    f = sample(lambda x, y: x * y, whole_window(level, 2))
    np.testing.assert_allclose(alpha_diff(f, (1, 1)).point_values(), 1.0, atol=1e-12)


def test_difference_axis_out_of_range(level8):
    f = GridFunction.zeros(whole_window(level8))
    with pytest.raises(DomainMismatchError):
        diff(f, axis=1)


# ---------------------------------------------------------
# integrals and norms
# ---------------------------------------------------------

def test_grid_integral_of_one(level8):
    assert grid_integral(GridFunction.constant(open_box(level8, 0.0, 1.0), 1.0)) == pytest.approx(7 / 8)


def test_spike_has_unit_mass():
    f = _spike(make_level(0, 720))
    assert lp_norm(f, 1) == 1.0
    assert grid_integral(f) == 1.0


def test_spike_pairs_to_point_value():
    level = make_level(0, 720)
    g = sample(np.cos, whole_window(level))
    assert inner_product(_spike(level), g) == pytest.approx(1.0, rel=4 * EPS)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
def test_norm_of_indicator_difference(p):
    n = 720
    df = diff(_spike(make_level(0, n)) / n)
    expected = 2 ** (1 / p) * n ** ((p - 1) / p)
    assert lp_norm(df, p) == pytest.approx(expected, rel=1e-12)


def test_sup_norm_of_alternating():
    level = make_level(0, 720)
    d = whole_window(level)
    f = GridFunction.from_points(d, (-1.0) ** d.indices[:, 0])
    assert lp_norm(f, np.inf) == 1.0


def test_norm_order_below_one_rejected(level8):
    with pytest.raises(NormOrderError):
        lp_norm(GridFunction.zeros(whole_window(level8)), 0.5)


def test_level_mismatch_rejected():
    f = GridFunction.zeros(whole_window(make_level(0, 8)))
    g = GridFunction.zeros(whole_window(make_level(1, 8)))
    with pytest.raises(LevelMismatchError):
        inner_product(f, g)


def test_holder_inequality_on_random_pairs(rng):
    level = make_level(0, 64)
    d = whole_window(level)
    for _ in range(200):
        p = float(rng.uniform(1.05, 6.0))
        q = p / (p - 1)
        f = GridFunction.from_points(d, rng.standard_normal(d.count) * rng.uniform(0.1, 10))
        g = GridFunction.from_points(d, rng.standard_normal(d.count) * rng.uniform(0.1, 10))
        lhs = lp_norm(f * g, 1)
        rhs = lp_norm(f, p) * lp_norm(g, q)
        assert lhs <= rhs * (1 + 1e-12)


# ---------------------------------------------------------
# shifts and exact identities
# ---------------------------------------------------------

def test_shift_by_zero_is_identity(level8):
    f = GridFunction.constant(whole_window(level8), 2.0)
    assert shift(f, 0) is f


def test_shift_preserves_inner_product(rng):
    level = make_level(0, 720)
    d = whole_window(level)
    f = GridFunction.from_points(d, rng.uniform(-1, 1, d.count))
    phi = sample(TestFunction((0.1,), 0.4), d)
    lhs = inner_product(shift(f, 3), shift(phi, 3))
    assert lhs == pytest.approx(inner_product(f, phi), abs=1e-12)


@pytest.mark.parametrize("form", [1, 2, 3])
@pytest.mark.parametrize("direction", ["forward", "backward"])
def test_product_rule_holds_to_rounding(rng, form, direction):
    level = make_level(0, 16)
    d = whole_window(level)
    f = GridFunction.from_points(d, rng.uniform(-1, 1, d.count))
    g = GridFunction.from_points(d, rng.uniform(-1, 1, d.count))
    res = product_rule_residual(f, g, form=form, direction=direction)
    scale = 2 * level.n_cells * np.max(np.abs(f.values)) * np.max(np.abs(g.values))
    assert np.max(np.abs(res.point_values())) <= 8 * EPS * scale


def test_product_rule_square_of_identity():
    level = make_level(0, 64)
    x = sample(lambda t: t, whole_window(level))
    res = product_rule_residual(x, x, form=2)
    assert np.max(np.abs(res.point_values())) <= 16 * EPS * 2 * 64


def test_cube_of_sign_difference():
    level = make_level(0, 720)
    f = _sign(level)
    lhs = diff(f**3)
    rhs = diff(f) * (2 + f * shift(f, 1))
    assert np.array_equal(lhs.values, rhs.values)
    assert lhs.at(-1) == 2 * 720


def test_summation_by_parts(rng):
    level = make_level(0, 64)
    d = whole_window(level)
    f = GridFunction.from_points(d, rng.uniform(-1, 1, d.count))
    phi = sample(TestFunction((0.0,), 0.5), d)
    res = summation_by_parts_residual(f, phi)
    bound = 8 * EPS * np.log2(d.count) * 2 * 64 * np.max(phi.values)
    assert abs(res) <= bound


def test_summation_by_parts_constant():
    d = whole_window(make_level(0, 64))
    f = GridFunction.constant(d, 5.0)
    phi = sample(TestFunction((0.0,), 0.5), d)
    assert abs(summation_by_parts_residual(f, phi)) <= 1e-12


def test_fundamental_theorem(rng):
    level = make_level(0, 64)
    d = whole_window(level)
    f = GridFunction.from_points(d, rng.uniform(-1, 1, d.count))
    assert abs(fundamental_theorem_residual(f, -0.5, 0.5)) <= 1e-12


@pytest.mark.parametrize("a, b", [(-1.5, 0.5), (-0.5, 1.5), (0.5, -0.5)])
def test_fundamental_theorem_interval_outside_window(rng, a, b):
    d = whole_window(make_level(0, 64))
    f = GridFunction.from_points(d, rng.uniform(-1, 1, d.count))
    with pytest.raises(DomainMismatchError):
        fundamental_theorem_residual(f, a, b)


@pytest.mark.parametrize("i, j", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_forward_and_backward_differences_commute(rng, i, j):
    level = make_level(0, 8)
    d = whole_window(level, 2)
    f = GridFunction.from_points(d, rng.uniform(-1, 1, d.count))
    a = diff(diff(f, j, "backward"), i, "forward")
    b = diff(diff(f, i, "forward"), j, "backward")
    both = a.domain.mask & b.domain.mask
    assert both.sum() >= 13 * 13
    np.testing.assert_allclose(a.values[both], b.values[both], atol=1e-12 * level.n_cells**2)


# ---------------------------------------------------------
# step extension
# ---------------------------------------------------------

def test_step_extension_takes_lower_corner(level8):
    f = sample(lambda x: x**2, open_box(level8, 0.0, 1.0))
    assert step_extension_eval(f, 0.3) == pytest.approx(1 / 16)
    assert step_extension_eval(f, 0.5) == pytest.approx(1 / 4)


def test_step_extension_vanishes_off_domain(level8):
    f = sample(lambda x: x**2 + 1, open_box(level8, 0.0, 1.0))
    assert step_extension_eval(f, -0.5) == 0.0
    assert step_extension_eval(f, 1.5) == 0.0


def test_step_extension_vectorized(level8):
    f = sample(lambda x: x, open_box(level8, 0.0, 1.0))
    out = step_extension(f)(np.array([0.26, 0.51, 0.99]))
    np.testing.assert_allclose(out, [2 / 8, 4 / 8, 7 / 8])


def test_at_point_rejects_off_grid(level8):
    f = GridFunction.zeros(whole_window(level8))
    with pytest.raises(SamplingError):
        f.at_point(0.3)
