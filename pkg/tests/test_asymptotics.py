import numpy as np
import pytest
from scipy import integrate

from gridfnapp.asymptotics import (
    FINITE,
    INFINITE,
    INFINITESIMAL,
    UNRESOLVED,
    evaluate_over_ladder,
    fit_power_law,
    make_ladder,
    map_over_ladder,
    richardson_limit,
    standard_part,
    with_assumed_order,
    worker_count,
)
from gridfnapp.errors import LadderError, LadderEvaluationError, StandardPartError
from gridfnapp.experiments import heaviside_ramp, pair_product
from gridfnapp.grid_core import open_box, sample
from gridfnapp.pairing import TestFunction, pair

SIZES = (720, 1440, 2880, 5760)


def _samples(func, sizes=SIZES):
    return [(n, func(n)) for n in sizes]


def test_make_ladder_sizes():
    assert make_ladder(4).sizes == [720, 1440, 2880, 5760]
    assert make_ladder(3, stride=2).sizes == [720, 2880, 11520]


def test_ladder_needs_three_levels():
    with pytest.raises(LadderError):
        make_ladder(2)


def test_evaluate_inverse_n(ladder):
    samples = evaluate_over_ladder(lambda lv: 1.0 / lv.n_cells, ladder)
    assert samples == [(720, 1 / 720), (1440, 1 / 1440), (2880, 1 / 2880)]


def test_evaluate_constant(ladder):
    samples = evaluate_over_ladder(lambda lv: 2.0, ladder)
    assert [v for _, v in samples] == [2.0, 2.0, 2.0]


def test_evaluate_ramp_pairing():
    ladder = make_ladder(3, stride=2)
    samples = evaluate_over_ladder(lambda lv: pair_product(heaviside_ramp(lv, lv.n_cells // 24), 1, 2), ladder)
    for n, v in samples:
        m = n // 24
        assert v == pytest.approx(1 / 6 - 1 / (6 * m * m), rel=1e-12)


def test_map_over_ladder_keeps_order(monkeypatch):
    monkeypatch.setenv("GRIDFN_THREADS", "4")
    ladder = make_ladder(5)
    assert map_over_ladder(lambda lv: lv.n_cells, ladder) == ladder.sizes


def test_level_failure_names_the_level(ladder):
    def boom(level):
        if level.n_cells == 1440:
            raise ZeroDivisionError("x")
        return 1.0

    with pytest.raises(LadderEvaluationError) as info:
        map_over_ladder(boom, ladder)
    assert info.value.n_cells == 1440
    assert isinstance(info.value.__cause__, ZeroDivisionError)


@pytest.mark.parametrize("raw, expected", [("1", 1), ("3", 3), ("0", 1)])
def test_worker_count_from_env(monkeypatch, raw, expected):
    monkeypatch.setenv("GRIDFN_THREADS", raw)
    assert worker_count() == expected


def test_worker_count_ignores_garbage(monkeypatch):
    monkeypatch.setenv("GRIDFN_THREADS", "many")
    assert worker_count() >= 1


# ---------------------------------------------------------
# fitting
# ---------------------------------------------------------

def test_inverse_n_is_infinitesimal():
    est = fit_power_law(_samples(lambda n: 1.0 / n))
    assert est.classification == INFINITESIMAL
    assert est.exponent == pytest.approx(-1.0, abs=1e-9)
    assert est.limit == 0.0


def test_constant_plus_inverse_n_is_finite():
    est = fit_power_law(_samples(lambda n: 2.0 + 3.0 / n))
    assert est.classification == FINITE
    assert est.limit == pytest.approx(2.0, abs=1e-12)
    assert est.order == pytest.approx(1.0, abs=1e-6)


def test_square_root_is_infinite():
    est = fit_power_law(_samples(np.sqrt))
    assert est.classification == INFINITE
    assert est.exponent == pytest.approx(0.5, abs=1e-9)
    assert est.limit is None


def test_all_zero_is_infinitesimal():
    est = fit_power_law(_samples(lambda n: 0.0))
    assert est.classification == INFINITESIMAL
    assert est.exponent == -np.inf


def test_sign_flipping_is_unresolved():
    est = fit_power_law([(720, 1.0), (1440, -1.0), (2880, 1.0)])
    assert est.classification == UNRESOLVED
    assert est.fit_residual > est.residual_bound


def test_non_finite_sample_is_unresolved():
    est = fit_power_law([(720, 1.0), (1440, np.nan), (2880, 1.0)])
    assert est.classification == UNRESOLVED


def test_values_below_floor_count_as_zero():
    est = fit_power_law(_samples(lambda n: 1e-17 * n), noise_floor=1e-12)
    assert est.classification == INFINITESIMAL


@pytest.mark.parametrize("limit, correction", [
    (0.002, lambda n: 1.0 / n),
    (0.01, lambda n: n ** -0.5),
    (-0.01, lambda n: n ** -0.5),
])
@pytest.mark.parametrize("sizes", [SIZES[:3], SIZES])
def test_small_nonzero_limit_is_finite(limit, correction, sizes):
    est = fit_power_law(_samples(lambda n: limit + correction(n), sizes))
    assert est.classification == FINITE
    assert abs(est.exponent) <= est.exponent_threshold
    assert est.limit == pytest.approx(limit, rel=1e-6)


@pytest.mark.parametrize("p", [0.0, -0.5, -1.0, -2.0])
def test_leading_power_with_correction(p):
    est = fit_power_law(_samples(lambda n: n**p + n ** (p - 1.0)))
    assert est.exponent == pytest.approx(p, abs=0.05)
    expected = 1.0 if p == 0.0 else 0.0
    assert est.limit == pytest.approx(expected, abs=1e-8)
    assert est.classification == (FINITE if p == 0.0 else INFINITESIMAL)


@pytest.mark.parametrize("func", [
    lambda n: 1.0 / n,
    lambda n: 2.0 + 3.0 / n,
    lambda n: 0.002 + 1.0 / n,
    lambda n: n**-0.5 + n**-1.5,
    np.sqrt,
    lambda n: (-1.0) ** (n // 720) * 3.0,
])
def test_classification_ignores_positive_scaling(func):
    base = fit_power_law(_samples(func)).classification
    for a in (1e-6, 1e6):
        assert fit_power_law(_samples(lambda n: a * func(n))).classification == base


def test_too_few_samples():
    with pytest.raises(LadderError):
        fit_power_law([(720, 1.0), (1440, 1.0)])


@pytest.mark.parametrize("func", [
    lambda n: 1.0 / n,
    lambda n: 2.0 + 3.0 / n,
    lambda n: 0.5 - n ** -0.5,
    np.sqrt,
    lambda n: float(n),
    lambda n: (-1.0) ** (n // 720) * 3.0,
    lambda n: np.sin(n) / n**2,
    lambda n: 1.0 + np.cos(n),
])
def test_classification_agrees_with_exponent(func):
    est = fit_power_law(_samples(func))
    thr = est.exponent_threshold
    if est.classification == INFINITESIMAL:
        assert est.exponent < -thr
    elif est.classification == FINITE:
        assert abs(est.exponent) <= thr
        assert est.limit is not None
    elif est.classification == INFINITE:
        assert est.exponent > thr
    else:
        assert est.fit_residual > est.residual_bound


def test_richardson_removes_the_leading_term():
    v = lambda n: 1.0 + 4.0 / n**2
    assert richardson_limit(v(100), v(200), 100, 200, 2.0) == pytest.approx(1.0, abs=1e-15)


# ---------------------------------------------------------
# standard parts
# ---------------------------------------------------------

def test_standard_part_of_finite():
    assert standard_part(_samples(lambda n: 2.0 + 3.0 / n)) == pytest.approx(2.0, abs=1e-12)


def test_standard_part_of_divergent_raises():
    with pytest.raises(StandardPartError) as info:
        standard_part(_samples(float))
    assert info.value.estimate.classification == INFINITE


def test_standard_part_with_assumed_order():
    samples = _samples(lambda n: 0.5 - 1.0 / np.sqrt(n) + 1.0 / n)
    assert standard_part(samples, assumed_order=0.5) == pytest.approx(0.5, abs=2e-3)


def test_standard_part_of_affine_sequence_is_exact():
    samples = _samples(lambda n: 2.0 + 3.0 / n)
    assert abs(standard_part(samples, assumed_order=1) - 2.0) <= 8 * np.spacing(2.0)


def test_with_assumed_order_leaves_infinitesimal_alone():
    est = fit_power_law(_samples(lambda n: 1.0 / n))
    assert with_assumed_order(est, 0.5) is est


def test_standard_part_of_a_pairing(ladder):
    phi = TestFunction((0.4,), 0.3)
    samples = evaluate_over_ladder(lambda lv: pair(sample(lambda x: np.sin(np.pi * x),
                                                          open_box(lv, -1.0, 1.0)), phi), ladder)
    exact, _ = integrate.quad(lambda x: np.sin(np.pi * x) * float(phi(np.array([x]))[0]), 0.1, 0.7,
                              epsabs=1e-14)
    assert standard_part(samples) == pytest.approx(exact, abs=1e-8)
