import math

import pytest

from gridfnapp.checks import (
    DERIVED,
    PUBLISHED,
    TRIVIAL,
    Check,
    expect_at_least,
    expect_close,
    expect_equal_text,
    expect_in_range,
    expect_true,
)


@pytest.mark.parametrize("observed", [None, float("nan"), float("inf"), "abc"])
def test_missing_observation_fails_with_nan(observed):
    c = expect_close("x", observed, 1.0, 0.1, PUBLISHED)
    assert c.passed is False
    assert math.isnan(c.deviation)
    assert c.to_dict()["deviation"] is None


def test_close_absolute():
    assert expect_close("x", 1.05, 1.0, 0.1, PUBLISHED).passed
    assert not expect_close("x", 1.2, 1.0, 0.1, PUBLISHED).passed


def test_close_relative_scales_with_expected():
    assert expect_close("x", 1050.0, 1000.0, 0.1, DERIVED, relative=True).passed
    assert not expect_close("x", 1050.0, 1000.0, 0.1, DERIVED).passed


def test_in_range():
    c = expect_in_range("order", 2.0, 1.85, 2.15, DERIVED)
    assert c.passed
    assert c.expected == pytest.approx(2.0)
    assert not expect_in_range("order", 1.5, 1.85, 2.15, DERIVED).passed
    assert expect_in_range("order", 5.0, 1.85, math.inf, DERIVED).passed


def test_at_least():
    assert expect_at_least("margin", 0.0, 0.0, TRIVIAL).passed
    c = expect_at_least("margin", -0.5, 0.0, TRIVIAL)
    assert not c.passed
    assert c.deviation == 0.5


def test_equal_text_and_true():
    assert expect_equal_text("cls", "infinitesimal", "infinitesimal", PUBLISHED).passed
    assert not expect_equal_text("cls", "finite", "infinitesimal", PUBLISHED).passed
    assert expect_true("flag", True, TRIVIAL).passed
    assert not expect_true("flag", None, TRIVIAL).passed


def test_unknown_provenance_rejected():
    with pytest.raises(ValueError):
        Check("x", 1.0, 1.0, 0.0, "guessed", True, 0.0)


@pytest.mark.parametrize("provenance, informational, gating", [
    (PUBLISHED, False, True),
    (PUBLISHED, True, False),
    (DERIVED, False, False),
    (TRIVIAL, False, False),
])
def test_only_published_checks_gate(provenance, informational, gating):
    c = expect_close("x", 2.0, 1.0, 0.1, provenance, informational=informational)
    assert c.gating is gating


def test_status_labels():
    assert expect_close("x", 1.0, 1.0, 0.1, DERIVED).status == "PASS"
    assert expect_close("x", 3.0, 1.0, 0.1, DERIVED).status == "FAIL"
    assert expect_close("x", 3.0, 1.0, 0.1, DERIVED, informational=True).status == "INFO"


def test_to_dict_drops_non_finite_expected():
    d = expect_in_range("order", 3.0, 1.0, math.inf, DERIVED).to_dict()
    assert d["expected"] is None
    assert d["observed"] == 3.0
    assert d["provenance"] == "derived"
