"""
Expectation records for experiment reports.

Rules:
- Checks NEVER raise on bad observations
- Missing / non-finite observed values fail with a NaN deviation
- Every expectation carries its provenance (published / derived / trivial)
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger("checks")

__all__ = [
    "PUBLISHED",
    "DERIVED",
    "TRIVIAL",
    "PROVENANCES",
    "Check",
    "expect_close",
    "expect_true",
    "expect_at_least",
    "expect_in_range",
    "expect_equal_text",
]

PUBLISHED = "published"
DERIVED = "derived"
TRIVIAL = "trivial"
PROVENANCES = (PUBLISHED, DERIVED, TRIVIAL)


def _is_invalid(x) -> bool:
    if x is None:
        return True
    try:
        return not math.isfinite(float(x))
    except (TypeError, ValueError):
        return True


@dataclass(frozen=True)
class Check:
    name: str
    observed: float | str | None
    expected: float | str | None
    tol: float
    provenance: str
    passed: bool
    deviation: float
    note: str = ""
    informational: bool = False  # reported but never gates the exit status

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def gating(self) -> bool:
        return self.provenance == PUBLISHED and not self.informational

    @property
    def status(self) -> str:
        if self.informational:
            return "INFO"
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "observed": _plain(self.observed),
            "expected": _plain(self.expected),
            "tol": self.tol,
            "provenance": self.provenance,
            "passed": self.passed,
            "deviation": None if np.isnan(self.deviation) else self.deviation,
            "note": self.note,
            "informational": self.informational,
        }


def _plain(x):
    if isinstance(x, (str, type(None))):
        return x
    x = float(x)
    return None if not math.isfinite(x) else x


def _record(check: Check) -> Check:
    if not check.passed and not check.informational:
        log.warning("check failed: %s observed=%s expected=%s deviation=%s (%s)",
                    check.name, check.observed, check.expected, check.deviation, check.provenance)
    return check


def expect_close(name: str, observed, expected: float, tol: float, provenance: str,
                 note: str = "", relative: bool = False, informational: bool = False) -> Check:
    """|observed - expected| <= tol (times max(1, |expected|) when relative)."""
    if _is_invalid(observed):
        return _record(Check(name, None if observed is None else observed, expected, tol,
                             provenance, False, float("nan"), note or "no observed value", informational))
    dev = abs(float(observed) - float(expected))
    bound = tol * max(1.0, abs(float(expected))) if relative else tol
    return _record(Check(name, float(observed), float(expected), tol, provenance,
                         bool(dev <= bound), dev, note, informational))


def expect_at_least(name: str, observed, lower: float, provenance: str, note: str = "",
                    informational: bool = False) -> Check:
    if _is_invalid(observed):
        return _record(Check(name, None, lower, 0.0, provenance, False, float("nan"),
                             note or "no observed value", informational))
    dev = max(0.0, float(lower) - float(observed))
    return _record(Check(name, float(observed), float(lower), 0.0, provenance,
                         bool(float(observed) >= lower), dev, note, informational))


def expect_in_range(name: str, observed, lo: float, hi: float, provenance: str, note: str = "",
                    informational: bool = False) -> Check:
    """lo <= observed <= hi; expected is reported as the range midpoint."""
    mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0
    if _is_invalid(observed):
        return _record(Check(name, None, mid, half, provenance, False, float("nan"),
                             note or "no observed value", informational))
    obs = float(observed)
    return _record(Check(name, obs, mid, half, provenance, bool(lo <= obs <= hi),
                         abs(obs - mid), note, informational))


def expect_true(name: str, condition, provenance: str, note: str = "",
                observed=None, expected=None, informational: bool = False) -> Check:
    ok = bool(condition) if condition is not None else False
    return _record(Check(name, observed, expected, 0.0, provenance, ok,
                         0.0 if ok else float("nan"), note, informational))


def expect_equal_text(name: str, observed: str | None, expected: str, provenance: str,
                      note: str = "", informational: bool = False) -> Check:
    """Exact match of a label such as a classification."""
    ok = observed == expected
    return _record(Check(name, observed, expected, 0.0, provenance, ok,
                         0.0 if ok else float("nan"), note, informational))
