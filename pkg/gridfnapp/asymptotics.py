"""Ladder evaluation, power-law classification and standard parts.

A quantity q(N) sampled on nested grid levels is fitted as c*N^p and
classified infinitesimal / finite / infinite / unresolved. Finite quantities
get a limit by Richardson extrapolation on the two finest levels.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from gridfnapp.errors import LadderError, LadderEvaluationError, StandardPartError
from gridfnapp.grid_core import DEFAULT_BASE, GridLevel, make_level

log = logging.getLogger("asymptotics")

DEBUG = False

__all__ = [
    "INFINITESIMAL",
    "FINITE",
    "INFINITE",
    "UNRESOLVED",
    "EXPONENT_THRESHOLD",
    "RESIDUAL_BOUND",
    "LIMIT_FRACTION",
    "Ladder",
    "AsymptoticEstimate",
    "make_ladder",
    "worker_count",
    "map_over_ladder",
    "evaluate_over_ladder",
    "richardson_limit",
    "fit_power_law",
    "standard_part",
    "with_assumed_order",
]

INFINITESIMAL = "infinitesimal"
FINITE = "finite"
INFINITE = "infinite"
UNRESOLVED = "unresolved"

EXPONENT_THRESHOLD = 0.2
RESIDUAL_BOUND = 1e-2
# a decaying quantity whose extrapolated limit is below this fraction of its last sample tends to 0
LIMIT_FRACTION = 0.1

_EPS = np.finfo(float).eps


def _log(section: str, msg: str):
    if DEBUG:
        log.debug("[%s] %s", section, msg)


# ---------------------------------------------------------
# LADDERS
# ---------------------------------------------------------

@dataclass(frozen=True)
class Ladder:
    """Nested grid levels with strictly increasing N."""

    levels: tuple[GridLevel, ...]

    def __post_init__(self):
        levels = tuple(self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 3:
            raise LadderError(f"a ladder needs at least 3 levels, got {len(levels)}")
        for a, b in zip(levels, levels[1:]):
            if b.n_cells <= a.n_cells or b.n_cells % a.n_cells:
                raise LadderError(f"levels not nested: N={a.n_cells} then N={b.n_cells}")

    @property
    def sizes(self) -> list[int]:
        return [lv.n_cells for lv in self.levels]

    @property
    def finest(self) -> GridLevel:
        return self.levels[-1]

    def __iter__(self):
        return iter(self.levels)

    def __len__(self):
        return len(self.levels)


def make_ladder(levels: int = 4, base: int = DEFAULT_BASE, window=1,
                start_exponent: int = 0, stride: int = 1) -> Ladder:
    """N = base * 2**(start_exponent + stride*i) for i in range(levels)."""
    if stride < 1:
        raise LadderError(f"stride must be >= 1, got {stride}")
    return Ladder(tuple(
        make_level(start_exponent + stride * i, base, window) for i in range(levels)
    ))


def worker_count() -> int:
    """Thread cap from GRIDFN_THREADS, defaulting to the CPU count."""
    raw = os.environ.get("GRIDFN_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring GRIDFN_THREADS=%r (not an integer)", raw)
    return max(1, os.cpu_count() or 1)


def map_over_ladder(func: Callable[[GridLevel], object], ladder: Ladder | Sequence[GridLevel]) -> list:
    """Apply func to every level concurrently; results keep ladder order."""
    levels = list(ladder)

    def run(level):
        try:
            return func(level)
        except Exception as e:
            raise LadderEvaluationError(level.n_cells, e) from e

    workers = min(worker_count(), len(levels))
    if workers <= 1:
        return [run(lv) for lv in levels]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, levels))


def evaluate_over_ladder(quantity: Callable[[GridLevel], float], ladder: Ladder) -> list[tuple[int, float]]:
    values = map_over_ladder(quantity, ladder)
    samples = [(lv.n_cells, float(v)) for lv, v in zip(ladder, values)]
    _log("ladder", f"samples={samples}")
    return samples


# ---------------------------------------------------------
# ESTIMATES
# ---------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticEstimate:
    exponent: float
    coefficient: float
    limit: float | None
    fit_residual: float
    classification: str
    exponent_threshold: float = EXPONENT_THRESHOLD
    residual_bound: float = RESIDUAL_BOUND
    samples: tuple[tuple[int, float], ...] = field(default=(), repr=False)
    order: float | None = None

    @property
    def is_finite(self) -> bool:
        return self.classification in (FINITE, INFINITESIMAL)

    @property
    def value(self) -> float:
        return float("nan") if self.limit is None else self.limit

    def to_dict(self) -> dict:
        return {
            "classification": self.classification,
            "exponent": _json_float(self.exponent),
            "coefficient": _json_float(self.coefficient),
            "limit": None if self.limit is None else _json_float(self.limit),
            "order": None if self.order is None else _json_float(self.order),
            "fit_residual": _json_float(self.fit_residual),
            "exponent_threshold": self.exponent_threshold,
            "residual_bound": self.residual_bound,
            "samples": [[n, _json_float(v)] for n, v in self.samples],
        }


def _json_float(x: float):
    x = float(x)
    if np.isnan(x):
        return None
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def richardson_limit(v_coarse: float, v_fine: float, n_coarse: int, n_fine: int, order: float) -> float:
    """Eliminate a c*N^-order term from two samples."""
    f = (n_fine / n_coarse) ** order
    return (f * v_fine - v_coarse) / (f - 1.0)


def _unpack(samples) -> tuple[np.ndarray, np.ndarray]:
    pairs = list(samples)
    if len(pairs) < 3:
        raise LadderError(f"need at least 3 samples, got {len(pairs)}")
    ns = np.array([p[0] for p in pairs], dtype=float)
    vs = np.array([p[1] for p in pairs], dtype=float)
    if np.any(np.diff(ns) <= 0):
        raise LadderError("sample levels must increase strictly")
    return ns, vs


def _linfit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least squares y = a*x + b; returns slope, intercept, rms residual."""
    a, b = np.polyfit(x, y, 1)
    res = y - (a * x + b)
    return float(a), float(b), float(np.sqrt(np.mean(res**2)))


def _envelope_decays(ns: np.ndarray, mags: np.ndarray, threshold: float, floor: float) -> bool:
    """Running max from the right decays with slope < -threshold."""
    env = np.maximum.accumulate(mags[::-1])[::-1]
    env = np.maximum(env, max(floor, np.finfo(float).tiny))
    if not env[-1] < env[0]:
        return False
    slope, _, _ = _linfit(np.log(ns), np.log(env))
    return slope < -threshold


def _trailing_limit(ns: np.ndarray, vs: np.ndarray, logn: np.ndarray, bound: float):
    """Richardson limit from monotone differences fitted by a clean power.

    Returns (limit, order, difference-fit residual), or None when the
    differences do not allow it.
    """
    d = np.diff(vs)
    if not (np.all(d > 0) or np.all(d < 0)):
        return None
    q, _, res_d = _linfit(logn[1:], np.log(np.abs(d)))
    if q >= 0 or res_d > bound:
        return None
    order = -q
    return richardson_limit(vs[-2], vs[-1], ns[-2], ns[-1], order), order, res_d


def fit_power_law(samples: Iterable[tuple[int, float]],
                  exponent_threshold: float = EXPONENT_THRESHOLD,
                  residual_bound: float = RESIDUAL_BOUND,
                  noise_floor: float = 0.0) -> AsymptoticEstimate:
    """Fit |q(N)| ~ c*N^p and classify.

    Values at or below noise_floor count as zero. Finite quantities get the
    trailing-pair Richardson limit with the order fitted from successive
    differences. A decaying magnitude is infinitesimal only when that limit
    is indistinguishable from 0; otherwise the quantity is finite with
    exponent 0 and the decay rate reported as the correction order.
    """
    ns, vs = _unpack(samples)
    pairs = tuple((int(n), float(v)) for n, v in zip(ns, vs))
    thr, bound = exponent_threshold, residual_bound

    def est(p, c, limit, res, cls, order=None):
        _log("fit", f"{cls} p={p:.4g} limit={limit} res={res:.3g}")
        return AsymptoticEstimate(float(p), float(c), None if limit is None else float(limit),
                                  float(res), cls, thr, bound, pairs, order)

    if not np.all(np.isfinite(vs)):
        return est(np.nan, np.nan, None, np.inf, UNRESOLVED)

    floor = max(float(noise_floor), 0.0)
    mags = np.abs(vs)
    scale = float(mags.max())
    logn = np.log(ns)

    if scale <= floor:
        return est(-np.inf, 0.0, 0.0, 0.0, INFINITESIMAL)

    if np.ptp(vs) <= max(floor, 8 * _EPS * scale):
        return est(0.0, vs[-1], vs[-1], 0.0, FINITE)

    if mags[-1] <= floor:
        above = mags > floor
        if above.sum() >= 2:
            p, b, res = _linfit(logn[above], np.log(mags[above]))
            return est(min(p, -thr - 1.0), np.exp(b), 0.0, res, INFINITESIMAL)
        return est(-np.inf, 0.0, 0.0, 0.0, INFINITESIMAL)

    safe = np.maximum(mags, max(floor, np.finfo(float).tiny))
    p, b, res_m = _linfit(logn, np.log(safe))
    c = float(np.exp(b))

    if p > thr:
        same_sign = np.all(vs > 0) or np.all(vs < 0)
        if same_sign and res_m <= bound:
            return est(p, c, None, res_m, INFINITE)
        return est(p, c, None, max(res_m, bound * (1 + 1e-9)), UNRESOLVED)

    if p < -thr:
        trailing = _trailing_limit(ns, vs, logn, bound)
        if trailing is not None:
            limit, order, res_d = trailing
            if abs(limit) > max(floor, LIMIT_FRACTION * mags[-1]):
                # decays onto a nonzero constant
                return est(0.0, limit, limit, res_d, FINITE, order)
            return est(p, c, 0.0, res_m, INFINITESIMAL)
        if res_m <= bound or _envelope_decays(ns, mags, thr, floor):
            return est(p, c, 0.0, res_m, INFINITESIMAL)
        return est(p, c, None, res_m, UNRESOLVED)

    # |p| <= threshold: finite candidate
    d = np.diff(vs)
    tol_eq = max(floor, 8 * _EPS * scale)
    if abs(d[-1]) <= tol_eq:
        return est(p, c, vs[-1], 0.0, FINITE)

    trailing = _trailing_limit(ns, vs, logn, bound)
    if trailing is not None:
        limit, order, res_d = trailing
        return est(p, c, limit, res_d, FINITE, order)

    if _envelope_decays(ns[1:], np.abs(d), thr, tol_eq):
        return est(p, c, vs[-1], res_m, FINITE)

    misfit = float(np.sqrt(np.mean((vs - vs[-1]) ** 2)) / scale)
    return est(p, c, None, max(res_m, misfit, bound * (1 + 1e-9)), UNRESOLVED)


def standard_part(samples, assumed_order: float | None = None, **fit_kwargs) -> float:
    """Extrapolated limit of a finite quantity.

    With assumed_order the trailing pair is extrapolated with that order
    instead of the fitted one.
    """
    if isinstance(samples, AsymptoticEstimate):
        estimate = samples
    else:
        estimate = fit_power_law(samples, **fit_kwargs)
    if estimate.classification not in (FINITE, INFINITESIMAL):
        raise StandardPartError(estimate)
    if assumed_order is None or estimate.classification == INFINITESIMAL:
        return float(estimate.limit)
    if not estimate.samples:
        raise StandardPartError(estimate, "assumed order needs the raw samples")
    (nc, vc), (nf, vf) = estimate.samples[-2], estimate.samples[-1]
    return float(richardson_limit(vc, vf, nc, nf, assumed_order))


def with_assumed_order(estimate: AsymptoticEstimate, assumed_order: float | None) -> AsymptoticEstimate:
    """Replace the limit of a finite estimate by the fixed-order extrapolation."""
    if assumed_order is None or estimate.classification != FINITE:
        return estimate
    return replace(estimate, limit=standard_part(estimate, assumed_order), order=float(assumed_order))
