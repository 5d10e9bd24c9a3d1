"""Windowed value distributions of grid functions (Young / parametrized measures).

Each probe keeps the exact values of f inside a small window; masses are
1/(window point count) per point, values beyond the cutoff escape.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from gridfnapp.asymptotics import (
    EXPONENT_THRESHOLD,
    RESIDUAL_BOUND,
    AsymptoticEstimate,
    Ladder,
    fit_power_law,
    map_over_ladder,
)
from gridfnapp.errors import DomainMismatchError, PeriodicityError, WindowUnderflowError
from gridfnapp.grid_core import GridDomain, GridFunction, GridLevel
from gridfnapp.pairing import TestBattery, TestFunction, pair_with_floor

log = logging.getLogger("measures")

__all__ = [
    "DEFAULT_BINS",
    "MIN_WINDOW_POINTS",
    "ValueMeasure",
    "MeasureField",
    "default_cutoff",
    "default_probes",
    "even_tile",
    "tile_probes",
    "extract_measure",
    "periodic_measure",
    "pair_measure",
    "barycentre_check",
    "truncation_ladder",
]

DEFAULT_BINS = 64
MIN_WINDOW_POINTS = 16
PROBES_PER_AXIS = 17
ATOM_MASS = 0.25
_EPS = np.finfo(float).eps


# ---------------------------------------------------------
# VALUE MEASURES
# ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ValueMeasure:
    """Empirical distribution of the retained values of one window."""

    values: np.ndarray  # sorted retained values
    total: int  # window point count, escaped points included
    escaped: int
    cutoff: float
    bins: int = DEFAULT_BINS

    def __post_init__(self):
        vals = np.sort(np.asarray(self.values, dtype=float))
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.total < 1 or vals.size + self.escaped != self.total:
            raise ValueError(f"inconsistent counts: {vals.size} retained + {self.escaped} escaped != {self.total}")

    @classmethod
    def from_values(cls, values, cutoff: float, bins: int = DEFAULT_BINS) -> "ValueMeasure":
        v = np.asarray(values, dtype=float).ravel()
        keep = np.abs(v) <= cutoff
        return cls(v[keep], int(v.size), int(v.size - keep.sum()), float(cutoff), bins)

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(-self.cutoff, self.cutoff, self.bins + 1)

    @property
    def retained_mass(self) -> float:
        return self.values.size / self.total

    @property
    def escaped_mass(self) -> float:
        return 1.0 - self.retained_mass

    def _bin_index(self) -> np.ndarray:
        idx = np.digitize(self.values, self.edges) - 1
        return np.clip(idx, 0, self.bins - 1)

    def masses(self) -> np.ndarray:
        counts = np.bincount(self._bin_index(), minlength=self.bins)
        return counts / self.total

    def bin_means(self) -> np.ndarray:
        idx = self._bin_index()
        sums = np.bincount(idx, weights=self.values, minlength=self.bins)
        cnts = np.bincount(idx, minlength=self.bins)
        with np.errstate(invalid="ignore", divide="ignore"):
            return sums / np.maximum(cnts, 1)

    def atoms(self, threshold: float = ATOM_MASS) -> list[tuple[float, float]]:
        """(location, mass) for every bin holding more than threshold mass."""
        masses, means = self.masses(), self.bin_means()
        return [(float(means[i]), float(masses[i])) for i in np.flatnonzero(masses > threshold)]

    def expectation(self, psi: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integral of psi against the measure; escaped mass contributes nothing."""
        if self.values.size == 0:
            return 0.0
        return float(np.sum(np.asarray(psi(self.values), dtype=float)) / self.total)

    def moment(self, q: int) -> float:
        return self.expectation(lambda v: v**q)

    def barycentre(self) -> float:
        return self.moment(1)

    def to_dict(self) -> dict:
        masses = self.masses()
        return {
            "total": self.total,
            "escaped_mass": self.escaped_mass,
            "cutoff": self.cutoff,
            "atoms": [[loc, m] for loc, m in self.atoms()],
            "bins": [[float(a), float(b), float(m)]
                     for a, b, m in zip(self.edges[:-1], self.edges[1:], masses) if m > 0],
        }


@dataclass(frozen=True, eq=False)
class MeasureField:
    probes: np.ndarray  # (count, dim)
    measures: tuple[ValueMeasure, ...]
    window_width: float
    cutoff: float
    bins: int
    weights: np.ndarray  # quadrature weight per probe
    n_cells: int

    def __len__(self):
        return len(self.measures)

    def expectations(self, psi) -> np.ndarray:
        return np.array([m.expectation(psi) for m in self.measures])

    def escaped_fraction(self, delta: float) -> float:
        return float(np.mean([m.escaped_mass > delta for m in self.measures]))


def default_cutoff(f: GridFunction) -> float:
    vals = np.abs(f.point_values())
    return 8.0 * float(np.median(vals)) + 1.0 if vals.size else 1.0


def default_probes(d: GridDomain, per_axis: int = PROBES_PER_AXIS) -> tuple[np.ndarray, np.ndarray]:
    """Midpoints of a regular per_axis^k subdivision of the domain's bounding box; returns probes, weights."""
    lo, hi = d.bounds()
    axes = [a + (np.arange(per_axis) + 0.5) * (b - a) / per_axis for a, b in zip(lo, hi)]
    grid = np.meshgrid(*axes, indexing="ij")
    probes = np.stack([g.ravel() for g in grid], axis=1)
    cell = float(np.prod((hi - lo) / per_axis))
    return probes, np.full(len(probes), cell)


def even_tile(n_cells: int) -> int:
    return max(2, 2 * int(round(np.sqrt(n_cells) / 2)))


def tile_probes(d: GridDomain, m: int | None = None) -> tuple[np.ndarray, np.ndarray, int]:
    """Centres of the origin-anchored tiles of m points that meet the domain.

    Returns probes, quadrature weights (domain points in the tile times eps^k)
    and m.
    """
    level = d.level
    n, w = level.n_cells, level.half_width
    m = even_tile(n) if m is None else int(m)
    starts = np.arange(-(w // m + 1) * m, w + 1, m)
    centres, weights = [], []
    for corner in np.ndindex(*(starts.size,) * d.dim):
        lo = np.array([starts[c] for c in corner])
        sl = tuple(slice(max(a + w, 0), max(min(a + m + w, level.side), 0)) for a in lo)
        count = int(np.count_nonzero(d.mask[sl]))
        if count:
            centres.append((lo + (m - 1) / 2.0) / n)
            weights.append(count / n**d.dim)
    return np.array(centres), np.array(weights), m


def _window_values(f: GridFunction, probe: np.ndarray, half: float) -> np.ndarray:
    n, w = f.level.n_cells, f.level.half_width
    sl = []
    for p in probe:
        c = p * n
        a = max(int(np.ceil(c - half - 1e-9)) + w, 0)
        b = min(int(np.floor(c + half + 1e-9)) + w, f.level.side - 1)
        sl.append(slice(a, b + 1) if b >= a else slice(0, 0))
    sl = tuple(sl)
    return f.values[sl][f.domain.mask[sl]]


def extract_measure(f: GridFunction, probes=None, window_width: float | None = None,
                    bins: int = DEFAULT_BINS, cutoff: float | None = None,
                    weights=None, min_points: int = MIN_WINDOW_POINTS) -> MeasureField:
    """Per-probe empirical measure of f over the cube |x - p| <= w/2."""
    n = f.level.n_cells
    w = n ** -0.5 if window_width is None else float(window_width)
    if w < 1.0 / n:
        raise WindowUnderflowError(f"window width {w:.3g} is below the step 1/{n}")
    if probes is None:
        probes, weights = default_probes(f.domain)
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.shape[1] != f.dim:
        probes = probes.reshape(-1, f.dim)
    if weights is None:
        weights = np.full(len(probes), np.nan)
    cut = default_cutoff(f) if cutoff is None else float(cutoff)
    half = w * n / 2.0
    measures = []
    for p in probes:
        vals = _window_values(f, p, half)
        if vals.size < min_points:
            raise WindowUnderflowError(
                f"window around {tuple(p)} holds {vals.size} points (< {min_points}); widen it"
            )
        measures.append(ValueMeasure.from_values(vals, cut, bins))
    log.debug("extracted %d measures at N=%d, w=%.4g, cutoff=%.4g", len(measures), n, w, cut)
    return MeasureField(probes, tuple(measures), w, cut, bins, np.asarray(weights, dtype=float), n)


def periodic_measure(f: GridFunction, period_steps: int, cutoff: float | None = None,
                     bins: int = DEFAULT_BINS) -> ValueMeasure:
    """Uniform measure over one period of a 1D periodic grid function."""
    if f.dim != 1:
        raise DomainMismatchError("periodic measure is one-dimensional")
    m = int(period_steps)
    vals = f.point_values()
    if m < 1 or vals.size < m:
        raise PeriodicityError(f"period {m} does not fit in {vals.size} points")
    scale = float(np.max(np.abs(vals), initial=0.0))
    gap = np.abs(vals[m:] - vals[:-m]) if vals.size > m else np.zeros(0)
    tol = 8 * _EPS * max(scale, np.finfo(float).tiny)
    if gap.size and gap.max() > tol:
        i = int(np.argmax(gap))
        raise PeriodicityError(f"f is not {m}-periodic: values {vals[i]} and {vals[i + m]} differ")
    cut = default_cutoff(f) if cutoff is None else float(cutoff)
    return ValueMeasure.from_values(vals[:m], cut, bins)


def pair_measure(field: MeasureField, psi: Callable, phi: TestFunction) -> float:
    """sum over probes of E_p[psi] * phi(p) * weight_p."""
    if np.any(np.isnan(field.weights)):
        raise ValueError("measure field has no quadrature weights (custom probes)")
    cols = [field.probes[:, a] for a in range(field.probes.shape[1])]
    phis = np.asarray(phi(*cols), dtype=float)
    return float(np.sum(field.expectations(psi) * phis * field.weights))


def _truncated_identity(cutoff: float):
    return lambda v: np.where(np.abs(v) <= cutoff, v, 0.0)


def barycentre_check(f_family: Callable[[GridLevel], GridFunction], battery: TestBattery,
                     ladder: Ladder, cutoff: float | None = None,
                     exponent_threshold: float = EXPONENT_THRESHOLD,
                     residual_bound: float = RESIDUAL_BOUND) -> list[AsymptoticEstimate]:
    """Per bump, pair(f, phi) - pair_measure(tile field, tau*chi_cutoff, phi) over the ladder."""

    def per_level(level):
        f = f_family(level)
        probes, weights, m = tile_probes(f.domain)
        field = extract_measure(f, probes, window_width=m / level.n_cells, cutoff=cutoff,
                                weights=weights, min_points=1)
        psi = _truncated_identity(field.cutoff)
        out = []
        for phi in battery:
            direct, floor = pair_with_floor(f, phi)
            out.append((direct - pair_measure(field, psi, phi), floor))
        return out

    rows = map_over_ladder(per_level, ladder)
    sizes = ladder.sizes
    estimates = []
    for j in range(len(battery)):
        vals = [rows[i][j][0] for i in range(len(rows))]
        floor = 4 * max(rows[i][j][1] for i in range(len(rows)))
        estimates.append(fit_power_law(zip(sizes, vals), exponent_threshold, residual_bound, floor))
    return estimates


def truncation_ladder(f: GridFunction, heights: Sequence[float]) -> list[GridFunction]:
    hs = list(heights)
    if any(b <= a for a, b in zip(hs, hs[1:])):
        raise ValueError("truncation heights must increase")
    return [f.clip(-h, h) for h in hs]
