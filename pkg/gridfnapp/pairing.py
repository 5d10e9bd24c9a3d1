"""Test functions, pairings, distribution projection and L2 projection.

Test functions are products of the analytic bump exp(-1/(1-t^2)) with
closed-form derivatives; they are sampled pointwise onto the grid.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.legendre import leggauss
from scipy.stats import qmc

from gridfnapp.asymptotics import (
    EXPONENT_THRESHOLD,
    FINITE,
    INFINITE,
    INFINITESIMAL,
    RESIDUAL_BOUND,
    AsymptoticEstimate,
    Ladder,
    fit_power_law,
    map_over_ladder,
    with_assumed_order,
)
from gridfnapp.errors import (
    DomainMismatchError,
    NotADistributionError,
    QuadratureError,
    SupportError,
)
from gridfnapp.grid_core import (
    GridDomain,
    GridFunction,
    GridLevel,
    MultiIndex,
    _as_alpha,
    diff,
    inner_product,
    sample,
    summation_by_parts_residual,
)

log = logging.getLogger("pairing")

__all__ = [
    "MAX_ORDER",
    "TestFunction",
    "TestBattery",
    "DistributionEstimate",
    "Equivalence",
    "StandardFunctionEstimate",
    "make_battery",
    "centered_battery",
    "pair",
    "pair_with_floor",
    "project_distribution",
    "equivalent",
    "derivative_pairing_residual",
    "l2_project",
    "l2_projection_defect",
    "standard_function",
]

MAX_ORDER = 4
EQUIV_TOL = 1e-6
QUAD_NODES = 4
DEFECT_NODES = 8
_S_MIN = 1e-3  # exp(-1/s) underflows to 0 below this
_EPS = np.finfo(float).eps


# ---------------------------------------------------------
# BUMP PROFILE
# ---------------------------------------------------------

def _bump_polynomials(max_order: int) -> list[Polynomial]:
    """P_n with psi^(n)(t) = psi(t) * P_n(t) / (1 - t^2)^(2n)."""
    t = Polynomial([0.0, 1.0])
    s = 1.0 - t**2
    polys = [Polynomial([1.0])]
    for n in range(max_order):
        p = polys[-1]
        polys.append(p.deriv() * s**2 + (4 * n * t * s - 2 * t) * p)
    return polys


_POLYS = _bump_polynomials(MAX_ORDER)


def _bump(t: np.ndarray, order: int = 0) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    s = 1.0 - t * t
    live = s > _S_MIN
    out = np.zeros(t.shape)
    ts, ss = t[live], s[live]
    val = np.exp(-1.0 / ss)
    if order:
        val = val * _POLYS[order](ts) / ss ** (2 * order)
    out[live] = val
    return out


# ---------------------------------------------------------
# TEST FUNCTIONS
# ---------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """Product bump supported on the cube center +- radius."""

    __test__ = False  # not a pytest class

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        c = tuple(float(x) for x in np.atleast_1d(self.center))
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise SupportError(f"radius must be positive, got {self.radius}")

    @property
    def dim(self) -> int:
        return len(self.center)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def __call__(self, *xs) -> np.ndarray:
        return self.derivative(MultiIndex.zero(self.dim), *xs)

    def derivative(self, alpha, *xs) -> np.ndarray:
        a = _as_alpha(alpha, self.dim)
        if any(c > MAX_ORDER for c in a.components):
            raise ValueError(f"derivatives above order {MAX_ORDER} per axis are not tabulated")
        if len(xs) != self.dim:
            raise DomainMismatchError(f"{self.dim}D test function called with {len(xs)} coordinates")
        out = 1.0
        for x, c, k in zip(xs, self.center, a.components):
            t = (np.asarray(x, dtype=float) - c) / self.radius
            out = out * _bump(t, k) * self.radius ** (-k)
        return np.asarray(out, dtype=float)

    def value_at(self, point) -> float:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        return float(self(*[np.array(v) for v in p]))

    def peak(self) -> float:
        return float(np.exp(-1.0)) ** self.dim

    def inside(self, lo, hi) -> bool:
        s_lo, s_hi = self.support()
        return bool(np.all(s_lo > np.asarray(lo)) and np.all(s_hi < np.asarray(hi)))

    def covers(self, point) -> bool:
        t = (np.atleast_1d(np.asarray(point, dtype=float)) - np.asarray(self.center)) / self.radius
        return bool(np.all(np.abs(t) < 1.0))

    def sample_on(self, d: GridDomain) -> GridFunction:
        return sample(self, d)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class TestBattery:
    __test__ = False

    functions: tuple[TestFunction, ...]
    seed: int = 0

    def __iter__(self):
        return iter(self.functions)

    def __len__(self):
        return len(self.functions)

    def __getitem__(self, i):
        return self.functions[i]


def _avoid_ok(center: np.ndarray, radius: float, avoid: Sequence) -> bool:
    for p in avoid:
        t = np.abs((np.atleast_1d(np.asarray(p, dtype=float)) - center) / radius)
        if not (np.all(t <= 0.5) or np.max(t) >= 1.05):
            return False
    return True


def make_battery(lo, hi, count: int = 12, seed: int = 0, radii=(0.05, 0.4),
                 probes: Iterable | None = None, avoid: Iterable = ()) -> TestBattery:
    """Bumps with log-spaced radii (fractions of diam) and Halton centers inside (lo, hi).

    A bump either keeps every avoid point in its core or leaves it well outside
    its support; probes not covered by any bump get an extra small bump.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    dim = lo.size
    if hi.size != dim or np.any(hi <= lo):
        raise SupportError(f"invalid battery box {lo}..{hi}")
    avoid = [np.atleast_1d(np.asarray(p, dtype=float)) for p in avoid]
    side = hi - lo
    diam = float(np.max(side))
    r_lo, r_hi = radii[0] * diam, radii[1] * diam
    r_cap = 0.45 * float(np.min(side))
    rs = np.minimum(np.geomspace(r_lo, r_hi, count) if count > 1 else np.array([r_lo]), r_cap)

    sampler = qmc.Halton(d=dim, scramble=True, seed=seed)
    funcs = []
    for r in rs:
        a, b = lo + 1.01 * r, hi - 1.01 * r
        center = None
        for _ in range(64):
            u = sampler.random(1)[0]
            cand = a + u * (b - a)
            if _avoid_ok(cand, r, avoid):
                center = cand
                break
        if center is None:
            center = np.clip(avoid[0], a, b)
            log.debug("battery: centering radius %.4g bump on avoid point", r)
        funcs.append(TestFunction(tuple(center), float(r)))

    for p in probes or ():
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if any(f.covers(p) for f in funcs):
            continue
        room = float(np.min(np.concatenate([p - lo, hi - p]))) / 1.01
        r = min(r_lo, room)
        if r > 0:
            funcs.append(TestFunction(tuple(p), r))
    return TestBattery(tuple(funcs), seed)


def centered_battery(center, radii: Sequence[float], seed: int = 0) -> TestBattery:
    c = tuple(np.atleast_1d(np.asarray(center, dtype=float)))
    return TestBattery(tuple(TestFunction(c, float(r)) for r in radii), seed)


# ---------------------------------------------------------
# PAIRINGS
# ---------------------------------------------------------

def _check_support(f: GridFunction, phi: TestFunction):
    if phi.dim != f.dim:
        raise DomainMismatchError(f"{phi.dim}D test function against {f.dim}D grid function")
    w = float(f.level.window)
    if not phi.inside(-w, w):
        raise SupportError(f"support of bump {phi.center} r={phi.radius} escapes the window {w}")


def pair(f: GridFunction, phi: TestFunction) -> float:
    """<f, phi sampled on the domain of f>."""
    _check_support(f, phi)
    return inner_product(f, sample(phi, f.domain))


def pair_with_floor(f: GridFunction, phi: TestFunction) -> tuple[float, float]:
    """Pairing plus its rounding floor 8 eps log2(n) (eps^k sum|f|) max|phi|."""
    _check_support(f, phi)
    phis = sample(phi, f.domain)
    value = inner_product(f, phis)
    n = max(f.domain.count, 2)
    mass = float(np.sum(np.abs(f.values)) / f.level.n_cells**f.dim)
    floor = 8 * _EPS * np.log2(n) * mass * float(np.max(np.abs(phis.values), initial=0.0))
    return value, floor


@dataclass(frozen=True)
class DistributionEstimate:
    battery: TestBattery
    actions: tuple[AsymptoticEstimate, ...]

    @property
    def limits(self) -> list[float]:
        return [a.value for a in self.actions]

    def to_dict(self) -> dict:
        return {
            "battery": [phi.to_dict() for phi in self.battery],
            "actions": [a.to_dict() for a in self.actions],
        }


FamilyLike = Callable[[GridLevel], GridFunction]


def _pairing_table(f_family: FamilyLike, battery: TestBattery, ladder: Ladder):
    """values[j][i], floors[j][i] for bump j on ladder level i."""

    def per_level(level):
        f = f_family(level)
        return [pair_with_floor(f, phi) for phi in battery]

    rows = map_over_ladder(per_level, ladder)
    values = [[rows[i][j][0] for i in range(len(rows))] for j in range(len(battery))]
    floors = [max(rows[i][j][1] for i in range(len(rows))) for j in range(len(battery))]
    return values, floors


def _classify_actions(f_family, battery, ladder, assumed_order, exponent_threshold, residual_bound):
    values, floors = _pairing_table(f_family, battery, ladder)
    sizes = ladder.sizes
    out = []
    for vals, floor in zip(values, floors):
        est = fit_power_law(zip(sizes, vals), exponent_threshold, residual_bound, floor)
        out.append(with_assumed_order(est, assumed_order))
    return out


def project_distribution(f_family: FamilyLike, battery: TestBattery, ladder: Ladder,
                         assumed_order: float | None = None,
                         exponent_threshold: float = EXPONENT_THRESHOLD,
                         residual_bound: float = RESIDUAL_BOUND) -> DistributionEstimate:
    """Per-bump standard parts of <f_N, phi>; any diverging action is an error."""
    actions = _classify_actions(f_family, battery, ladder, assumed_order,
                                exponent_threshold, residual_bound)
    for i, a in enumerate(actions):
        if a.classification == INFINITE:
            raise NotADistributionError(a, i)
    log.debug("projected %d actions: %s", len(actions),
              ", ".join(a.classification for a in actions))
    return DistributionEstimate(battery, tuple(actions))


@dataclass(frozen=True)
class Equivalence:
    """Outcome of an equivalence test: True means "not refuted" by the battery."""

    verdict: bool | None
    evidence: tuple[tuple[AsymptoticEstimate, bool | None], ...]
    tol: float

    @property
    def indeterminate(self) -> bool:
        return self.verdict is None

    def __bool__(self):
        return self.verdict is True


def _action_verdict(a: AsymptoticEstimate, tol: float) -> bool | None:
    if a.classification == INFINITESIMAL:
        return True
    if a.classification == FINITE:
        return abs(a.limit) <= tol
    if a.classification == INFINITE:
        return False
    return None


def equivalent(f_family: FamilyLike, g_family: FamilyLike, battery: TestBattery, ladder: Ladder,
               tol: float = EQUIV_TOL, exponent_threshold: float = EXPONENT_THRESHOLD,
               residual_bound: float = RESIDUAL_BOUND) -> Equivalence:
    """f ~ g unless some bump separates them; unresolved actions make it indeterminate."""
    actions = _classify_actions(lambda lv: f_family(lv) - g_family(lv), battery, ladder, None,
                                exponent_threshold, residual_bound)
    evidence = tuple((a, _action_verdict(a, tol)) for a in actions)
    verdicts = [v for _, v in evidence]
    if any(v is False for v in verdicts):
        verdict = False
    elif any(v is None for v in verdicts):
        verdict = None
    else:
        verdict = True
    return Equivalence(verdict, evidence, tol)


def derivative_pairing_residual(f: GridFunction, phi: TestFunction, axis: int = 0) -> tuple[float, float]:
    """(adjoint residual, distributional residual) for D+ along one axis.

    adjoint:        <D+f, phi> + <f(x+e), D+phi>        exactly 0
    distributional: <D+f, phi> + <f, d phi / dx_axis>   -> 0 over a ladder
    """
    _check_support(f, phi)
    phis = sample(phi, f.domain)
    adjoint = summation_by_parts_residual(f, phis, axis)
    alpha = MultiIndex.unit(f.dim, axis)
    dphi = sample(lambda *xs: phi.derivative(alpha, *xs), f.domain)
    distributional = inner_product(diff(f, axis), phis) + inner_product(f, dphi)
    return adjoint, distributional


# ---------------------------------------------------------
# L2 PROJECTION
# ---------------------------------------------------------

def _cell_nodes(n: int, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes and weights on [0, 1/n] scaled to average (weights sum to 1)."""
    x, w = leggauss(nodes)
    return (x + 1.0) / (2.0 * n), w / 2.0


def _cell_averages(g: Callable, starts: list[np.ndarray], n: int, nodes: int,
                   breakpoints: Sequence[float]) -> np.ndarray:
    """Average of g over [y, y+1/n]^k for every corner y (arrays of equal length)."""
    x, w = _cell_nodes(n, nodes)
    dim = len(starts)
    total = np.zeros(starts[0].shape)
    for combo in np.ndindex(*(nodes,) * dim):
        pts = [starts[a] + x[combo[a]] for a in range(dim)]
        weight = np.prod([w[i] for i in combo])
        total += weight * np.broadcast_to(np.asarray(g(*pts), dtype=float), total.shape)
    if dim == 1 and breakpoints:
        total = _split_straddling(g, starts[0], n, nodes, breakpoints, total)
    return total


def _split_straddling(g, y: np.ndarray, n: int, nodes: int, breakpoints, total):
    """Redo 1D cells that contain a breakpoint, integrating each side separately."""
    xg, wg = leggauss(nodes)
    h = 1.0 / n
    for b in breakpoints:
        hit = np.flatnonzero((y < b) & (b < y + h))
        for i in hit:
            acc = 0.0
            for a0, a1 in ((y[i], b), (b, y[i] + h)):
                pts = a0 + (xg + 1.0) * (a1 - a0) / 2.0
                acc += np.sum(wg * np.asarray(g(pts), dtype=float)) * (a1 - a0) / 2.0
            total[i] = acc * n
    return total


def l2_project(g: Callable, d: GridDomain, nodes: int = QUAD_NODES,
               breakpoints: Sequence[float] = ()) -> GridFunction:
    """Cell average of g over [y, y+eps]^k for every domain point y."""
    starts = d.point_coords()
    avg = _cell_averages(g, starts, d.level.n_cells, nodes, breakpoints)
    if not np.all(np.isfinite(avg)):
        raise QuadratureError(f"non-finite cell average on {d!r}")
    return GridFunction.from_points(d, avg)


def _defect_one(g: Callable, d: GridDomain, nodes: int, breakpoints) -> float:
    """||g - step extension of P(g)||_2 over the cells of the domain points."""
    n, dim = d.level.n_cells, d.dim
    proj = l2_project(g, d, QUAD_NODES, breakpoints)
    starts = d.point_coords()
    pvals = proj.point_values()

    def sq(*xs):
        return (np.asarray(g(*xs), dtype=float) - pvals) ** 2

    # sq broadcasts per-cell projected values against the node coordinates
    avg_sq = _cell_averages(sq, starts, n, nodes, ())
    if dim == 1 and breakpoints:
        avg_sq = _split_defect(g, starts[0], pvals, n, nodes, breakpoints, avg_sq)
    if not np.all(np.isfinite(avg_sq)):
        raise QuadratureError("non-finite defect integrand")
    return float(np.sqrt(np.sum(avg_sq) / n**dim))


def _split_defect(g, y, pvals, n, nodes, breakpoints, avg_sq):
    xg, wg = leggauss(nodes)
    h = 1.0 / n
    for b in breakpoints:
        for i in np.flatnonzero((y < b) & (b < y + h)):
            acc = 0.0
            for a0, a1 in ((y[i], b), (b, y[i] + h)):
                pts = a0 + (xg + 1.0) * (a1 - a0) / 2.0
                vals = (np.asarray(g(pts), dtype=float) - pvals[i]) ** 2
                acc += np.sum(wg * vals) * (a1 - a0) / 2.0
            avg_sq[i] = acc * n
    return avg_sq


def l2_projection_defect(g: Callable, ladder: Ladder,
                         domain: Callable[[GridLevel], GridDomain],
                         nodes: int = DEFECT_NODES, breakpoints: Sequence[float] = (),
                         exponent_threshold: float = EXPONENT_THRESHOLD,
                         residual_bound: float = RESIDUAL_BOUND) -> AsymptoticEstimate:
    """||g - P(g)||_2 per level, fitted over the ladder; expected infinitesimal."""
    vals = map_over_ladder(lambda lv: _defect_one(g, domain(lv), nodes, breakpoints), ladder)
    floor = 64 * _EPS * max(1.0, max(vals))
    return fit_power_law(zip(ladder.sizes, vals), exponent_threshold, residual_bound, floor)


# ---------------------------------------------------------
# STANDARD FUNCTIONS
# ---------------------------------------------------------

@dataclass(frozen=True)
class StandardFunctionEstimate:
    probe: tuple[float, ...]
    value: AsymptoticEstimate
    oscillation: AsymptoticEstimate

    @property
    def s_continuous(self) -> bool:
        return self.oscillation.classification == INFINITESIMAL

    def to_dict(self) -> dict:
        return {
            "probe": list(self.probe),
            "value": self.value.to_dict(),
            "oscillation": self.oscillation.to_dict(),
            "s_continuous": self.s_continuous,
        }


def _probe_stats(f: GridFunction, probe: np.ndarray) -> tuple[float, float]:
    """Value at the nearest grid point and max-min over the window N^-1/2."""
    n, w = f.level.n_cells, f.level.half_width
    centre = np.round(probe * n).astype(int)
    value = f.at(tuple(centre))
    half = 0.5 * np.sqrt(n)
    sl = []
    for c in centre:
        a = max(int(np.ceil(c - half)) + w, 0)
        b = min(int(np.floor(c + half)) + w, f.level.side - 1)
        sl.append(slice(a, b + 1))
    vals = f.values[tuple(sl)][f.domain.mask[tuple(sl)]]
    osc = float(vals.max() - vals.min()) if vals.size else 0.0
    return value, osc


def standard_function(f_family: FamilyLike, probes, ladder: Ladder,
                      exponent_threshold: float = EXPONENT_THRESHOLD,
                      residual_bound: float = RESIDUAL_BOUND) -> list[StandardFunctionEstimate]:
    """Per-probe standard value and S-continuity diagnostic."""
    probes = [np.atleast_1d(np.asarray(p, dtype=float)) for p in probes]

    def per_level(level):
        f = f_family(level)
        return [_probe_stats(f, p) for p in probes]

    rows = map_over_ladder(per_level, ladder)
    sizes = ladder.sizes
    out = []
    for j, p in enumerate(probes):
        vals = [rows[i][j][0] for i in range(len(rows))]
        oscs = [rows[i][j][1] for i in range(len(rows))]
        scale = max(1.0, max(abs(v) for v in vals))
        value = fit_power_law(zip(sizes, vals), exponent_threshold, residual_bound, 64 * _EPS * scale)
        osc = fit_power_law(zip(sizes, oscs), exponent_threshold, residual_bound, 64 * _EPS * scale)
        if osc.classification != INFINITESIMAL:
            log.info("probe %s: oscillation %s, not S-continuous", tuple(p), osc.classification)
        out.append(StandardFunctionEstimate(tuple(float(x) for x in p), value, osc))
    return out
