"""Grid levels, discretized domains, grid functions and finite differences.

A grid function lives on a dense index box covering the window [-L, L]^k at
step 1/N and is zero outside its domain mask. Differences multiply by the
integer N and integrals divide by N**k.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from gridfnapp.errors import (
    DomainMismatchError,
    EmptyDomainError,
    GridAlignmentError,
    LevelMismatchError,
    NormOrderError,
    SamplingError,
)

log = logging.getLogger("grid_core")

__all__ = [
    "DEFAULT_BASE",
    "MAX_DIM",
    "GridLevel",
    "GridDomain",
    "GridFunction",
    "MultiIndex",
    "make_level",
    "discretize",
    "open_box",
    "closed_box",
    "ball",
    "whole_window",
    "lambda_boundary",
    "shifted_interior",
    "shifted_boundary",
    "sample",
    "diff",
    "alpha_diff",
    "grid_integral",
    "inner_product",
    "lp_norm",
    "shift",
    "product_rule_residual",
    "summation_by_parts_residual",
    "fundamental_theorem_residual",
    "step_extension_eval",
    "step_extension",
]

DEFAULT_BASE = 720
MAX_DIM = 3
_WINDOW_DENOMINATOR = 10**6
_GRID_SNAP = 9  # decimals kept when snapping x*N onto the integer lattice


# ---------------------------------------------------------
# LEVELS
# ---------------------------------------------------------

@dataclass(frozen=True)
class GridLevel:
    """One finite grid: step 1/N over the box [-window, window]^k."""

    n_cells: int
    window: Fraction
    base: int = field(default=DEFAULT_BASE, compare=False)
    exponent: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.n_cells < 1:
            raise GridAlignmentError(f"n_cells must be positive, got {self.n_cells}")
        if self.window <= 0:
            raise GridAlignmentError(f"window must be positive, got {self.window}")
        if (self.window * self.n_cells).denominator != 1:
            raise GridAlignmentError(
                f"window {self.window} is not aligned with N={self.n_cells} "
                f"(window*N = {self.window * self.n_cells})"
            )

    @property
    def step(self) -> float:
        return 1.0 / self.n_cells

    @property
    def half_width(self) -> int:
        """W = window*N, the largest index on each axis."""
        return int(self.window * self.n_cells)

    @property
    def side(self) -> int:
        return 2 * self.half_width + 1

    def axis_coords(self) -> np.ndarray:
        w = self.half_width
        return np.arange(-w, w + 1) / self.n_cells

    def box_shape(self, dim: int) -> tuple[int, ...]:
        return (self.side,) * dim

    def __str__(self):
        return f"N={self.n_cells} (window {self.window})"


def _as_window(window) -> Fraction:
    if isinstance(window, Fraction):
        return window
    if isinstance(window, str):
        return Fraction(window)
    return Fraction(window).limit_denominator(_WINDOW_DENOMINATOR)


def make_level(resolution_exponent: int, base: int = DEFAULT_BASE, window=1) -> GridLevel:
    """Level with N = base * 2**resolution_exponent."""
    if base < 1:
        raise GridAlignmentError(f"base must be >= 1, got {base}")
    if resolution_exponent < 0:
        raise GridAlignmentError(f"exponent must be >= 0, got {resolution_exponent}")
    n = base * 2**resolution_exponent
    return GridLevel(n, _as_window(window), base, resolution_exponent)


# ---------------------------------------------------------
# MULTI-INDICES
# ---------------------------------------------------------

@dataclass(frozen=True)
class MultiIndex:
    components: tuple[int, ...]

    def __post_init__(self):
        comps = tuple(int(c) for c in self.components)
        if any(c < 0 for c in comps):
            raise ValueError(f"multi-index components must be >= 0: {comps}")
        object.__setattr__(self, "components", comps)

    @classmethod
    def unit(cls, dim: int, axis: int) -> "MultiIndex":
        return cls(tuple(1 if i == axis else 0 for i in range(dim)))

    @classmethod
    def zero(cls, dim: int) -> "MultiIndex":
        return cls((0,) * dim)

    @property
    def order(self) -> int:
        return sum(self.components)

    @property
    def dim(self) -> int:
        return len(self.components)

    def minus(self, axis: int) -> "MultiIndex":
        if self.components[axis] < 1:
            raise ValueError(f"alpha - e_{axis} undefined for {self.components}")
        c = list(self.components)
        c[axis] -= 1
        return MultiIndex(tuple(c))

    def __iter__(self):
        return iter(self.components)

    def __len__(self):
        return len(self.components)


def _as_alpha(alpha, dim: int) -> MultiIndex:
    if isinstance(alpha, MultiIndex):
        a = alpha
    elif isinstance(alpha, int):
        a = MultiIndex((alpha,))
    else:
        a = MultiIndex(tuple(alpha))
    if a.dim != dim:
        raise DomainMismatchError(f"multi-index {a.components} does not match dimension {dim}")
    return a


# ---------------------------------------------------------
# BOX HELPERS
# ---------------------------------------------------------

def _shifted(arr: np.ndarray, steps: int, axis: int, fill=0) -> np.ndarray:
    """out[x] = arr[x + steps*e_axis]; reads outside the box give fill."""
    if steps == 0:
        return arr.copy()
    out = np.full_like(arr, fill)
    n = arr.shape[axis]
    if abs(steps) >= n:
        return out
    src = [slice(None)] * arr.ndim
    dst = [slice(None)] * arr.ndim
    if steps > 0:
        src[axis] = slice(steps, None)
        dst[axis] = slice(None, n - steps)
    else:
        src[axis] = slice(None, n + steps)
        dst[axis] = slice(-steps, None)
    out[tuple(dst)] = arr[tuple(src)]
    return out


def _shifted_multi(arr: np.ndarray, offsets: Sequence[int], fill=0) -> np.ndarray:
    out = arr
    for axis, s in enumerate(offsets):
        if s:
            out = _shifted(out, s, axis, fill)
    return out if out is not arr else arr.copy()


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------
# DOMAINS
# ---------------------------------------------------------

class GridDomain:
    """Finite point set Omega_Lambda stored as a boolean mask over the level box."""

    __slots__ = ("level", "dim", "mask", "membership")

    def __init__(self, level: GridLevel, dim: int, mask: np.ndarray,
                 membership: Callable | None = None):
        if not 1 <= dim <= MAX_DIM:
            raise DomainMismatchError(f"dimension must be in 1..{MAX_DIM}, got {dim}")
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != level.box_shape(dim):
            raise DomainMismatchError(
                f"mask shape {mask.shape} does not match box {level.box_shape(dim)}"
            )
        self.level = level
        self.dim = dim
        self.mask = _frozen(mask.copy())
        self.membership = membership

    # --- geometry ---
    def coords(self) -> list[np.ndarray]:
        """Open-grid coordinate arrays of the full box, broadcastable against the mask."""
        x = self.level.axis_coords()
        out = []
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = x.size
            out.append(x.reshape(shape))
        return out

    def point_coords(self) -> list[np.ndarray]:
        """Coordinates of the domain points, one flat array per axis (C order)."""
        idx = np.nonzero(self.mask)
        w = self.level.half_width
        return [(i - w) / self.level.n_cells for i in idx]

    @property
    def indices(self) -> np.ndarray:
        """Integer lattice indices (count, dim) of the domain points."""
        return np.argwhere(self.mask) - self.level.half_width

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    def __len__(self):
        return self.count

    def is_empty(self) -> bool:
        return self.count == 0

    def contains_index(self, index: Sequence[int]) -> bool:
        w = self.level.half_width
        pos = tuple(int(i) + w for i in index)
        if any(p < 0 or p >= self.level.side for p in pos):
            return False
        return bool(self.mask[pos])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Bounding box (lo, hi) of the domain points in coordinates."""
        idx = self.indices
        if idx.size == 0:
            raise EmptyDomainError("empty domain has no bounds")
        n = self.level.n_cells
        return idx.min(axis=0) / n, idx.max(axis=0) / n

    def with_mask(self, mask: np.ndarray) -> "GridDomain":
        return GridDomain(self.level, self.dim, mask, None)

    def same_as(self, other: "GridDomain") -> bool:
        return (self.level == other.level and self.dim == other.dim
                and np.array_equal(self.mask, other.mask))

    def __repr__(self):
        return f"GridDomain({self.level}, dim={self.dim}, points={self.count})"


def _eval_membership(membership: Callable, coords: list[np.ndarray], shape) -> np.ndarray:
    try:
        res = np.asarray(membership(*coords), dtype=bool)
        if res.shape != shape:
            res = np.broadcast_to(res, shape)
        return res
    except (TypeError, ValueError):
        # scalar predicate
        vec = np.vectorize(lambda *x: bool(membership(*x)), otypes=[bool])
        return vec(*np.broadcast_arrays(*coords))


def discretize(membership: Callable, level: GridLevel, dim: int = 1) -> GridDomain:
    """All window grid points satisfying the membership predicate."""
    if not 1 <= dim <= MAX_DIM:
        raise DomainMismatchError(f"dimension must be in 1..{MAX_DIM}, got {dim}")
    shape = level.box_shape(dim)
    proto = GridDomain(level, dim, np.zeros(shape, dtype=bool))
    mask = _eval_membership(membership, proto.coords(), shape)
    if not mask.any():
        raise EmptyDomainError(f"no grid point of {level} satisfies the membership predicate")
    log.debug("discretized %d points at %s (dim %d)", int(mask.sum()), level, dim)
    return GridDomain(level, dim, mask, membership)


def _bounds_per_axis(lo, hi, dim):
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (dim,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (dim,))
    return lo, hi


def open_box(level: GridLevel, lo=0.0, hi=1.0, dim: int = 1) -> GridDomain:
    lo, hi = _bounds_per_axis(lo, hi, dim)

    def member(*xs):
        m = True
        for x, a, b in zip(xs, lo, hi):
            m = m & (x > a) & (x < b)
        return m

    return discretize(member, level, dim)


def closed_box(level: GridLevel, lo=0.0, hi=1.0, dim: int = 1) -> GridDomain:
    lo, hi = _bounds_per_axis(lo, hi, dim)

    def member(*xs):
        m = True
        for x, a, b in zip(xs, lo, hi):
            m = m & (x >= a) & (x <= b)
        return m

    return discretize(member, level, dim)


def ball(level: GridLevel, center=0.0, radius=1.0, dim: int = 1) -> GridDomain:
    c = np.broadcast_to(np.asarray(center, dtype=float), (dim,))

    def member(*xs):
        r2 = 0.0
        for x, a in zip(xs, c):
            r2 = r2 + (x - a) ** 2
        return r2 < radius**2

    return discretize(member, level, dim)


def whole_window(level: GridLevel, dim: int = 1) -> GridDomain:
    return GridDomain(level, dim, np.ones(level.box_shape(dim), dtype=bool), lambda *xs: True)


def lambda_boundary(d: GridDomain) -> GridDomain:
    """Points of d with a sup-norm neighbour (distance <= eps) outside d or the window."""
    structure = np.ones((3,) * d.dim, dtype=bool)
    interior = ndimage.binary_erosion(d.mask, structure=structure, border_value=0)
    return d.with_mask(d.mask & ~interior)


def shifted_interior(d: GridDomain, alpha) -> GridDomain:
    """{x in d : x + alpha*eps in d}."""
    a = _as_alpha(alpha, d.dim)
    if a.order == 0:
        return d
    return d.with_mask(d.mask & _shifted_multi(d.mask, a.components, False))


def shifted_boundary(d: GridDomain, alpha) -> GridDomain:
    """{x in d : x + alpha*eps in the Lambda-boundary of d}."""
    a = _as_alpha(alpha, d.dim)
    boundary = lambda_boundary(d).mask
    return d.with_mask(d.mask & _shifted_multi(boundary, a.components, False))


# ---------------------------------------------------------
# GRID FUNCTIONS
# ---------------------------------------------------------

class GridFunction:
    """Real values on a GridDomain, stored densely over the box and zero outside."""

    __slots__ = ("domain", "values")

    def __init__(self, domain: GridDomain, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != domain.mask.shape:
            raise DomainMismatchError(
                f"values shape {values.shape} does not match box {domain.mask.shape}"
            )
        self.domain = domain
        self.values = _frozen(np.where(domain.mask, values, 0.0))

    # --- constructors ---
    @classmethod
    def zeros(cls, domain: GridDomain) -> "GridFunction":
        return cls(domain, np.zeros(domain.mask.shape))

    @classmethod
    def constant(cls, domain: GridDomain, c: float) -> "GridFunction":
        return cls(domain, np.full(domain.mask.shape, float(c)))

    @classmethod
    def from_points(cls, domain: GridDomain, point_values) -> "GridFunction":
        """Build from a flat array ordered like domain.indices."""
        arr = np.zeros(domain.mask.shape)
        arr[domain.mask] = np.asarray(point_values, dtype=float)
        return cls(domain, arr)

    # --- access ---
    @property
    def level(self) -> GridLevel:
        return self.domain.level

    @property
    def dim(self) -> int:
        return self.domain.dim

    def point_values(self) -> np.ndarray:
        return self.values[self.domain.mask]

    def at(self, index: Sequence[int] | int) -> float:
        """Value at a lattice index; 0 outside the domain or the window."""
        if isinstance(index, (int, np.integer)):
            index = (int(index),)
        w = self.level.half_width
        pos = tuple(int(i) + w for i in index)
        if len(pos) != self.dim or any(p < 0 or p >= self.level.side for p in pos):
            return 0.0
        return float(self.values[pos])

    def at_point(self, x) -> float:
        """Value at a grid point given in coordinates."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        scaled = np.round(xs * self.level.n_cells, _GRID_SNAP)
        idx = np.round(scaled)
        if np.any(np.abs(scaled - idx) > 0):
            raise SamplingError(f"{tuple(xs)} is not a grid point of {self.level}")
        return self.at(tuple(int(i) for i in idx))

    # --- algebra ---
    def _check(self, other: "GridFunction"):
        if self.level != other.level:
            raise LevelMismatchError(f"{self.level} vs {other.level}")
        if self.dim != other.dim:
            raise DomainMismatchError(f"dimension {self.dim} vs {other.dim}")

    def _union(self, other: "GridFunction") -> GridDomain:
        if self.domain is other.domain or np.array_equal(self.domain.mask, other.domain.mask):
            return self.domain
        return self.domain.with_mask(self.domain.mask | other.domain.mask)

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self._union(other), self.values + other.values)
        return GridFunction(self.domain, self.values + float(other))

    __radd__ = __add__

    def __neg__(self):
        return GridFunction(self.domain, -self.values)

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self._union(other), self.values - other.values)
        return GridFunction(self.domain, self.values - float(other))

    def __rsub__(self, other):
        return GridFunction(self.domain, float(other) - self.values)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            mask = self.domain.mask & other.domain.mask
            dom = self.domain if np.array_equal(mask, self.domain.mask) else self.domain.with_mask(mask)
            return GridFunction(dom, self.values * other.values)
        return GridFunction(self.domain, self.values * float(other))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return GridFunction(self.domain, self.values / float(c))

    def __pow__(self, p):
        return GridFunction(self.domain, np.power(self.values, p))

    def map(self, func: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        """Pointwise composition x -> func(f(x)) on the domain."""
        out = np.zeros_like(self.values)
        out[self.domain.mask] = func(self.point_values())
        return GridFunction(self.domain, out)

    def clip(self, lo: float, hi: float) -> "GridFunction":
        return GridFunction(self.domain, np.clip(self.values, lo, hi))

    def restrict(self, domain: GridDomain) -> "GridFunction":
        if domain.level != self.level or domain.dim != self.dim:
            raise DomainMismatchError("restriction target lives on another grid")
        mask = self.domain.mask & domain.mask
        return GridFunction(self.domain.with_mask(mask), self.values)

    def __repr__(self):
        return f"GridFunction({self.domain!r})"


def sample(func: Callable, d: GridDomain) -> GridFunction:
    """Pointwise restriction of a real function to the domain points."""
    coords = d.point_coords()
    vals = np.asarray(func(*coords), dtype=float)
    vals = np.broadcast_to(vals, coords[0].shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        first = tuple(float(c[bad][0]) for c in coords)
        raise SamplingError(f"non-finite value at grid point {first} ({int(bad.sum())} points)")
    return GridFunction.from_points(d, vals)


# ---------------------------------------------------------
# FINITE DIFFERENCES
# ---------------------------------------------------------

def _diff_mask(mask: np.ndarray, axis: int, direction: str) -> np.ndarray:
    s = 1 if direction == "forward" else -1
    return mask & _shifted(mask, s, axis, False)


def _check_direction(direction: str):
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")


def diff(f: GridFunction, axis: int = 0, direction: str = "forward") -> GridFunction:
    """Forward (f(x+e)-f(x))*N or backward (f(x)-f(x-e))*N along one axis."""
    _check_direction(direction)
    if not 0 <= axis < f.dim:
        raise DomainMismatchError(f"axis {axis} out of range for dimension {f.dim}")
    n = f.level.n_cells
    mask = _diff_mask(f.domain.mask, axis, direction)
    if direction == "forward":
        vals = (_shifted(f.values, 1, axis) - f.values) * n
    else:
        vals = (f.values - _shifted(f.values, -1, axis)) * n
    return GridFunction(f.domain.with_mask(mask), vals)


def alpha_diff(f: GridFunction, alpha, direction: str = "forward") -> GridFunction:
    a = _as_alpha(alpha, f.dim)
    out = f
    for axis, count in enumerate(a.components):
        for _ in range(count):
            out = diff(out, axis, direction)
    return out


# ---------------------------------------------------------
# INTEGRALS AND NORMS
# ---------------------------------------------------------

def _region_mask(f: GridFunction, region) -> np.ndarray:
    if region is None:
        return f.domain.mask
    mask = region.mask if isinstance(region, GridDomain) else np.asarray(region, dtype=bool)
    if mask.shape != f.domain.mask.shape:
        raise DomainMismatchError("region does not live on the function's box")
    return f.domain.mask & mask


def grid_integral(f: GridFunction, region=None) -> float:
    """eps^k times the sum of f over the region (default: its domain)."""
    mask = _region_mask(f, region)
    return float(np.sum(f.values[mask]) / f.level.n_cells**f.dim)


def inner_product(f: GridFunction, g: GridFunction) -> float:
    f._check(g)
    return float(np.sum(f.values * g.values) / f.level.n_cells**f.dim)


def lp_norm(f: GridFunction, p: float) -> float:
    if p != np.inf and not p >= 1:
        raise NormOrderError(f"L^p norm needs p >= 1 or p = inf, got {p}")
    vals = np.abs(f.point_values())
    if vals.size == 0:
        return 0.0
    if p == np.inf:
        return float(vals.max())
    if p == 1:
        return float(np.sum(vals) / f.level.n_cells**f.dim)
    return float((np.sum(vals**p) / f.level.n_cells**f.dim) ** (1.0 / p))


def shift(f: GridFunction, steps: int, axis: int = 0) -> GridFunction:
    """x -> f(x + steps*eps*e_axis) on the same domain; reads outside it are 0."""
    if steps == 0:
        return f
    return GridFunction(f.domain, _shifted(f.values, int(steps), axis))


# ---------------------------------------------------------
# EXACT DISCRETE IDENTITIES
# ---------------------------------------------------------

def product_rule_residual(f: GridFunction, g: GridFunction, form: int = 2,
                          axis: int = 0, direction: str = "forward") -> GridFunction:
    """Difference of f*g minus one of its expanded forms; identically zero.

    forward:  form 2 = f(x+e)D+g + g D+f,  form 3 = f D+g + g(x+e) D+f
    backward: form 2 = f D-g + g(x-e) D-f, form 3 = f(x-e) D-g + g D-f
    form 1 is the defining quotient.
    """
    _check_direction(direction)
    if form not in (1, 2, 3):
        raise ValueError(f"form must be 1, 2 or 3, got {form}")
    f._check(g)
    if not f.domain.same_as(g.domain):
        raise DomainMismatchError("product rule needs a shared domain")
    lhs = diff(f * g, axis, direction)
    s = 1 if direction == "forward" else -1
    n = f.level.n_cells
    if form == 1:
        fs, gs = _shifted(f.values, s, axis), _shifted(g.values, s, axis)
        rhs = s * (fs * gs - f.values * g.values) * n
    else:
        df, dg = diff(f, axis, direction).values, diff(g, axis, direction).values
        fs, gs = _shifted(f.values, s, axis), _shifted(g.values, s, axis)
        if (form == 2) == (direction == "forward"):
            rhs = fs * dg + g.values * df
        else:
            rhs = f.values * dg + gs * df
    return GridFunction(lhs.domain, lhs.values - rhs)


def summation_by_parts_residual(f: GridFunction, phi: GridFunction, axis: int = 0) -> float:
    """<D+f, phi> + <f(x+e), D+phi>; zero when phi vanishes near the domain edge."""
    df = diff(f, axis)
    dphi = diff(phi, axis)
    return inner_product(df, phi) + inner_product(shift(f, 1, axis), dphi)


def fundamental_theorem_residual(f: GridFunction, a: float, b: float) -> float:
    """eps * sum_{x=a..b} D+f(x) - (f(b+eps) - f(a)) for a 1D grid function."""
    if f.dim != 1:
        raise DomainMismatchError("fundamental theorem check is one-dimensional")
    n = f.level.n_cells
    ia, ib = int(round(a * n)), int(round(b * n))
    w = f.level.half_width
    if not -w <= ia <= ib <= w:
        raise DomainMismatchError(f"interval [{a}, {b}] is not inside the window [-{w}, {w}]/{n}")
    df = diff(f)
    total = np.sum(df.values[ia + w: ib + w + 1]) / n
    return float(total - (f.at(ib + 1) - f.at(ia)))


# ---------------------------------------------------------
# STEP EXTENSION
# ---------------------------------------------------------

def _cell_index(x: np.ndarray, n: int) -> np.ndarray:
    return np.floor(np.round(np.asarray(x, dtype=float) * n, _GRID_SNAP)).astype(np.int64)


def step_extension(f: GridFunction) -> Callable[..., np.ndarray]:
    """Vectorized step extension: value of the lower-left cell corner, 0 off the domain."""
    n, w, side = f.level.n_cells, f.level.half_width, f.level.side

    def evaluate(*xs):
        idx = [_cell_index(x, n) + w for x in np.broadcast_arrays(*xs)]
        inside = np.ones(idx[0].shape, dtype=bool)
        for i in idx:
            inside &= (i >= 0) & (i < side)
        pos = tuple(np.where(inside, i, 0) for i in idx)
        return np.where(inside, f.values[pos], 0.0)

    return evaluate


def step_extension_eval(f: GridFunction, x) -> float:
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if xs.size != f.dim:
        raise DomainMismatchError(f"point {tuple(xs)} has wrong dimension for {f.dim}D function")
    return float(step_extension(f)(*[np.array(c) for c in xs]))
