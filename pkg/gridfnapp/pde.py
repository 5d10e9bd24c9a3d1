"""Grid Dirichlet problems, fundamental solutions and time integration.

Operators read L(u) = sum (-1)^|alpha| D+^alpha (a_ab D-^beta u), assembled as
sparse matrices over the domain points. Boundary rows D+^alpha u = 0 on the
shifted boundaries replace the operator rows of their unknowns; for h >= 2 the
mirrored rows D-^alpha u = 0 fill the unknowns the forward rows do not reach.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy import fft as sfft
from scipy.signal import fftconvolve
from scipy.sparse.linalg import LinearOperator, cg, splu
from scipy.sparse.linalg import norm as spnorm

from gridfnapp.errors import AssemblyError, DomainMismatchError, SolverError
from gridfnapp.grid_core import (
    GridDomain,
    GridFunction,
    MultiIndex,
    _as_alpha,
    _diff_mask,
    _shifted_multi,
    lambda_boundary,
    shifted_boundary,
)

log = logging.getLogger("pde")

__all__ = [
    "OperatorSpec",
    "AssembledSystem",
    "Nemytskii",
    "Trajectory",
    "laplacian",
    "assemble",
    "solve",
    "solve_nonlinear",
    "smallest_eigenvalue",
    "fundamental_solution",
    "convolve",
    "time_integrate",
]

DIRECT_LIMIT_1D = 4097
DIRECT_LIMIT_2D = 129**2
CG_MAXITER = 20_000
NEWTON_MAXITER = 50

Coefficient = float | Callable[..., np.ndarray]


# ---------------------------------------------------------
# OPERATOR SPECS
# ---------------------------------------------------------

@dataclass(frozen=True)
class OperatorSpec:
    """Order h and coefficients a_{alpha,beta} keyed by (alpha, beta) tuples."""

    order: int
    coefficients: Mapping[tuple[tuple[int, ...], tuple[int, ...]], Coefficient]

    def __post_init__(self):
        if self.order < 1:
            raise AssemblyError(f"operator order must be >= 1, got {self.order}")
        dims = set()
        for alpha, beta in self.coefficients:
            a, b = MultiIndex(tuple(alpha)), MultiIndex(tuple(beta))
            if a.order > self.order or b.order > self.order:
                raise AssemblyError(f"term ({a.components}, {b.components}) exceeds order {self.order}")
            dims.update((a.dim, b.dim))
        if len(dims) > 1:
            raise AssemblyError(f"coefficient multi-indices disagree on dimension: {sorted(dims)}")

    @property
    def dim(self) -> int:
        alpha, _ = next(iter(self.coefficients))
        return len(alpha)

    def is_constant(self) -> bool:
        return all(not callable(c) for c in self.coefficients.values())


def laplacian(dim: int = 1, diffusion: float = 1.0, reaction: float = 0.0) -> OperatorSpec:
    """-diffusion * sum_i D+_i D-_i u + reaction * u."""
    coeffs = {}
    for i in range(dim):
        e = MultiIndex.unit(dim, i).components
        coeffs[(e, e)] = diffusion
    if reaction:
        z = (0,) * dim
        coeffs[(z, z)] = reaction
    return OperatorSpec(1, coeffs)


# ---------------------------------------------------------
# ASSEMBLY
# ---------------------------------------------------------

def _diff_matrix(d: GridDomain, axis: int, direction: str) -> sp.csr_matrix:
    """Finite difference over the flattened box; reads outside the box are 0."""
    shape = d.mask.shape
    size = d.mask.size
    stride = int(np.prod(shape[axis + 1:]))
    pos = np.arange(size).reshape(shape)
    n = d.level.n_cells
    s = 1 if direction == "forward" else -1
    coord = np.indices(shape)[axis]
    has_nb = (coord + s >= 0) & (coord + s < shape[axis])
    rows = pos[has_nb]
    diag = sp.diags(np.full(size, -float(n) * s), 0, format="csr")
    nb = sp.csr_matrix((np.full(rows.size, float(n) * s), (rows, rows + s * stride)), shape=(size, size))
    # forward: n*(u[x+e] - u[x]); backward: n*(u[x] - u[x-e])
    return (nb + diag).tocsr()


def _iterated(d: GridDomain, alpha: MultiIndex, direction: str):
    """(matrix, mask) of D^alpha with evolving definition masks."""
    size = d.mask.size
    mat = sp.identity(size, format="csr")
    mask = d.mask.copy()
    for axis, count in enumerate(alpha.components):
        for _ in range(count):
            mat = _diff_matrix(d, axis, direction) @ mat
            mask = _diff_mask(mask, axis, direction)
    return mat.tocsr(), mask


def _coefficient_values(coef: Coefficient, d: GridDomain, mask: np.ndarray, term) -> np.ndarray:
    vals = np.zeros(d.mask.shape)
    if callable(coef):
        idx = np.nonzero(mask)
        w, n = d.level.half_width, d.level.n_cells
        coords = [(i - w) / n for i in idx]
        got = np.broadcast_to(np.asarray(coef(*coords), dtype=float), coords[0].shape)
        vals[mask] = got
    else:
        vals[mask] = float(coef)
    if not np.all(np.isfinite(vals)):
        raise AssemblyError(f"non-finite coefficient for term {term}")
    return vals


@dataclass(eq=False)
class AssembledSystem:
    domain: GridDomain
    spec: OperatorSpec
    operator: sp.csr_matrix  # L over unknowns; zero rows where L is undefined
    operator_rows: np.ndarray  # bool per unknown: row is an operator row
    matrix: sp.csr_matrix  # operator rows with boundary rows substituted
    constraint_order: np.ndarray  # |alpha| of the boundary row per unknown, -1 for operator rows
    defined: np.ndarray = field(repr=False, default=None)  # bool per unknown: L defined there

    @property
    def unknowns(self) -> np.ndarray:
        return np.flatnonzero(self.domain.mask.ravel())

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def value_constrained(self) -> np.ndarray:
        return self.constraint_order == 0

    @property
    def boundary_rows(self) -> np.ndarray:
        return np.flatnonzero(~self.operator_rows)

    def _vector(self, u: GridFunction) -> np.ndarray:
        if u.level != self.domain.level or u.dim != self.domain.dim:
            raise DomainMismatchError("grid function lives on another grid")
        return u.values.ravel()[self.unknowns]

    def _function(self, vec: np.ndarray, rows: np.ndarray | None = None) -> GridFunction:
        flat = np.zeros(self.domain.mask.size)
        flat[self.unknowns] = vec
        if rows is None:
            return GridFunction(self.domain, flat.reshape(self.domain.mask.shape))
        mask = np.zeros(self.domain.mask.size, dtype=bool)
        mask[self.unknowns[rows]] = True
        return GridFunction(self.domain.with_mask(mask.reshape(self.domain.mask.shape)),
                            flat.reshape(self.domain.mask.shape))

    def apply(self, u: GridFunction) -> GridFunction:
        """L(u) on the points where every term is defined."""
        return self._function(self.operator @ self._vector(u), self.defined)

    def rhs_vector(self, f: GridFunction | None) -> np.ndarray:
        b = np.zeros(self.size)
        if f is not None:
            b[self.operator_rows] = self._vector(f)[self.operator_rows]
        return b

    def interior_block(self) -> sp.csr_matrix:
        rows = np.flatnonzero(self.operator_rows)
        return self.matrix[rows][:, rows].tocsr()


def assemble(spec: OperatorSpec, d: GridDomain) -> AssembledSystem:
    """Square system: operator rows where L is defined, boundary rows elsewhere.

    Boundary rows D+^alpha u = 0 sit on the shifted boundaries for
    |alpha| <= h-1. Every unknown carries at most one boundary row: rows are
    handed out lowest |alpha| first, then lexicographically, and a point
    keeps the first row it receives. Unknowns that still have neither an
    operator row nor a boundary row take the mirrored row D-^alpha u = 0
    where x - alpha*eps is on the Lambda-boundary, in the same order.
    """
    if spec.dim != d.dim:
        raise AssemblyError(f"{spec.dim}D operator on a {d.dim}D domain")
    unknowns = np.flatnonzero(d.mask.ravel())
    size = d.mask.size
    total = sp.csr_matrix((size, size))
    defined = d.mask.copy()
    for (alpha, beta), coef in spec.coefficients.items():
        a, b = MultiIndex(tuple(alpha)), MultiIndex(tuple(beta))
        inner, mask_b = _iterated(d, b, "backward")
        avals = _coefficient_values(coef, d, mask_b, (a.components, b.components))
        outer, _ = _iterated(d, a, "forward")
        # D+^alpha evaluated on functions supported on mask_b
        mask_ab = mask_b.copy()
        for axis, count in enumerate(a.components):
            for _ in range(count):
                mask_ab = _diff_mask(mask_ab, axis, "forward")
        defined &= mask_ab
        term = outer @ sp.diags(avals.ravel()) @ inner
        total = total + ((-1) ** a.order) * term
    total = total.tocsr()
    rows_defined = defined.ravel()[unknowns]
    operator = total[unknowns][:, unknowns].tocsr()
    operator = sp.diags(rows_defined.astype(float)) @ operator

    n_unk = unknowns.size
    slot = np.full(size, -1)
    slot[unknowns] = np.arange(n_unk)
    constraint_order = np.full(n_unk, -1)
    c_rows, c_cols, c_vals = [], [], []
    frame = lambda_boundary(d).mask
    for alpha, direction in _boundary_conditions(d.dim, spec.order):
        if direction == "forward":
            where = shifted_boundary(d, alpha).mask.ravel()
        else:
            mirrored = tuple(-c for c in alpha.components)
            where = (d.mask & _shifted_multi(frame, mirrored, False)).ravel() & ~defined.ravel()
        targets = slot[np.flatnonzero(where)]
        free = constraint_order[targets] < 0
        if not free.any():
            continue
        targets = targets[free]
        constraint_order[targets] = alpha.order
        mat, _ = _iterated(d, alpha, direction)
        block = mat[unknowns[targets]][:, unknowns].tocoo()
        c_rows.append(targets[block.row])
        c_cols.append(block.col)
        c_vals.append(block.data)
    operator_rows = constraint_order < 0
    missing = operator_rows & ~rows_defined
    if missing.any():
        raise AssemblyError(f"{int(missing.sum())} unknowns have neither an operator row nor a boundary row")
    constraints = sp.csr_matrix(
        (np.concatenate(c_vals) if c_vals else [], (np.concatenate(c_rows) if c_rows else [],
                                                     np.concatenate(c_cols) if c_cols else [])),
        shape=(n_unk, n_unk),
    )
    matrix = (sp.diags(operator_rows.astype(float)) @ operator + constraints).tocsr()
    matrix.eliminate_zeros()
    log.debug("assembled %d unknowns (%d boundary rows), nnz=%d", n_unk, int((~operator_rows).sum()), matrix.nnz)
    return AssembledSystem(d, spec, operator, operator_rows, matrix, constraint_order, rows_defined)


def _boundary_conditions(dim: int, order: int):
    """(alpha, direction) in row-assignment priority: |alpha| ascending, then lexicographic."""
    by_order = sorted(_multi_indices(dim, order - 1), key=lambda a: (a.order, a.components))
    for alpha in by_order:
        yield alpha, "forward"
        if alpha.order:
            yield alpha, "backward"


def _multi_indices(dim: int, max_order: int):
    for combo in np.ndindex(*(max_order + 1,) * dim):
        if sum(combo) <= max_order:
            yield MultiIndex(tuple(int(c) for c in combo))


# ---------------------------------------------------------
# LINEAR SOLVES
# ---------------------------------------------------------

def _free(system: AssembledSystem) -> np.ndarray:
    return np.flatnonzero(~system.value_constrained)


def _pick_method(system: AssembledSystem, method: str) -> str:
    if method != "auto":
        return method
    limit = DIRECT_LIMIT_1D if system.domain.dim == 1 else DIRECT_LIMIT_2D
    only_values = np.all(system.constraint_order <= 0)
    return "direct" if system.size <= limit or not only_values else "cg"


def _backward_ok(a, u, b, r, tol) -> bool:
    na = spnorm(a, np.inf)
    return np.max(np.abs(r), initial=0.0) <= tol * (na * np.max(np.abs(u), initial=0.0) + np.max(np.abs(b), initial=0.0))


def _jacobi(a: sp.csr_matrix) -> LinearOperator:
    d = a.diagonal()
    d = np.where(d != 0, d, 1.0)
    return LinearOperator(a.shape, matvec=lambda x: x / d, dtype=float)


def _solve_reduced(a: sp.csr_matrix, b: np.ndarray, method: str, tol: float) -> np.ndarray:
    if not np.any(b):
        return np.zeros_like(b)
    if method == "direct":
        try:
            lu = splu(a.tocsc())
        except RuntimeError as e:
            raise SolverError(f"direct solve failed: {e}") from e
        u = lu.solve(b)
        r = a @ u - b
        if not np.all(np.isfinite(u)) or not _backward_ok(a, u, b, r, tol):
            raise SolverError("direct solve inaccurate", float(np.linalg.norm(r)))
        return u
    if method == "cg":
        m = _jacobi(a)
        nb = np.linalg.norm(b)
        u = np.zeros_like(b)
        for _ in range(3):
            u, info = cg(a, b, x0=u, rtol=tol, atol=0.0, maxiter=CG_MAXITER, M=m)
            res = float(np.linalg.norm(a @ u - b))
            if info < 0:
                raise SolverError("cg breakdown", res)
            if res <= tol * nb:
                log.debug("cg converged, residual %.3e", res)
                return u
        raise SolverError("cg did not converge", res)
    raise SolverError(f"unknown method {method!r}")


def solve(system: AssembledSystem, rhs: GridFunction | None, method: str = "auto",
          tol: float = 1e-10) -> GridFunction:
    """Solve L(u) = rhs with the boundary rows; value rows are eliminated exactly."""
    method = _pick_method(system, method)
    if method == "cg" and np.any(system.constraint_order > 0):
        raise SolverError("cg needs value-only boundary rows")
    b = system.rhs_vector(rhs)
    free = _free(system)
    a = system.matrix[free][:, free].tocsr()
    u = np.zeros(system.size)
    u[free] = _solve_reduced(a, b[free], method, tol)
    return system._function(u)


def smallest_eigenvalue(system: AssembledSystem, iterations: int = 200, tol: float = 1e-10) -> float:
    """Inverse iteration on the interior block."""
    a = system.interior_block().tocsc()
    lu = splu(a)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(a.shape[0])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iterations):
        y = lu.solve(x)
        y /= np.linalg.norm(y)
        new = float(y @ (a @ y))
        if abs(new - lam) <= tol * abs(new):
            return new
        x, lam = y, new
    return lam


# ---------------------------------------------------------
# NONLINEAR PARTS
# ---------------------------------------------------------

@dataclass(frozen=True)
class Nemytskii:
    """Pointwise composition u -> func(u) with an optional derivative."""

    func: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "G"

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(u), dtype=float)

    def prime(self, u: np.ndarray) -> np.ndarray:
        if self.derivative is not None:
            return np.asarray(self.derivative(u), dtype=float)
        h = 1e-7 * np.maximum(1.0, np.abs(u))
        return (self.func(u + h) - self.func(u - h)) / (2 * h)

    def apply(self, u: GridFunction) -> GridFunction:
        return u.map(self)


def solve_nonlinear(system: AssembledSystem, nonlinear: Nemytskii, rhs: GridFunction | None,
                    tol: float = 1e-10, u_init: GridFunction | None = None) -> GridFunction:
    """Newton iteration for L(u) - G(u) = rhs with the boundary rows."""
    free = _free(system)
    a = system.matrix[free][:, free].tocsr()
    ops = system.operator_rows[free].astype(float)
    b = system.rhs_vector(rhs)[free]
    u = np.zeros(free.size) if u_init is None else system._vector(u_init)[free]
    for it in range(NEWTON_MAXITER):
        res = a @ u - ops * nonlinear(u) - b
        jac = (a - sp.diags(ops * nonlinear.prime(u))).tocsc()
        try:
            du = splu(jac).solve(-res)
        except RuntimeError as e:
            raise SolverError(f"singular Newton step: {e}", float(np.linalg.norm(res))) from e
        u = u + du
        if np.max(np.abs(du)) <= tol * max(1.0, np.max(np.abs(u))):
            log.debug("newton converged in %d steps", it + 1)
            out = np.zeros(system.size)
            out[free] = u
            return system._function(out)
    raise SolverError("Newton did not converge", float(np.linalg.norm(res)))


# ---------------------------------------------------------
# FUNDAMENTAL SOLUTIONS AND CONVOLUTION
# ---------------------------------------------------------

def fundamental_solution(system: AssembledSystem, source_point, method: str = "auto",
                         tol: float = 1e-10) -> GridFunction:
    """Solve L(u) = N^k chi_source."""
    d = system.domain
    n = d.level.n_cells
    p = np.atleast_1d(np.asarray(source_point, dtype=float))
    idx = np.round(p * n)
    if p.size != d.dim or np.any(np.abs(p * n - idx) > 1e-9) or not d.contains_index(idx.astype(int)):
        raise DomainMismatchError(f"source {tuple(p)} is not a grid point of the domain")
    rhs = np.zeros(d.mask.shape)
    pos = tuple(int(i) + d.level.half_width for i in idx)
    rhs[pos] = float(n) ** d.dim
    k = np.flatnonzero(system.unknowns == np.ravel_multi_index(pos, d.mask.shape))[0]
    if not system.operator_rows[k]:
        raise DomainMismatchError(f"source {tuple(p)} sits on a boundary row")
    return solve(system, GridFunction(d, rhs), method, tol)


def convolve(g: GridFunction, u0: GridFunction, origin=None, mode: str = "zero") -> GridFunction:
    """u_g(x) = eps^k sum_y g(y) u0(x - y + origin) on the domain of u0.

    origin is the source point of u0 (default 0). mode "zero" reads u0 as 0
    outside the box, "periodic" wraps it around the box.
    """
    g._check(u0)
    level, dim = g.level, g.dim
    n, w, side = level.n_cells, level.half_width, level.side
    o = np.zeros(dim, dtype=int) if origin is None else np.round(
        np.atleast_1d(np.asarray(origin, dtype=float)) * n).astype(int)
    o = o + w  # box position of the origin
    scale = 1.0 / float(n) ** dim
    if mode == "zero":
        full = fftconvolve(g.values, u0.values, mode="full")
        sl = tuple(slice(int(a), int(a) + side) for a in o)
        out = full[sl]
    elif mode == "periodic":
        shifted = np.roll(u0.values, shift=tuple(int(-a) for a in o), axis=tuple(range(dim)))
        out = sfft.irfftn(sfft.rfftn(g.values) * sfft.rfftn(shifted), s=g.values.shape)
    else:
        raise ValueError(f"mode must be 'zero' or 'periodic', got {mode!r}")
    return GridFunction(u0.domain, out * scale)


# ---------------------------------------------------------
# TIME INTEGRATION
# ---------------------------------------------------------

@dataclass
class Trajectory:
    times: list[float]
    states: list[GridFunction]
    metadata: dict = field(default_factory=dict)

    @property
    def final(self) -> GridFunction:
        return self.states[-1]

    def __len__(self):
        return len(self.times)


_THETA = {"trapezoidal": 0.5, "implicit-euler": 1.0}


def time_integrate(system: AssembledSystem | None, f_rhs: GridFunction | None,
                   u_init: GridFunction, T: float, scheme: str = "trapezoidal",
                   dt: float = 1e-3, nonlinear: Nemytskii | None = None,
                   tol: float = 1e-10, keep_every: int = 1) -> Trajectory:
    """Integrate u_t = -L(u) + G(u) + f with boundary rows held as constraints.

    system None means L = 0 without boundary rows.
    """
    if scheme not in _THETA:
        raise ValueError(f"scheme must be one of {sorted(_THETA)}, got {scheme!r}")
    if not dt > 0 or not T >= 0:
        raise ValueError(f"need dt > 0 and T >= 0, got dt={dt}, T={T}")
    theta = _THETA[scheme]
    d = system.domain if system is not None else u_init.domain
    unknowns = np.flatnonzero(d.mask.ravel())
    if system is not None:
        ops = system.operator_rows.astype(float)
        a = system.operator
        cons = system.matrix - sp.diags(ops) @ system.matrix
    else:
        ops = np.ones(unknowns.size)
        a = sp.csr_matrix((unknowns.size, unknowns.size))
        cons = sp.csr_matrix((unknowns.size, unknowns.size))
    pe = sp.diags(ops)
    eye = sp.identity(unknowns.size, format="csr")

    def vec(u: GridFunction) -> np.ndarray:
        return u.values.ravel()[unknowns]

    def fn(v: np.ndarray) -> GridFunction:
        flat = np.zeros(d.mask.size)
        flat[unknowns] = v
        return GridFunction(d, flat.reshape(d.mask.shape))

    f = vec(f_rhs) if f_rhs is not None else np.zeros(unknowns.size)
    u = vec(u_init)
    steps = max(int(np.ceil(T / dt - 1e-9)), 0)
    times, states = [0.0], [fn(u)]
    t = 0.0
    lu, lu_dt = None, None
    for k in range(steps):
        h = min(dt, T - t)
        base = pe @ (u - (1 - theta) * h * (a @ u) + h * f)
        if nonlinear is not None:
            base = base + (1 - theta) * h * ops * nonlinear(u)
        kmat = (pe @ (eye + theta * h * a) + cons).tocsc()
        if nonlinear is None:
            if lu is None or lu_dt != h:
                try:
                    lu, lu_dt = splu(kmat), h
                except RuntimeError as e:
                    raise SolverError(f"step matrix singular: {e}", time=t) from e
            new = lu.solve(base)
        else:
            new = _newton_step(kmat, base, u, ops, theta * h, nonlinear, tol, t)
        res = float(np.max(np.abs(kmat @ new - base - (theta * h * ops * nonlinear(new) if nonlinear is not None else 0.0)),
                           initial=0.0))
        if not np.all(np.isfinite(new)) or res > tol * max(1.0, float(np.max(np.abs(base), initial=0.0))) * 1e3:
            raise SolverError("time step failed", res, time=t + h)
        u = new
        t = T if k == steps - 1 else t + h
        if (k + 1) % keep_every == 0 or k == steps - 1:
            times.append(t)
            states.append(fn(u))
    meta = {"scheme": scheme, "dt": dt, "T": T, "steps": steps, "tol": tol,
            "nonlinear": nonlinear.name if nonlinear is not None else None}
    log.debug("integrated %d steps of %s to T=%g", steps, scheme, T)
    return Trajectory(times, states, meta)


def _newton_step(kmat, base, u, ops, th, nonlinear, tol, t):
    v = u.copy()
    for _ in range(NEWTON_MAXITER):
        res = kmat @ v - base - th * ops * nonlinear(v)
        jac = (kmat - sp.diags(th * ops * nonlinear.prime(v))).tocsc()
        try:
            dv = splu(jac).solve(-res)
        except RuntimeError as e:
            raise SolverError(f"singular Newton step: {e}", float(np.linalg.norm(res)), time=t) from e
        v = v + dv
        if np.max(np.abs(dv), initial=0.0) <= tol * max(1.0, float(np.max(np.abs(v), initial=0.0))):
            return v
    raise SolverError("Newton did not converge", float(np.linalg.norm(res)), time=t)
