"""Exception hierarchy for gridfn.

Every error raised by the library derives from GridFnError. Input problems
also derive from ValueError, solver failures from RuntimeError, so callers can
catch either family.
"""

__all__ = [
    "GridFnError",
    "GridAlignmentError",
    "EmptyDomainError",
    "SamplingError",
    "LevelMismatchError",
    "DomainMismatchError",
    "NormOrderError",
    "SupportError",
    "LadderError",
    "LadderEvaluationError",
    "StandardPartError",
    "NotADistributionError",
    "QuadratureError",
    "WindowUnderflowError",
    "PeriodicityError",
    "AssemblyError",
    "SolverError",
    "ConfigError",
]


class GridFnError(Exception):
    """Root of all gridfn errors."""


# ---------------------------------------------------------
# grids and grid functions
# ---------------------------------------------------------

class GridAlignmentError(GridFnError, ValueError):
    pass


class EmptyDomainError(GridFnError, ValueError):
    pass


class SamplingError(GridFnError, ValueError):
    pass


class LevelMismatchError(GridFnError, ValueError):
    pass


class DomainMismatchError(GridFnError, ValueError):
    pass


class NormOrderError(GridFnError, ValueError):
    pass


# ---------------------------------------------------------
# ladders, pairings, measures
# ---------------------------------------------------------

class SupportError(GridFnError, ValueError):
    pass


class LadderError(GridFnError, ValueError):
    pass


class LadderEvaluationError(GridFnError, RuntimeError):
    """An evaluator failed on one ladder level; ``n_cells`` names the level."""

    def __init__(self, n_cells: int, cause: BaseException):
        super().__init__(f"evaluation failed at N={n_cells}: {cause}")
        self.n_cells = n_cells
        self.cause = cause


class StandardPartError(GridFnError, ValueError):
    """Standard part requested for a quantity that is not classified finite."""

    def __init__(self, estimate, msg: str | None = None):
        super().__init__(msg or f"no standard part: classification={estimate.classification}")
        self.estimate = estimate


class NotADistributionError(GridFnError, ValueError):
    """Some test-function action diverges over the ladder."""

    def __init__(self, estimate, index: int):
        super().__init__(
            f"action #{index} classified {estimate.classification} "
            f"(exponent {estimate.exponent:.3g}); not a grid distribution"
        )
        self.estimate = estimate
        self.index = index


class QuadratureError(GridFnError, ValueError):
    pass


class WindowUnderflowError(GridFnError, ValueError):
    pass


class PeriodicityError(GridFnError, ValueError):
    pass


# ---------------------------------------------------------
# pde
# ---------------------------------------------------------

class AssemblyError(GridFnError, ValueError):
    pass


class SolverError(GridFnError, RuntimeError):
    def __init__(self, msg: str, residual: float = float("nan"), time: float | None = None):
        if time is not None:
            msg = f"{msg} (t={time:.6g})"
        super().__init__(f"{msg}; residual={residual:.3e}")
        self.residual = residual
        self.time = time


# ---------------------------------------------------------
# configuration
# ---------------------------------------------------------

class ConfigError(GridFnError, ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path
