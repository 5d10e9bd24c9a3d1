"""
Run configuration: defaults, presets, JSON files and flag overrides.

Precedence, lowest first: built-in defaults < experiment defaults < preset
< --config file < command-line flags. Every layer is a nested dict; the
merged tree is validated once and turned into a RunConfig. Errors name the
dotted field path.
"""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from gridfnapp.errors import ConfigError

log = logging.getLogger("config")

__all__ = [
    "LadderConfig",
    "BatteryConfig",
    "MeasureConfig",
    "SolverConfig",
    "OutputConfig",
    "ThresholdConfig",
    "SolveConfig",
    "RunConfig",
    "SOLVE_RHS",
    "default_tree",
    "deep_merge",
    "load_presets",
    "load_config_file",
    "validate",
    "build_config",
]

METHODS = ("auto", "direct", "cg")
SCHEMES = ("trapezoidal", "implicit-euler")
FORMATS = ("csv", "json")
SOLVE_RHS = ("sine", "point", "constant", "bump")
PRESETS_FILE = "presets.json"


# ---------------------------------------------------------
# CONFIG TREE
# ---------------------------------------------------------

@dataclass
class LadderConfig:
    base: int = 720
    levels: int = 4
    window: str = "1"  # rational half-width L of the window [-L, L]
    stride: int = 1
    start_exponent: int = 0


@dataclass
class BatteryConfig:
    count: int = 12
    seed: int = 0
    radii: list[float] = field(default_factory=lambda: [0.05, 0.4])


@dataclass
class MeasureConfig:
    window_exponent: float = 0.5  # window width N**-window_exponent
    bins: int = 64
    cutoff: float | None = None


@dataclass
class SolverConfig:
    method: str = "auto"
    tol: float = 1e-10
    dt: float | None = None
    T: float | None = None
    scheme: str = "trapezoidal"


@dataclass
class OutputConfig:
    out_dir: str = "gridfn-out"
    format: str = "csv"


@dataclass
class ThresholdConfig:
    exponent_threshold: float = 0.2
    residual_bound: float = 1e-2


@dataclass
class SolveConfig:
    """Ad-hoc Dirichlet solve of -diffusion*Lap u + reaction*u = P(rhs) on the closed unit box."""

    dim: int = 1
    n_cells: int = 720
    rhs: str = "sine"
    diffusion: float = 1.0
    reaction: float = 0.0


@dataclass
class RunConfig:
    experiment: str | None = None
    solve: SolveConfig | None = None
    ladder: LadderConfig = field(default_factory=LadderConfig)
    battery: BatteryConfig = field(default_factory=BatteryConfig)
    measure: MeasureConfig = field(default_factory=MeasureConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def window(self) -> Fraction:
        return Fraction(self.ladder.window)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------
# LAYERS
# ---------------------------------------------------------

def default_tree() -> dict:
    tree = asdict(RunConfig())
    tree["solve"] = None
    return tree


def deep_merge(base: dict, override: Mapping | None) -> dict:
    """Recursive dict merge; override wins, dicts merge key by key."""
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_presets() -> dict:
    text = resources.files("gridfnapp").joinpath("presets", PRESETS_FILE).read_text(encoding="utf-8")
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError("presets", "preset catalogue must be a JSON object")
    return data


def load_config_file(path: str | Path) -> dict:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError("--config", f"no such file: {p}") from e
    except json.JSONDecodeError as e:
        raise ConfigError("--config", f"{p} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("--config", f"{p} must hold a JSON object")
    log.debug("loaded config file %s", p)
    return data


# ---------------------------------------------------------
# VALIDATION
# ---------------------------------------------------------

def _check_keys(data: Mapping, allowed, path: str):
    for key in data:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigError(where, f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _int(value, path: str, lo: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(path, f"must be >= {lo}, got {value}")
    return value


def _float(value, path: str, positive: bool = False, allow_none: bool = False) -> float | None:
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(path, f"must be > 0, got {value}")
    return float(value)


def _choice(value, path: str, choices) -> str:
    if value not in choices:
        raise ConfigError(path, f"must be one of {', '.join(choices)}, got {value!r}")
    return value


def _section(tree: Mapping, name: str, cls) -> dict:
    data = tree.get(name)
    if not isinstance(data, Mapping):
        raise ConfigError(name, "expected an object")
    _check_keys(data, {f.name for f in fields(cls)}, name)
    return dict(data)


def _ladder(tree) -> LadderConfig:
    d = _section(tree, "ladder", LadderConfig)
    base = _int(d["base"], "ladder.base", 1)
    levels = _int(d["levels"], "ladder.levels", 3)
    stride = _int(d["stride"], "ladder.stride", 1)
    start = _int(d["start_exponent"], "ladder.start_exponent", 0)
    try:
        window = Fraction(str(d["window"]))
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigError("ladder.window", f"not a rational number: {d['window']!r}") from e
    if window <= 0:
        raise ConfigError("ladder.window", f"must be > 0, got {window}")
    if (window * base).denominator != 1:
        raise ConfigError("ladder.window", f"window {window} times base {base} is not an integer")
    return LadderConfig(base, levels, str(window), stride, start)


def _battery(tree) -> BatteryConfig:
    d = _section(tree, "battery", BatteryConfig)
    count = _int(d["count"], "battery.count", 1)
    seed = _int(d["seed"], "battery.seed", 0)
    radii = d["radii"]
    if not isinstance(radii, (list, tuple)) or len(radii) != 2:
        raise ConfigError("battery.radii", "expected [smallest, largest]")
    lo = _float(radii[0], "battery.radii[0]", positive=True)
    hi = _float(radii[1], "battery.radii[1]", positive=True)
    if not lo <= hi < 0.5:
        raise ConfigError("battery.radii", f"need 0 < smallest <= largest < 0.5, got {list(radii)}")
    return BatteryConfig(count, seed, [lo, hi])


def _measure(tree) -> MeasureConfig:
    d = _section(tree, "measure", MeasureConfig)
    expo = _float(d["window_exponent"], "measure.window_exponent", positive=True)
    if not expo < 1:
        raise ConfigError("measure.window_exponent", f"must lie in (0, 1), got {expo}")
    bins = _int(d["bins"], "measure.bins", 2)
    cutoff = _float(d["cutoff"], "measure.cutoff", positive=True, allow_none=True)
    return MeasureConfig(expo, bins, cutoff)


def _solver(tree) -> SolverConfig:
    d = _section(tree, "solver", SolverConfig)
    method = _choice(d["method"], "solver.method", METHODS)
    tol = _float(d["tol"], "solver.tol", positive=True)
    if tol > 1e-2:
        raise ConfigError("solver.tol", f"must be <= 1e-2, got {tol}")
    dt = _float(d["dt"], "solver.dt", positive=True, allow_none=True)
    t_end = _float(d["T"], "solver.T", allow_none=True)
    if t_end is not None and t_end < 0:
        raise ConfigError("solver.T", f"must be >= 0, got {t_end}")
    scheme = _choice(d["scheme"], "solver.scheme", SCHEMES)
    return SolverConfig(method, tol, dt, t_end, scheme)


def _output(tree) -> OutputConfig:
    d = _section(tree, "output", OutputConfig)
    if not isinstance(d["out_dir"], str) or not d["out_dir"]:
        raise ConfigError("output.out_dir", "expected a non-empty path")
    return OutputConfig(d["out_dir"], _choice(d["format"], "output.format", FORMATS))


def _thresholds(tree) -> ThresholdConfig:
    d = _section(tree, "thresholds", ThresholdConfig)
    return ThresholdConfig(
        _float(d["exponent_threshold"], "thresholds.exponent_threshold", positive=True),
        _float(d["residual_bound"], "thresholds.residual_bound", positive=True),
    )


def _solve(tree) -> SolveConfig | None:
    data = tree.get("solve")
    if data is None:
        return None
    if not isinstance(data, Mapping):
        raise ConfigError("solve", "expected an object")
    _check_keys(data, {f.name for f in fields(SolveConfig)}, "solve")
    d = deep_merge(asdict(SolveConfig()), data)
    dim = _int(d["dim"], "solve.dim", 1)
    if dim > 2:
        raise ConfigError("solve.dim", f"ad-hoc solves support 1 or 2 dimensions, got {dim}")
    n_cells = _int(d["n_cells"], "solve.n_cells", 2)
    rhs = _choice(d["rhs"], "solve.rhs", SOLVE_RHS)
    diffusion = _float(d["diffusion"], "solve.diffusion", positive=True)
    reaction = _float(d["reaction"], "solve.reaction")
    if reaction < 0:
        raise ConfigError("solve.reaction", f"must be >= 0, got {reaction}")
    return SolveConfig(dim, n_cells, rhs, diffusion, reaction)


def _params(tree, allowed: Mapping[str, Any] | None) -> dict:
    params = tree.get("params") or {}
    if not isinstance(params, Mapping):
        raise ConfigError("params", "expected an object")
    if allowed is not None:
        _check_keys(params, set(allowed), "params")
        for key, value in params.items():
            ref = allowed[key]
            if ref is None:
                continue
            if isinstance(ref, bool) != isinstance(value, bool):
                raise ConfigError(f"params.{key}", f"expected {type(ref).__name__}, got {value!r}")
            if isinstance(ref, (int, float)) and not isinstance(value, (int, float)):
                raise ConfigError(f"params.{key}", f"expected a number, got {value!r}")
            if isinstance(ref, int) and not isinstance(ref, bool) and not isinstance(value, int):
                raise ConfigError(f"params.{key}", f"expected an integer, got {value!r}")
            if isinstance(ref, str) and not isinstance(value, str):
                raise ConfigError(f"params.{key}", f"expected a string, got {value!r}")
            if isinstance(ref, list) and not isinstance(value, list):
                raise ConfigError(f"params.{key}", f"expected a list, got {value!r}")
    return dict(params)


def validate(tree: Mapping, experiments: Mapping[str, Mapping[str, Any]] | None = None) -> RunConfig:
    """Turn a merged tree into a RunConfig; experiments maps name -> allowed params."""
    _check_keys(tree, {f.name for f in fields(RunConfig)}, "")
    name = tree.get("experiment")
    solve_cfg = _solve(tree)
    if name is None and solve_cfg is None:
        raise ConfigError("experiment", "give an experiment name or a solve section")
    if name is not None and solve_cfg is not None:
        raise ConfigError("solve", "an experiment and an ad-hoc solve are mutually exclusive")
    allowed = None
    if name is not None:
        if not isinstance(name, str):
            raise ConfigError("experiment", f"expected a name, got {name!r}")
        if experiments is not None:
            if name not in experiments:
                raise ConfigError("experiment", f"unknown experiment {name!r}; see 'gridfn list'")
            allowed = experiments[name]
    cfg = RunConfig(
        experiment=name,
        solve=solve_cfg,
        ladder=_ladder(tree),
        battery=_battery(tree),
        measure=_measure(tree),
        solver=_solver(tree),
        output=_output(tree),
        thresholds=_thresholds(tree),
        params=_params(tree, allowed),
    )
    if allowed is not None:
        cfg.params = deep_merge(dict(allowed), cfg.params)
    return cfg


def build_config(flags: Mapping | None = None, config_file: str | Path | None = None,
                 preset: str | None = None,
                 experiment_defaults: Mapping[str, Mapping] | None = None,
                 experiment_params: Mapping[str, Mapping[str, Any]] | None = None) -> RunConfig:
    """Merge every layer and validate.

    experiment_defaults maps name -> config overrides (for example a wider
    window), experiment_params maps name -> allowed params with defaults.
    """
    file_tree = load_config_file(config_file) if config_file else {}
    flags = dict(flags or {})
    name = flags.get("experiment") or file_tree.get("experiment")
    tree = default_tree()
    if name and experiment_defaults and name in experiment_defaults:
        tree = deep_merge(tree, experiment_defaults[name])
    if preset:
        presets = load_presets()
        if preset not in presets:
            raise ConfigError("--preset", f"unknown preset {preset!r} (known: {', '.join(sorted(presets))})")
        tree = deep_merge(tree, presets[preset])
    tree = deep_merge(tree, file_tree)
    tree = deep_merge(tree, flags)
    return validate(tree, experiment_params)
