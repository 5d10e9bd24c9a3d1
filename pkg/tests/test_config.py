import json

import pytest

from gridfnapp.config import build_config, deep_merge, default_tree, load_presets, validate
from gridfnapp.errors import ConfigError
from gridfnapp.experiments import config_for, experiment_defaults, experiment_params


def _build(flags=None, **kw):
    return build_config(flags, experiment_defaults=experiment_defaults(),
                        experiment_params=experiment_params(), **kw)


def test_defaults():
    cfg = _build({"experiment": "identities"})
    assert cfg.ladder.base == 720
    assert cfg.ladder.levels == 4
    assert cfg.battery.count == 12
    assert cfg.solver.method == "auto"
    assert cfg.output.format == "csv"
    assert cfg.solve is None


def test_experiment_defaults_apply():
    cfg = config_for("heaviside-product")
    assert cfg.ladder.window == "5"
    assert cfg.ladder.stride == 2
    assert cfg.params == {"m": 2, "n": 1, "ramp": "linear"}


def test_preset_beats_experiment_defaults():
    cfg = _build({"experiment": "poisson-2d"}, preset="fine")
    assert cfg.ladder.levels == 5
    assert cfg.ladder.base == 24


def test_file_beats_preset_and_flags_beat_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"experiment": "identities", "ladder": {"levels": 6},
                                "battery": {"seed": 9}}))
    cfg = _build({}, config_file=path, preset="quick")
    assert cfg.ladder.levels == 6
    assert cfg.battery.count == 6
    assert cfg.battery.seed == 9
    cfg = _build({"ladder": {"levels": 3}}, config_file=path, preset="quick")
    assert cfg.ladder.levels == 3


def test_params_override_defaults():
    cfg = config_for("heaviside-product", params={"m": 3})
    assert cfg.params == {"m": 3, "n": 1, "ramp": "linear"}


def test_presets_load():
    presets = load_presets()
    assert {"quick", "fine", "ci", "strict-fit"} <= set(presets)


def test_deep_merge_keeps_siblings():
    merged = deep_merge({"a": {"b": 1, "c": 2}}, {"a": {"c": 3}})
    assert merged == {"a": {"b": 1, "c": 3}}


@pytest.mark.parametrize("flags, path", [
    ({"ladder": {"levels": 2}}, "ladder.levels"),
    ({"ladder": {"window": "1/7"}}, "ladder.window"),
    ({"ladder": {"window": "abc"}}, "ladder.window"),
    ({"ladder": {"depth": 3}}, "ladder.depth"),
    ({"colour": "red"}, "colour"),
    ({"battery": {"radii": [0.1, 0.6]}}, "battery.radii"),
    ({"solver": {"method": "gmres"}}, "solver.method"),
    ({"solver": {"tol": 0.5}}, "solver.tol"),
    ({"measure": {"window_exponent": 1.5}}, "measure.window_exponent"),
    ({"params": {"k": 1}}, "params.k"),
])
def test_invalid_fields_name_their_path(flags, path):
    with pytest.raises(ConfigError) as info:
        _build({"experiment": "identities", **flags})
    assert info.value.path == path


def test_param_types_are_checked():
    with pytest.raises(ConfigError) as info:
        config_for("heaviside-product", params={"m": "two"})
    assert info.value.path == "params.m"


def test_unknown_preset():
    with pytest.raises(ConfigError) as info:
        _build({"experiment": "identities"}, preset="turbo")
    assert info.value.path == "--preset"


def test_unknown_experiment():
    with pytest.raises(ConfigError) as info:
        _build({"experiment": "nope"})
    assert info.value.path == "experiment"


def test_experiment_and_solve_are_exclusive():
    with pytest.raises(ConfigError) as info:
        _build({"experiment": "identities", "solve": {"rhs": "sine"}})
    assert info.value.path == "solve"


def test_nothing_to_run():
    with pytest.raises(ConfigError):
        validate(default_tree())


def test_solve_section():
    cfg = _build({"solve": {"rhs": "point", "n_cells": 64}})
    assert cfg.experiment is None
    assert cfg.solve.rhs == "point"
    assert cfg.solve.dim == 1
    with pytest.raises(ConfigError) as info:
        _build({"solve": {"dim": 3}})
    assert info.value.path == "solve.dim"


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        _build({}, config_file=tmp_path / "absent.json")
    assert info.value.path == "--config"


def test_invalid_config_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        _build({}, config_file=path)
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        _build({}, config_file=path)
