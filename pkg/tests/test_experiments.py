import json

import numpy as np
import pytest

from gridfnapp.checks import DERIVED, PUBLISHED, expect_close
from gridfnapp.config import build_config
from gridfnapp.errors import ConfigError
from gridfnapp.experiments import (
    REGISTRY,
    ExperimentReport,
    adhoc_solve,
    alternating,
    config_for,
    default_m_rule,
    experiment_defaults,
    experiment_params,
    heaviside_ramp,
    ladder_table,
    run_experiment,
    square_wave,
    variational_energy,
)
from gridfnapp.grid_core import make_level
from gridfnapp.writer import machine_summary, plain_summary, write_report, write_text_summary


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_experiment_reproduces_at_defaults(name):
    report = run_experiment(config_for(name))
    assert report.published_failures == []
    assert report.passed
    assert report.checks


def test_registry_entries_are_complete():
    assert len(REGISTRY) == 16
    for e in REGISTRY.values():
        assert e.description and e.reproduces and e.tags


@pytest.mark.parametrize("n, m", [(720, 30), (1440, 40), (2880, 60), (64, 8), (50, 10)])
def test_default_m_rule(n, m):
    assert default_m_rule(n) == m
    assert n % m == 0


@pytest.mark.parametrize("ramp", ["linear", "smoothstep", "cubic"])
def test_heaviside_ramp_profile(ramp):
    level = make_level(0, 720, 5)
    h = heaviside_ramp(level, 30, ramp)
    assert h.at(0) == 0.0
    assert h.at(-5) == 0.0
    assert h.at(30) == 1.0
    assert h.at(3000) == 1.0
    assert 0.0 < h.at(15) < 1.0


def test_unknown_ramp_is_a_config_error():
    with pytest.raises(ConfigError):
        heaviside_ramp(make_level(0, 720), 30, "sigmoid")


def test_informational_ramp_does_not_gate():
    report = run_experiment(config_for("heaviside-product", params={"ramp": "smoothstep"}))
    assert report.passed
    assert all(not c.gating for c in report.checks)


def test_square_wave_energy():
    level = make_level(0, 720)
    f = square_wave(level, 360)
    assert f.at(0) == 1.0 and f.at(1) == -1.0
    e = variational_energy(f)
    assert e == pytest.approx(0.5 / 720**2 + 1 / 720**3, rel=1e-9)


def test_alternating_values():
    a = alternating(make_level(0, 8))
    assert list(a.point_values()) == [-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0]


# ---------------------------------------------------------
# ad-hoc solves
# ---------------------------------------------------------

def _solve_cfg(**solve):
    return build_config({"solve": solve}, experiment_defaults=experiment_defaults(),
                        experiment_params=experiment_params())


@pytest.mark.parametrize("rhs", ["sine", "constant", "bump", "point"])
def test_adhoc_solve(rhs):
    report = adhoc_solve(_solve_cfg(rhs=rhs, n_cells=64))
    assert report.passed
    (table,) = report.tables
    assert table.columns == ("x", "u")
    assert len(table.rows) == 65


def test_adhoc_sine_tracks_continuous_solution():
    report = adhoc_solve(_solve_cfg(rhs="sine", n_cells=64, reaction=1.0))
    info = [c for c in report.checks if c.informational]
    assert info and info[0].passed


def test_adhoc_solve_2d():
    report = run_experiment(_solve_cfg(rhs="sine", n_cells=16, dim=2))
    assert report.tables[0].columns == ("x", "y", "u")
    assert len(report.tables[0].rows) == 17 * 17


# ---------------------------------------------------------
# reports on disk
# ---------------------------------------------------------

def _toy_report():
    r = ExperimentReport("toy")
    r.check(expect_close("exact", 1.0, 1.0, 0.0, PUBLISHED))
    r.check(expect_close("loose", 2.0, 1.0, 0.1, DERIVED))
    r.table(ladder_table("values", [(720, 0.1), (1440, 1 / 3)], None, 0.0, DERIVED, True))
    return r.finish()


def test_csv_tables(tmp_path):
    written = write_report(tmp_path, _toy_report(), "csv")
    csv_path = tmp_path / "toy" / "values.csv"
    assert csv_path in written
    raw = csv_path.read_bytes()
    assert b"\r\n" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "N,value,extrapolated,expected,provenance,pass"
    assert lines[2] == f"1440,{1 / 3:.17g},nan,0,derived,true"


def test_json_report(tmp_path):
    write_report(tmp_path, _toy_report(), "json", {"seed": 0})
    data = json.loads((tmp_path / "toy" / "report.json").read_text())
    assert data["passed"] is True
    assert data["config"] == {"seed": 0}
    assert data["tables"][0]["rows"][0][0] == 720
    assert data["tables"][0]["rows"][0][2] is None
    assert not (tmp_path / "toy" / "values.csv").exists()


def test_derived_failure_still_passes():
    r = _toy_report()
    one, lines = plain_summary(r)
    assert r.passed
    assert "1 derived check(s) off" in one
    assert lines[0].startswith("loose")


def test_text_and_machine_summaries(tmp_path):
    r = _toy_report()
    write_text_summary(tmp_path, [r])
    text = (tmp_path / "summary.txt").read_text()
    assert "[PASS] toy" in text
    assert "Overall    : 1/1 passed" in text
    summary = machine_summary([r], tmp_path)
    assert summary["passed"] is True
    assert summary["experiments"][0]["failed"] == ["loose"]
    assert np.isfinite(summary["experiments"][0]["runtime_s"])
