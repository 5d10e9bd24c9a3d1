import json

import pytest

from gridfnapp.main import EXIT_OK, EXIT_USAGE, main


def test_run_writes_tables_and_summary(tmp_path):
    rc = main(["run", "--experiment", "identities", "--out", str(tmp_path), "-q"])
    assert rc == EXIT_OK
    folder = tmp_path / "identities"
    assert (folder / "report.json").is_file()
    assert list(folder.glob("*.csv"))
    assert "[PASS] identities" in (tmp_path / "summary.txt").read_text()


def test_run_json_format(tmp_path):
    rc = main(["run", "--experiment", "identities", "--out", str(tmp_path), "--format", "json", "-q"])
    assert rc == EXIT_OK
    assert not list((tmp_path / "identities").glob("*.csv"))
    report = json.loads((tmp_path / "identities" / "report.json").read_text())
    assert report["name"] == "identities"
    assert report["config"]["output"]["format"] == "json"


def test_machine_summary_on_stdout(tmp_path, capsys):
    rc = main(["run", "--experiment", "identities", "--out", str(tmp_path), "--json", "-q"])
    out = json.loads(capsys.readouterr().out)
    assert rc == EXIT_OK
    assert out["passed"] is True
    assert out["experiments"][0]["name"] == "identities"


def test_too_few_levels_is_a_usage_error(tmp_path, capsys):
    rc = main(["run", "--experiment", "identities", "--levels", "2", "--out", str(tmp_path)])
    assert rc == EXIT_USAGE
    assert "ladder.levels" in capsys.readouterr().err


def test_unknown_experiment_is_a_usage_error(tmp_path):
    assert main(["run", "--experiment", "nope", "--out", str(tmp_path)]) == EXIT_USAGE


def test_nothing_to_run(capsys):
    assert main(["run"]) == EXIT_USAGE
    assert "--experiment" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == EXIT_USAGE


def test_adhoc_solve(tmp_path):
    rc = main(["run", "--solve-rhs", "sine", "--n-cells", "64", "--out", str(tmp_path), "-q"])
    assert rc == EXIT_OK
    lines = (tmp_path / "solve" / "solution.csv").read_text().splitlines()
    assert lines[0] == "x,u"
    assert len(lines) == 66


def test_bad_choice_exits_through_argparse():
    with pytest.raises(SystemExit) as info:
        main(["run", "--experiment", "identities", "--method", "gmres"])
    assert info.value.code == 2


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "heaviside-product" in out
    assert "reproduces:" in out


def test_list_json_filter(capsys):
    assert main(["list", "--json", "--filter", "poisson"]) == EXIT_OK
    entries = json.loads(capsys.readouterr().out)
    assert [e["name"] for e in entries] == ["nonlinear-poisson", "poisson-1d", "poisson-2d"]


def test_list_filter_without_matches(capsys):
    assert main(["list", "--filter", "zzz"]) == EXIT_OK
    assert "no experiments match" in capsys.readouterr().out
