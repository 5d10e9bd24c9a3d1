"""Report files: one CSV per table, a JSON report per run and summary.txt."""
from __future__ import annotations

import platform
from pathlib import Path

import numpy as np
import scipy

from gridfnapp.util_io import write_csv_atomic, write_json_atomic, write_text_atomic

__all__ = ["write_report", "plain_summary", "write_text_summary", "machine_summary"]


def _run_meta() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def write_report(outdir: Path, report, fmt: str = "csv", config: dict | None = None) -> list[Path]:
    """Write the tables and the JSON report of one experiment under outdir/<name>/."""
    folder = Path(outdir) / report.name
    written = []
    if fmt == "csv":
        for t in report.tables:
            dest = folder / f"{t.name}.csv"
            write_csv_atomic(t.columns, t.rows, dest)
            written.append(dest)
    payload = report.to_dict()
    if fmt == "csv":
        payload["tables"] = [{"name": t.name, "description": t.description, "file": f"{t.name}.csv"}
                             for t in report.tables]
    payload["config"] = config
    payload["meta"] = _run_meta()
    dest = folder / "report.json"
    write_json_atomic(payload, dest)
    written.append(dest)
    return written


def plain_summary(report) -> tuple[str, list[str]]:
    """One line verdict plus up to three failing checks in plain words."""
    failed = report.failures
    if report.passed and not failed:
        return f"{report.name}: all {len(report.checks)} checks passed.", []
    if report.passed:
        one = f"{report.name}: published results reproduced; {len(failed)} derived check(s) off."
    else:
        one = f"{report.name}: {len(report.published_failures)} published check(s) failed."
    lines = []
    for c in failed[:3]:
        dev = "n/a" if c.deviation != c.deviation else f"{c.deviation:.3g}"
        lines.append(f"{c.name} (observed {c.observed}, expected {c.expected}, deviation {dev}, {c.provenance})")
    return one, lines


def write_text_summary(outdir: Path, reports):
    lines = ["Run result", "----------"]
    for r in reports:
        one, fix = plain_summary(r)
        lines.append(f"[{'PASS' if r.passed else 'FAIL'}] {one}  ({r.runtime:.2f}s)")
        lines += [f"    - {f}" for f in fix]
    lines.append("")
    passed = sum(r.passed for r in reports)
    lines.append(f"Overall    : {passed}/{len(reports)} passed")
    lines.append("")
    write_text_atomic("\n".join(lines), Path(outdir) / "summary.txt")


def machine_summary(reports, outdir: Path | None = None) -> dict:
    return {
        "passed": all(r.passed for r in reports),
        "out_dir": None if outdir is None else str(outdir),
        "experiments": [
            {"name": r.name, "passed": r.passed, "runtime_s": r.runtime,
             "checks": len(r.checks), "failed": [c.name for c in r.failures]}
            for r in reports
        ],
    }
