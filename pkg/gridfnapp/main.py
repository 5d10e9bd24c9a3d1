#!/usr/bin/env python3
"""
gridfn – command-line front end
- run: one named experiment (or `all`), or an ad-hoc solve, then CSV/JSON
  tables, report.json and summary.txt under --out
- list: the experiment catalogue (--json, --filter)

Exit status: 0 when every published expectation passes, 1 when one fails
or an experiment aborts, 2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from gridfnapp.catalog import catalog, catalog_json, format_catalog
from gridfnapp.config import FORMATS, METHODS, SCHEMES, SOLVE_RHS, build_config
from gridfnapp.errors import ConfigError, GridFnError
from gridfnapp.experiments import REGISTRY, experiment_defaults, experiment_params, run_experiment
from gridfnapp.writer import machine_summary, write_report, write_text_summary

log = logging.getLogger("gridfn")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
ALL = "all"


def _print_err(msg: str):
    print(msg, file=sys.stderr, flush=True)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridfn", description="gridfn – grid-function calculus experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run an experiment or an ad-hoc solve")
    run.add_argument("--experiment", default=None, help=f"Experiment name, or '{ALL}'")
    run.add_argument("--config", default=None, help="JSON file mirroring RunConfig")
    run.add_argument("--preset", default=None, help="Named preset from the bundled presets.json")
    run.add_argument("--levels", type=int, default=None, help="Ladder levels (>= 3)")
    run.add_argument("--base", type=int, default=None, help="Coarsest N")
    run.add_argument("--window", default=None, help="Half-width L of [-L, L] (rational, e.g. 5 or 1/2)")
    run.add_argument("--stride", type=int, default=None, help="Doublings between ladder levels")
    run.add_argument("--out", default=None, help="Output directory")
    run.add_argument("--format", choices=FORMATS, default=None)
    run.add_argument("--seed", type=int, default=None, help="Battery seed")
    run.add_argument("--count", type=int, default=None, help="Bumps per battery")
    run.add_argument("--tol", type=float, default=None, help="Solver tolerance")
    run.add_argument("--method", choices=METHODS, default=None)
    run.add_argument("--scheme", choices=SCHEMES, default=None)
    run.add_argument("--dt", type=float, default=None)
    run.add_argument("--T", dest="t_end", type=float, default=None, help="Final time")
    # heaviside-product knobs
    run.add_argument("--m", type=int, default=None)
    run.add_argument("--n", type=int, default=None)
    run.add_argument("--ramp", default=None, help="Ramp profile: linear, smoothstep, cubic")
    # ad-hoc solve
    run.add_argument("--solve-rhs", choices=SOLVE_RHS, default=None, help="Ad-hoc solve with this load")
    run.add_argument("--dim", type=int, default=None)
    run.add_argument("--n-cells", type=int, default=None)
    run.add_argument("--diffusion", type=float, default=None)
    run.add_argument("--reaction", type=float, default=None)
    run.add_argument("--json", action="store_true", help="Machine-readable summary on stdout")
    run.add_argument("--verbose", "-v", action="store_true")
    run.add_argument("--quiet", "-q", action="store_true")

    ls = sub.add_parser("list", help="List experiments")
    ls.add_argument("--json", action="store_true")
    ls.add_argument("--filter", default=None, help="Match name, tags or description")
    return ap


def _section(**kw) -> dict:
    return {k: v for k, v in kw.items() if v is not None}


def _flags(args, experiment: str | None) -> dict:
    """Nested override tree from the command line; unset flags are omitted."""
    tree = {
        "experiment": experiment,
        "ladder": _section(levels=args.levels, base=args.base, window=args.window, stride=args.stride),
        "battery": _section(seed=args.seed, count=args.count),
        "solver": _section(tol=args.tol, method=args.method, scheme=args.scheme, dt=args.dt, T=args.t_end),
        "output": _section(out_dir=args.out, format=args.format),
        "params": _section(m=args.m, n=args.n, ramp=args.ramp),
    }
    solve = _section(rhs=args.solve_rhs, dim=args.dim, n_cells=args.n_cells,
                     diffusion=args.diffusion, reaction=args.reaction)
    if solve:
        tree["solve"] = solve
    return {k: v for k, v in tree.items() if v not in (None, {})}


def _configs(args) -> list:
    names = sorted(REGISTRY) if args.experiment == ALL else [args.experiment]
    kw = dict(config_file=args.config, preset=args.preset,
              experiment_defaults=experiment_defaults(), experiment_params=experiment_params())
    return [build_config(_flags(args, name), **kw) for name in names]


def _run(args) -> int:
    try:
        configs = _configs(args)
    except ConfigError as e:
        _print_err(f"config error: {e}")
        return EXIT_USAGE

    reports = []
    for cfg in configs:
        try:
            reports.append(run_experiment(cfg))
        except ConfigError as e:
            _print_err(f"config error: {e}")
            return EXIT_USAGE
        except GridFnError as e:
            _print_err(f"[{cfg.experiment or 'solve'}] aborted: {e}")
            return EXIT_FAIL

    out = Path(configs[0].output.out_dir)
    for cfg, r in zip(configs, reports):
        write_report(out, r, cfg.output.format, cfg.to_dict())
    write_text_summary(out, reports)

    if args.json:
        print(json.dumps(machine_summary(reports, out), indent=2), flush=True)
    else:
        for r in reports:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  ({r.runtime:.2f}s)", flush=True)
            for c in r.published_failures:
                print(f"  failed: {c.name} observed={c.observed} expected={c.expected}", flush=True)
        print(f"Saved: {out}", flush=True)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def _list(args) -> int:
    entries = catalog(args.filter)
    print(catalog_json(entries) if args.json else format_catalog(entries), flush=True)
    return EXIT_OK


def main(argv=None) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)
    level = logging.INFO
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s %(message)s")

    if args.command == "list":
        return _list(args)
    if args.experiment is None and args.solve_rhs is None and args.config is None:
        _print_err("give --experiment <name>, --solve-rhs <load> or --config <file>")
        return EXIT_USAGE
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
