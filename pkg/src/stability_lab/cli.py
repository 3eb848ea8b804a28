"""Command line entry point: ``stability-lab {run,list,plot-data}``."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .errors import MissingRunError, UnknownScenarioError
from .experiments import (
    apply_overrides,
    emit_plot_data,
    list_scenarios,
    load_config,
    resolve_config,
    run,
)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stability-lab", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--output-dir", help="root directory for run outputs "
                    "(default: $STABILITY_LAB_OUTPUT_DIR or ./runs)")
    ap.add_argument("--quiet", action="store_true", help="only print failures")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one or more scenarios")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="TOML config file")
    src.add_argument("--scenario", action="append", help="scenario name (repeatable)")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. evolution.dt=0.002")
    r.add_argument("--jobs", type=int, default=1, help="scenarios to run in parallel")

    sub.add_parser("list", help="list registered scenarios")

    p = sub.add_parser("plot-data", help="write plot-ready CSVs and PNG figures for a run")
    p.add_argument("run_dir")
    p.add_argument("--no-figures", action="store_true", help="CSV tables only")
    return ap


def _run_one(args):
    data, output_dir = args
    m = run(data, output_dir=output_dir)
    return m.run_dir, m.pass_vector, m.errors


def _report(run_dir, vector, errors, quiet):
    for name, ok in vector:
        if not (quiet and ok):
            print(f"{'PASS' if ok else 'FAIL'}  {name}")
    for e in errors:
        print(f"ERROR {e['group']}: {e['type']}: {e['message']}")
    if not quiet:
        print(f"-> {run_dir}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("stability_lab.experiments").setLevel(logging.WARNING)

    if args.command == "list":
        for name, desc in list_scenarios():
            print(f"{name:22s} {desc}")
        return 0

    if args.command == "plot-data":
        try:
            written = emit_plot_data(args.run_dir, render=not args.no_figures)
        except MissingRunError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for path in sorted(written):
            print(path)
        return 0

    if args.config:
        configs = [load_config(args.config)]
    else:
        configs = [{"scenario": name} for name in args.scenario]
    try:
        configs = [apply_overrides(c, args.overrides) for c in configs]
        for c in configs:
            resolve_config(c)    # fail before anything is written
    except (UnknownScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    jobs = [(c, args.output_dir) for c in configs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    failed = False
    for run_dir, vector, errors in results:
        _report(run_dir, vector, errors, args.quiet)
        failed |= bool(errors) or not all(ok for _, ok in vector)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
