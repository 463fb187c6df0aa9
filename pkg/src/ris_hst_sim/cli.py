"""Command line interface.

Exit codes: 0 success, 2 configuration error, 3 I/O error on output,
4 numerical failure budget exceeded (more than 1% of scheme-trials).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import __version__
from .harness import ConfigurationError, emit_csv, load_config, run_experiment

_FAILURE_BUDGET = 0.01


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ris-hst-sim",
        description="Link-level simulator for a RIS-assisted high-speed-train MISO downlink",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON experiment configuration")
        p.add_argument("--trials", type=int, help="override trial count")
        p.add_argument("--seed", type=int, help="override random seed")
        p.add_argument("--experiment", help="override experiment name")
        p.add_argument("--jobs", type=int, help="parallel worker processes")

    run = sub.add_parser("run", help="run an experiment and write CSV results")
    add_common(run)
    run.add_argument("--out", help="output CSV path (overrides config output_path)")

    val = sub.add_parser("validate", help="check a configuration without running")
    val.add_argument("--config", required=True)

    rep = sub.add_parser("report", help="run an experiment, write CSV and a figure")
    add_common(rep)
    rep.add_argument("--out-dir", default=".", help="directory for CSV and figure output")
    return parser


def _apply_overrides(cfg, args):
    updates = {}
    if args.trials is not None:
        updates["trials"] = args.trials
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.experiment is not None:
        updates["experiment"] = args.experiment
    if getattr(args, "jobs", None) is not None:
        updates["jobs"] = args.jobs
    return replace(cfg, **updates) if updates else cfg


def _check_failures(table, cfg) -> int:
    total = cfg.trials * len(cfg.schemes)
    if total and table.failures_total / total > _FAILURE_BUDGET:
        print(
            f"error: {table.failures_total} of {total} scheme-trials failed "
            f"(budget {_FAILURE_BUDGET:.0%})",
            file=sys.stderr,
        )
        return 4
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command != "validate":
            cfg = _apply_overrides(cfg, args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate":
        print(f"ok: {args.config} is a valid {cfg.experiment} configuration "
              f"({cfg.trials} trials, seed {cfg.seed})")
        return 0

    table = run_experiment(cfg)

    if args.command == "run":
        out = args.out or cfg.output_path or f"{cfg.experiment}.csv"
        try:
            emit_csv(table, out)
        except IOError as exc:
            print(f"i/o error: {exc}", file=sys.stderr)
            return 3
        print(f"wrote {len(table.rows)} rows to {out}")
        return _check_failures(table, cfg)

    # report: CSV plus rendered figure
    from .plotting import render_table

    try:
        os.makedirs(args.out_dir, exist_ok=True)
        csv_path = os.path.join(args.out_dir, f"{cfg.experiment}.csv")
        fig_path = os.path.join(args.out_dir, f"{cfg.experiment}.png")
        emit_csv(table, csv_path)
        render_table(table, fig_path)
    except (IOError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {csv_path} and {fig_path}")
    return _check_failures(table, cfg)


if __name__ == "__main__":
    sys.exit(main())
