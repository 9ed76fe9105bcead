"""Command line: run, sweep, audit, render.

Exit status 0 on success, 1 when an audit fails, 2 on configuration or input
errors, 3 when a run aborts on a non-finite state.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, NumericAbort, PiccoloError

EXIT_OK, EXIT_AUDIT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="piccolo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"piccolo {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run every seed of one configuration")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--out", required=True, type=Path)
    r.add_argument("--seed", type=int, default=None, help="override run.seed (unsigned 64-bit)")

    s = sub.add_parser("sweep", help="run the Cartesian product of the [sweep] lists")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)

    a = sub.add_parser("audit", help="recompute the regret-bound audit from saved states")
    a.add_argument("--trace", required=True, type=Path)
    a.add_argument("--states", required=True, type=Path)

    v = sub.add_parser("render", help="draw a column of a trace or sweep CSV as SVG")
    v.add_argument("--in", dest="inp", required=True, type=Path)
    v.add_argument("--col", required=True)
    v.add_argument("--out", required=True, type=Path)
    v.add_argument("--x", default=None, help="x column (default n, or N for sweeps)")
    v.add_argument("--group", default=None, help="column whose values label separate series")
    return p


def _cmd_run(args) -> int:
    from .config import load, set_path
    from .experiment import write_run

    cfg = load(args.config)
    if cfg.sweep:
        raise ConfigError("sweep: use the sweep verb for configs with a [sweep] table")
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed: must be an unsigned 64-bit integer")
        cfg = set_path(cfg, "run.seed", args.seed)
    outcomes = write_run(cfg, args.out)
    aborted = [o.report for o in outcomes if o.report["status"] == "aborted"]
    if aborted:
        first = aborted[0]
        print(f"seed {first['seed']} aborted at round {first['abort_round']}: non-finite state", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {len(outcomes)} seed(s) to {args.out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .config import load
    from .experiment import write_sweep

    cfg = load(args.config)
    records = write_sweep(cfg, args.out)
    print(f"wrote {len(records)} run(s) and sweep.csv to {args.out}")
    return EXIT_NUMERIC if any(r["aborted"] for r in records) else EXIT_OK


def _cmd_audit(args) -> int:
    import csv

    import numpy as np

    from .experiment import audit_states

    if not args.trace.is_file():
        raise ConfigError(f"--trace: no such file {args.trace}")
    if not (args.states / "config.toml").is_file():
        raise ConfigError(f"--states: {args.states} has no config.toml")
    with open(args.trace, newline="") as fh:
        rows = list(csv.DictReader(fh))
    last = {}
    for row in rows:
        last[int(row["seed"])] = row
    ok = True
    for res in audit_states(args.states):
        row = last.get(res["seed"])
        if res["vacuous"]:
            blank = row is not None and not row["bound_slack"]
            ok &= blank
            print(f"seed {res['seed']}: not audited (mode or learner outside the bound, or unbounded regularizer); "
                  f"trace slack {'empty as expected' if blank else 'UNEXPECTED'}")
            continue
        recorded = float(row["bound_slack"]) if row and row["bound_slack"] else float("nan")
        agree = np.isclose(recorded, res["slack"], rtol=1e-9, atol=1e-9)
        ok &= bool(res["passed"] and agree)
        print(f"seed {res['seed']}: lhs={res['lhs']:.6g} rhs={res['rhs']:.6g} slack={res['slack']:.6g} "
              f"{'PASS' if res['passed'] else 'FAIL'}; trace slack {'matches' if agree else 'DIFFERS'}")
    return EXIT_OK if ok else EXIT_AUDIT


def _cmd_render(args) -> int:
    from .render import render

    render(args.inp, args.col, args.out, x=args.x, group=args.group)
    print(f"wrote {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "audit": _cmd_audit, "render": _cmd_render}[args.verb]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericAbort as exc:
        print(f"numeric abort at round {exc.round_index}", file=sys.stderr)
        return EXIT_NUMERIC
    except PiccoloError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
