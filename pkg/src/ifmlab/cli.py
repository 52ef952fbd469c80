"""``ifmlab`` command line entry point.

Exit status: 0 when every row is ``ok``, 1 when some row failed numerical
verification, 2 for config or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .harness import ConfigError, config_from_dict, load_config, rows_to_csv, run_config, validate_config
from .serialize import dumps

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG = 0, 1, 2


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_out(p, default="csv", help_text="'csv' writes CSV to stdout; anything else is a file path"):
    p.add_argument("--out", default=default, help=help_text)
    p.add_argument("--manifest", help="write a JSON run manifest to this path")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (output order is unchanged)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ifmlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ifmlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kwiat-sweep", help="equal-angle rotation schedules over several T")
    p.add_argument("--t-list", type=_int_list, required=True, help="e.g. 10,100,1000")
    p.add_argument("--model", default="default", help="'default' or a model JSON file")
    p.add_argument("--full-max-t", type=int, default=6, help="largest T simulated with all environment slots")
    _add_out(p)

    p = sub.add_parser("audit", help="per-step audit of the bound chain for one schedule")
    p.add_argument("--schedule", required=True, help="schedule JSON file")
    p.add_argument("--model", default="default", help="'default' (or the schedule's own model) or a model file")
    p.add_argument("--full-max-t", type=int, default=6)
    _add_out(p)

    p = sub.add_parser("optimize", help="minimize distortion at a target error")
    p.add_argument("--t", type=_int_list, required=True, help="number of queries (comma list allowed)")
    p.add_argument("--eps", type=_float_list, required=True, help="target error (comma list allowed)")
    p.add_argument("--seed", type=_int_list, default=[0])
    p.add_argument("--model", default="default")
    _add_out(p)

    p = sub.add_parser("reduce", help="reduce a unitary family to a commuting one")
    p.add_argument("--family", required=True, help="family JSON file (d, labels, matrices)")
    p.add_argument("--seed", type=int, default=0)
    _add_out(p, default="json", help_text="'json' prints the program, 'csv' prints the step table, "
                                          "else a path for the program JSON")

    p = sub.add_parser("discriminate", help="repeated discrimination runs against a hidden member")
    p.add_argument("--family", required=True)
    p.add_argument("--hidden", required=True)
    p.add_argument("--delta", type=_float_list, required=True)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--seed", type=_int_list, default=[0])
    p.add_argument("--audit-mid-block", action="store_true", help="also trace distortion inside blocks")
    _add_out(p)

    p = sub.add_parser("qpe-demo", help="phase estimation outcome distribution")
    p.add_argument("--phase", type=_float_list, required=True, help="eigenphase as a fraction of a turn")
    p.add_argument("--ancillas", type=int, default=3)
    _add_out(p)

    p = sub.add_parser("validate", help="check a config file")
    p.add_argument("config")

    p = sub.add_parser("run", help="run a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, help="override the config's worker count")
    return parser


def _config_dict(args) -> dict:
    c = args.command
    data: dict = {"jobs": args.jobs}
    if c == "kwiat-sweep":
        data.update(scenario=c, t_values=args.t_list, model=args.model, full_max_t=args.full_max_t)
    elif c == "audit":
        data.update(scenario=c, schedule=args.schedule, model=args.model, full_max_t=args.full_max_t)
    elif c == "optimize":
        data.update(scenario=c, t_values=args.t, eps_values=args.eps, seeds=args.seed, model=args.model)
    elif c == "reduce":
        data.update(scenario=c, family=args.family, seeds=[args.seed])
    elif c == "discriminate":
        data.update(scenario=c, family=args.family, hidden=args.hidden, delta_values=args.delta,
                    runs=args.runs, seeds=args.seed, audit_mid_block=args.audit_mid_block)
    elif c == "qpe-demo":
        data.update(scenario=c, phases=args.phase, ancillas=args.ancillas)
    output = {}
    if args.manifest:
        output["manifest"] = args.manifest
    if c == "reduce":
        if args.out not in ("json", "csv"):
            output["program"] = args.out
    elif args.out != "csv":
        output["csv"] = args.out
    data["output"] = output
    return data


def _report(result) -> int:
    failed = [r for r in result.rows if r.get("status") != "ok"]
    for r in failed:
        print(f"ifmlab: {r.get('status')}", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            diags = validate_config(args.config)
            for d in diags:
                print(d, file=sys.stderr)
            if not diags:
                print(f"{args.config}: ok")
            return EXIT_CONFIG if diags else EXIT_OK
        if args.command == "run":
            cfg = load_config(args.config)
            if args.jobs is not None:
                cfg.jobs = args.jobs
            result = run_config(cfg)
            if not cfg.output.get("csv"):
                sys.stdout.write(rows_to_csv(result.columns, result.rows))
            return _report(result)
        cfg = config_from_dict(_config_dict(args), Path.cwd())
        result = run_config(cfg)
        if args.command == "reduce" and args.out == "json":
            if result.program is not None:
                sys.stdout.write(dumps(result.program, indent=1, sort_keys=True) + "\n")
        elif args.out == "csv":
            sys.stdout.write(rows_to_csv(result.columns, result.rows))
        return _report(result)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"ifmlab: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
