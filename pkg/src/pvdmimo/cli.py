"""Command-line front end: run / sweep / validate experiment configs.

Exit codes: 0 on success, 1 on configuration errors, 2 on runtime
failures. The PVDMIMO_SEED environment variable overrides the master
seed of any invocation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .harness import (
    ConfigError,
    load_config,
    run_experiment,
    sweep,
    validate_dict,
)


def _parse_values(text: str) -> list[float]:
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        v = float(tok)
        vals.append(int(v) if v.is_integer() else v)
    return vals


def _parse_links(items: list[str]) -> dict:
    links = {}
    for item in items:
        path, _, expr = item.partition("=")
        if not expr:
            raise ConfigError(f"--link expects PATH=EXPR, got {item!r}")
        links[path.strip()] = expr.strip()
    return links


def _apply_overrides(cfg: dict, args) -> dict:
    env_seed = os.environ.get("PVDMIMO_SEED")
    if env_seed is not None:
        cfg["seed"] = int(env_seed)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        cfg["trials"] = args.trials
    if getattr(args, "out", None) is not None:
        cfg["out"] = args.out
    if getattr(args, "workers", None) is not None:
        cfg["workers"] = args.workers
    if getattr(args, "diagnostics", False):
        cfg["diagnostics"] = True
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvdmimo",
        description="Blind MIMO recovery experiments: Monte Carlo runs, sweeps, "
                    "and config validation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="path to the JSON experiment config")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--trials", type=int, help="override the trial count")
        p.add_argument("--out", help="override the output CSV path")
        p.add_argument("--workers", type=int, help="override the worker count")
        p.add_argument("--diagnostics", action="store_true",
                       help="also write the per-step reverse-process trace")

    p_run = sub.add_parser("run", help="run the Monte Carlo experiment")
    common(p_run)

    p_sweep = sub.add_parser("sweep", help="sweep one numeric config field")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True, help="dotted config path, e.g. dims.N_t")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values, e.g. 1,2,4")
    p_sweep.add_argument("--link", action="append", default=[],
                         metavar="PATH=EXPR",
                         help="recompute another field from the swept value x, "
                              "e.g. dims.N_r=8*x")

    p_val = sub.add_parser("validate", help="check a config and report violations")
    p_val.add_argument("config")
    p_val.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    if args.command == "validate":
        problems = validate_dict(cfg)
        for msg in problems:
            print(msg)
        if problems:
            print(f"{len(problems)} violation(s)")
            return 1
        print("config ok")
        return 0

    try:
        cfg = _apply_overrides(cfg, args)
        if args.command == "run":
            problems = validate_dict(cfg)
            if problems:
                for msg in problems:
                    print(msg, file=sys.stderr)
                return 1
            records = run_experiment(cfg)
            errors = sum(1 for r in records if r.error)
            print(f"{len(records)} rows ({errors} error-flagged)"
                  + (f" -> {cfg.get('out')}" if cfg.get("out") else ""))
            return 0
        if args.command == "sweep":
            problems = validate_dict(cfg)
            if problems:
                for msg in problems:
                    print(msg, file=sys.stderr)
                return 1
            values = _parse_values(args.values)
            if not values:
                print("sweep error: empty value list", file=sys.stderr)
                return 1
            summary = sweep(cfg, args.param, values,
                            links=_parse_links(args.link), out=args.out)
            for row in summary:
                print(f"{row['param']}={row['value']}: rows={row['rows']} "
                      f"errors={row['errors']} nmse_db_median={row['nmse_db_median']}")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
