"""Command-line entry point.

    vorpde <experiment> [--config FILE] [--seed S] [--grid N] [--out DIR]
                        [--override key=value ...]
    vorpde verify [--out DIR]

Experiments write their artifacts plus a manifest.json of file hashes and
assertion outcomes; `verify` runs the full acceptance battery and prints one
pass/fail line per criterion. Exit codes: 0 all assertions passed, 2 outputs
produced but an assertion failed, 1 on configuration or runtime errors.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, OUT_ENV_VAR, parse_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vorpde",
        description="PDE routes to Voronoi and power tessellations, with exact-oracle cross-checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", default=None, help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--grid", type=int, default=None, help="override the grid resolution")
        p.add_argument("--out", default=None, help=f"output directory (or ${OUT_ENV_VAR})")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override any config key (repeatable)",
        )
    v = sub.add_parser("verify", help="run the acceptance criteria and print a pass/fail table")
    v.add_argument("--out", default=None, help="where to write verify_report.json")
    return parser


def _run_verify(out: str) -> int:
    from .acceptance import run_all, summary_dict

    start = time.perf_counter()
    results = run_all(echo=print)
    total = time.perf_counter() - start
    summary = summary_dict(results)
    ok = summary["all_passed"] and total < 300.0
    print(f"{'ALL CRITERIA PASSED' if ok else 'FAILURES PRESENT'} in {total:.1f}s")
    if out:
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "verify_report.json").write_text(
            json.dumps(summary, sort_keys=True, indent=2, default=float) + "\n"
        )
    return 0 if ok else 2


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "verify":
        return _run_verify(args.out)
    try:
        cfg = parse_config(
            args.command,
            config_path=args.config,
            flag_values={"seed": args.seed, "grid": args.grid, "out": args.out},
            overrides=args.override,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        from .runner import run_experiment

        return run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - contract: errors exit 1 with a message
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
