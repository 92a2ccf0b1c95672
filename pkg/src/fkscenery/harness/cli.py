"""Command line: fkscenery run|validate|report.

Exit codes: 0 success, 2 configuration error, 3 acceptance-check failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .runner import load_summaries, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK = 3


def _print_checks(name: str, checks) -> None:
    for c in checks:
        c = c if isinstance(c, dict) else c.__dict__
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {name}: {c['name']}  ({c['detail']})")


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: {cfg.kind} config {args.config} (hash {cfg.content_hash()})")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    rep = run_experiment(cfg, Path(args.output) if args.output else None)
    _print_checks(cfg.label, rep.checks)
    print(f"wrote {rep.csv_path} and {rep.summary_path}")
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_report(args) -> int:
    try:
        docs = load_summaries(args.output_dir)
    except (FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not docs:
        print(f"report error: no summaries under {args.output_dir}", file=sys.stderr)
        return EXIT_CONFIG
    for doc in docs:
        print(f"# {doc['name']} [{doc['kind']}] {doc['_path']} ({doc['wall_time_s']:.1f} s)")
        for key, fit in doc.get("fits", {}).items():
            print(f"  fit {key}: exponent {fit['exponent']:.4f} +- {fit['stderr']:.4f}")
        _print_checks(doc["name"], doc["checks"])
    return EXIT_OK if all(d["passed"] for d in docs) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fkscenery", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="output directory (overrides the config)")
    p.set_defaults(fn=cmd_run)
    p = sub.add_parser("validate", help="validate a config without computing")
    p.add_argument("config")
    p.set_defaults(fn=cmd_validate)
    p = sub.add_parser("report", help="summarize the checks found under an output directory")
    p.add_argument("output_dir")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
