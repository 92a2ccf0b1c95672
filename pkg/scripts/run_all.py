"""Run every shipped config (or the ones named) through the CLI, then report.

    python3 scripts/run_all.py [--out results] [--skip-slow] [name ...]
"""
import argparse
import sys
from pathlib import Path

from fkscenery.harness.cli import EXIT_OK, main

ROOT = Path(__file__).resolve().parents[1]
SLOW = {"homog_rate_blob_d3", "spde_moments_d3"}


def run(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="config stems under configs/")
    ap.add_argument("--out", default="results")
    ap.add_argument("--skip-slow", action="store_true", help=f"skip {sorted(SLOW)}")
    args = ap.parse_args(argv)
    names = args.names or sorted(p.stem for p in (ROOT / "configs").glob("*.json"))
    if args.skip_slow:
        names = [n for n in names if n not in SLOW]
    worst = EXIT_OK
    for name in names:
        print(f"== {name}", flush=True)
        worst = max(worst, main(["run", str(ROOT / "configs" / f"{name}.json"), "-o", str(Path(args.out) / name)]))
    print("== report")
    return max(worst, main(["report", args.out]))


if __name__ == "__main__":
    sys.exit(run())
