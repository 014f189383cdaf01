#!/usr/bin/env python3
"""Run Monte-Carlo batches for both road settings and print the outcome
table next to the reference percentages."""

import argparse
from pathlib import Path

from lanechange.batch import run_batch
from lanechange.reporting import write_batch_outputs

REFERENCE = {"urban": 62.46, "highway": 55.58}  # reported success rates


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--runs", type=int, default=500)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--strict-traffic", action="store_true")
    parser.add_argument("--output", type=Path, default=Path("out/batch"))
    args = parser.parse_args()

    for env in ("urban", "highway"):
        report = run_batch(env, args.runs, base_seed=args.seed,
                           workers=args.workers, strict=args.strict_traffic)
        outdir = args.output / env
        write_batch_outputs(report, outdir)
        print(f"{env} ({args.runs} runs, "
              f"{'strict' if args.strict_traffic else 'default'} traffic, "
              f"{report.wall_time:.0f}s):")
        for outcome, pct in report.outcome_percentages.items():
            print(f"  {outcome:25s} {pct:6.2f}%")
        print(f"  reference success            {REFERENCE[env]:6.2f}%")
        print(f"  -> {outdir}")


if __name__ == "__main__":
    main()
