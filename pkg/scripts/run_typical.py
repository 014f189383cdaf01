#!/usr/bin/env python3
"""Run the three pre-designed lane change studies and export their traces."""

import argparse
from pathlib import Path

from lanechange.reporting import trace_summary, write_trace_outputs
from lanechange.scenarios import build_typical
from lanechange.sim import run


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--output", type=Path, default=Path("out/typical"))
    args = parser.parse_args()

    for n in (1, 2, 3):
        trace = run(build_typical(n))
        outdir = args.output / f"scenario{n}"
        write_trace_outputs(trace, outdir)
        s = trace_summary(trace)
        print(f"scenario {n}: {s['outcome']} in {s['simulated_time']:.2f}s "
              f"(episodes {'>'.join(s['fsm_episodes'])}, "
              f"min_h {s['min_h']}) -> {outdir}")


if __name__ == "__main__":
    main()
