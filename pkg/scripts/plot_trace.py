#!/usr/bin/env python3
"""Render a recorded trace: speed, steering, FSM state and barrier values.

Reads the trace.csv written by `lanechange simulate` (or run_typical.py).
"""

import argparse
import csv
from pathlib import Path


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("trace", type=Path, help="path to a trace.csv")
    parser.add_argument("--save", type=Path, default=None,
                        help="write a PNG instead of showing the figure")
    args = parser.parse_args()

    import matplotlib
    if args.save:
        matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = list(csv.DictReader(args.trace.open()))
    t = [float(r["t"]) for r in rows]
    v = [float(r["v"]) for r in rows]
    delta = [float(r["delta_f"]) for r in rows]
    state_names = ["ACC", "L", "R", "BL", "BR"]
    states = [state_names.index(r["fsm_state"]) for r in rows]

    fig, axes = plt.subplots(4, 1, sharex=True, figsize=(8, 9))
    axes[0].plot(t, v)
    axes[0].set_ylabel("v (m/s)")
    axes[1].plot(t, delta)
    axes[1].set_ylabel("front steering (rad)")
    axes[2].step(t, states, where="post")
    axes[2].set_yticks(range(5), state_names)
    axes[2].set_ylabel("state")
    for kind, color in (("h_fc", "tab:blue"), ("h_ft", "tab:orange"),
                        ("h_bt", "tab:purple")):
        series = [(ti, float(r[kind])) for ti, r in zip(t, rows) if r[kind]]
        if series:
            axes[3].plot(*zip(*series), color=color, label=kind)
    axes[3].axhline(0.0, color="k", lw=0.5)
    axes[3].set_ylabel("barrier value (m)")
    axes[3].set_xlabel("t (s)")
    if axes[3].lines:
        axes[3].legend(loc="upper right")
    fig.suptitle(args.trace.parent.name)
    fig.tight_layout()
    if args.save:
        fig.savefig(args.save, dpi=150)
        print(f"wrote {args.save}")
    else:
        plt.show()


if __name__ == "__main__":
    main()
