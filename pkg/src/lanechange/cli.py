"""Command line entry points: simulate, random, check."""

import argparse
import json
import sys
from pathlib import Path

from .batch import run_batch
from .reporting import trace_summary, write_batch_outputs, write_trace_outputs
from .scenarios import apply_gain_overrides, build_typical, load_scenario
from .sim import run


def _load_config(path):
    if path is None:
        return None
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SystemExit(f"error: cannot read config {path}: {exc}")


def cmd_simulate(args) -> int:
    if (args.scenario is None) == (args.scenario_file is None):
        print("error: give exactly one of --scenario or --scenario-file",
              file=sys.stderr)
        return 2
    try:
        if args.scenario is not None:
            scn = build_typical(args.scenario)
        else:
            scn = load_scenario(args.scenario_file)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    overrides = _load_config(args.config)
    try:
        if overrides:
            scn = apply_gain_overrides(scn, overrides)
        if args.duration is not None:
            scn.duration = args.duration
        if args.dt is not None:
            scn.dt = args.dt
        if args.strict_traffic:
            scn.strict_traffic = True
        trace = run(scn)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    write_trace_outputs(trace, args.output)
    summary = trace_summary(trace)
    print(f"{scn.name}: {summary['outcome']} "
          f"({summary['steps']} steps, min_h={summary['min_h']})")
    print(f"outputs in {args.output}/ (trace.csv, snapshots.csv, "
          f"summary.json)")
    return 0


def cmd_random(args) -> int:
    overrides = _load_config(args.config)
    try:
        report = run_batch(args.env, args.runs, base_seed=args.seed,
                           workers=args.workers, duration=args.duration,
                           strict=args.strict_traffic, dt=args.dt,
                           gain_overrides=overrides)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    write_batch_outputs(report, args.output)
    print(f"{args.env}: {args.runs} runs (seed {args.seed}, "
          f"workers {args.workers}, "
          f"{'strict' if args.strict_traffic else 'default'} traffic)")
    for outcome, count in report.outcome_counts.items():
        pct = report.outcome_percentages[outcome]
        print(f"  {outcome:25s} {count:6d}  {pct:6.2f}%")
    print(f"  runs with fallback steps  {report.runs_with_fallback:6d}")
    print(f"outputs in {args.output}/ (report.json, runs.csv, timing.json)")
    return 0


def cmd_check(args) -> int:
    overrides = _load_config(args.config)
    if overrides:
        # surface configuration-invariant violations before running anything
        from .barriers import ControllerGains
        try:
            base = build_typical(1).gains
            fields = {k: getattr(base, k) for k in (
                "v_d", "v_l", "epsilon", "alpha_v", "alpha_y", "alpha_psi",
                "gamma_fc", "gamma_ft", "gamma_bt", "p_v", "p_y", "p_psi",
                "a_l")}
            fields.update(overrides)
            ControllerGains(H=base.H, **fields)
        except (ValueError, TypeError) as exc:
            print(f"[FAIL] configuration: {exc}")
            return 2
    from .checks import run_all
    results = run_all(output_dir=args.output, workers=args.workers)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lanechange",
        description="Safety-filtered lane change simulator and test harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one scenario, export traces")
    p_sim.add_argument("--scenario", type=int, choices=(1, 2, 3),
                       help="pre-designed scenario selector")
    p_sim.add_argument("--scenario-file", type=Path,
                       help="scenario description file (JSON)")
    p_sim.add_argument("--output", type=Path, default=Path("out"))
    p_sim.add_argument("--dt", type=float, default=None)
    p_sim.add_argument("--duration", type=float, default=None)
    p_sim.add_argument("--strict-traffic", action="store_true")
    p_sim.add_argument("--config", type=Path, default=None,
                       help="JSON file overriding controller gains")
    p_sim.set_defaults(func=cmd_simulate)

    p_rand = sub.add_parser("random", help="run a randomized batch")
    p_rand.add_argument("--env", choices=("urban", "highway"), required=True)
    p_rand.add_argument("--runs", type=int, required=True)
    p_rand.add_argument("--seed", type=int, default=0)
    p_rand.add_argument("--workers", type=int, default=1)
    p_rand.add_argument("--output", type=Path, default=Path("out"))
    p_rand.add_argument("--dt", type=float, default=0.01)
    p_rand.add_argument("--duration", type=float, default=60.0)
    p_rand.add_argument("--strict-traffic", action="store_true")
    p_rand.add_argument("--config", type=Path, default=None)
    p_rand.set_defaults(func=cmd_random)

    p_check = sub.add_parser("check", help="run the acceptance criteria")
    p_check.add_argument("--output", type=Path, default=Path("out"))
    p_check.add_argument("--workers", type=int, default=1)
    p_check.add_argument("--config", type=Path, default=None)
    p_check.set_defaults(func=cmd_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
