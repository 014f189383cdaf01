"""Monte-Carlo batches: many seeded runs, aggregated into a report.

Seeds are assigned by run index (base_seed + index) and results reduced in
index order, so a report is identical for any worker count.
"""

import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from .scenarios import apply_gain_overrides, build_random
from .sim import OUTCOMES, run


@dataclass
class RunRecord:
    index: int
    seed: int
    outcome: str
    success_time: float | None
    steps: int
    fallback_steps: int
    switch_violations: int
    min_h: dict
    solve_time_mean: float
    solve_time_max: float


@dataclass
class BatchReport:
    env: str
    runs: int
    base_seed: int
    strict: bool
    duration: float
    dt: float
    outcome_counts: dict
    outcome_percentages: dict
    collision_count: int
    infeasible_count: int
    runs_with_fallback: int
    total_fallback_steps: int
    total_switch_violations: int
    min_h: dict  # per barrier kind, over the whole batch
    records: list = field(default_factory=list)
    # wall-clock statistics (reported separately from the deterministic data)
    solve_time_mean: float = 0.0
    solve_time_max: float = 0.0
    wall_time: float = 0.0

    @property
    def success_rate(self) -> float:
        return self.outcome_percentages["lane_change_success"]


def _run_one(args) -> RunRecord:
    env, base_seed, index, duration, strict, dt, overrides = args
    scn = build_random(env, base_seed + index, duration=duration,
                       strict=strict, dt=dt)
    if overrides:
        scn = apply_gain_overrides(scn, overrides)
    tr = run(scn)
    return RunRecord(
        index=index,
        seed=base_seed + index,
        outcome=tr.outcome,
        success_time=tr.success_time,
        steps=tr.steps,
        fallback_steps=tr.fallback_steps,
        switch_violations=tr.switch_violations,
        min_h=tr.min_h(),
        solve_time_mean=tr.solve_time_mean,
        solve_time_max=tr.solve_time_max,
    )


def run_batch(env: str, runs: int, base_seed: int, workers: int = 1,
              duration: float = 60.0, strict: bool = False, dt: float = 0.01,
              gain_overrides: dict | None = None) -> BatchReport:
    """Execute `runs` seeded scenarios and aggregate the outcome ledger."""
    if runs < 1:
        raise ValueError("at least one run is required")
    import time
    t0 = time.perf_counter()
    args = [(env, base_seed, i, duration, strict, dt, gain_overrides)
            for i in range(runs)]
    if workers <= 1:
        records = [_run_one(a) for a in args]
    else:
        chunk = max(1, runs // (4 * workers))
        with multiprocessing.Pool(workers) as pool:
            records = pool.map(_run_one, args, chunksize=chunk)
    wall = time.perf_counter() - t0

    counts = {o: 0 for o in OUTCOMES}
    for rec in records:
        counts[rec.outcome] += 1
    minh = {}
    for kind in ("fc", "ft", "bt"):
        vals = [rec.min_h[kind] for rec in records
                if rec.min_h[kind] is not None]
        minh[kind] = float(np.min(vals)) if vals else None
    return BatchReport(
        env=env,
        runs=runs,
        base_seed=base_seed,
        strict=strict,
        duration=duration,
        dt=dt,
        outcome_counts=counts,
        outcome_percentages={o: 100.0 * c / runs for o, c in counts.items()},
        collision_count=counts["collision"],
        infeasible_count=counts["qp_infeasible"],
        runs_with_fallback=sum(1 for r in records if r.fallback_steps > 0),
        total_fallback_steps=sum(r.fallback_steps for r in records),
        total_switch_violations=sum(r.switch_violations for r in records),
        min_h=minh,
        records=records,
        solve_time_mean=float(np.mean([r.solve_time_mean for r in records])),
        solve_time_max=float(np.max([r.solve_time_max for r in records])),
        wall_time=wall,
    )
