"""File outputs: per-step trace tables, plot snapshots, batch reports.

Everything is plain comma-separated text or JSON; rendering is left to
external tools. The batch report is split into a deterministic part
(report.json, runs.csv - byte-identical for a given invocation regardless
of worker count) and wall-clock timings (timing.json).
"""

import json
from pathlib import Path

import numpy as np

from . import engine
from .batch import BatchReport
from .controller import FsmState
from .dynamics import steering_from_slip
from .sim import SimTrace

TRACE_COLUMNS = (
    "t", "x", "y", "psi", "v", "a", "beta", "delta_f", "fsm_state", "c",
    "p", "e", "h_fc", "h_ft", "h_bt", "qp_status", "delta_v", "delta_y",
    "delta_psi",
)


def _num(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    return format(float(x), ".10g")


def write_trace_csv(trace: SimTrace, path) -> None:
    """One row per control step, fixed column order (see TRACE_COLUMNS)."""
    geo = trace.scenario.geometry
    d = trace.diag
    lines = [",".join(TRACE_COLUMNS)]
    for k in range(trace.steps):
        status = "optimal" if d[k, engine.D_QP] == 1.0 else "infeasible"
        row = (
            _num(trace.t[k]), _num(trace.x[k]), _num(trace.y[k]),
            _num(trace.psi[k]), _num(trace.v[k]), _num(trace.a[k]),
            _num(trace.beta[k]),
            _num(steering_from_slip(float(trace.beta[k]), geo)),
            FsmState(int(d[k, engine.D_STATE])).name,
            str(int(trace.command[k])),
            _num(d[k, engine.D_P]), str(int(d[k, engine.D_E])),
            _num(d[k, engine.D_HFC]), _num(d[k, engine.D_HFT]),
            _num(d[k, engine.D_HBT]), status,
            _num(d[k, engine.D_DV]), _num(d[k, engine.D_DY]),
            _num(d[k, engine.D_DPSI]),
        )
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_snapshots(trace: SimTrace, path, every: float = 1.0) -> None:
    """Vehicle poses at fixed times for plotting (id 0 is the ego)."""
    lines = ["t,id,x,y,psi"]
    stride = max(1, int(round(every / trace.scenario.dt)))
    for k in range(0, trace.steps, stride):
        lines.append(",".join((
            _num(trace.t[k]), "0", _num(trace.x[k]), _num(trace.y[k]),
            _num(trace.psi[k]))))
        for row in trace.vehicle_states[k]:
            lines.append(",".join((
                _num(trace.t[k]), str(int(row[engine.V_ID])),
                _num(row[engine.V_X]), _num(row[engine.V_Y]), "0")))
    Path(path).write_text("\n".join(lines) + "\n")


def trace_summary(trace: SimTrace) -> dict:
    return {
        "scenario": trace.scenario.name,
        "outcome": trace.outcome,
        "steps": trace.steps,
        "simulated_time": float(trace.t[trace.steps - 1]
                                + trace.scenario.dt) if trace.steps else 0.0,
        "success_time": trace.success_time,
        "min_h": trace.min_h(),
        "fallback_steps": trace.fallback_steps,
        "switch_violations": trace.switch_violations,
        "collision": None if trace.collision is None else {
            "t": trace.collision.t, "vehicle_id": trace.collision.vehicle_id},
        "fsm_episodes": trace.fsm_episodes(),
        "max_kkt_residual": _max_kkt(trace),
    }


def _max_kkt(trace: SimTrace) -> float | None:
    vals = trace.diag[:, engine.D_KKT]
    vals = vals[~np.isnan(vals)]
    return float(np.max(vals)) if vals.size else None


def write_summary(trace: SimTrace, path) -> None:
    Path(path).write_text(json.dumps(trace_summary(trace), indent=1,
                                     sort_keys=True) + "\n")


def write_trace_outputs(trace: SimTrace, outdir) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, outdir / "trace.csv")
    write_snapshots(trace, outdir / "snapshots.csv")
    write_summary(trace, outdir / "summary.json")


RUNS_COLUMNS = ("index", "seed", "outcome", "success_time", "steps",
                "fallback_steps", "switch_violations", "min_h_fc",
                "min_h_ft", "min_h_bt")


def write_batch_outputs(report: BatchReport, outdir) -> None:
    """report.json + runs.csv are deterministic; timings go to timing.json."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    deterministic = {
        "env": report.env,
        "runs": report.runs,
        "base_seed": report.base_seed,
        "strict_traffic": report.strict,
        "duration": report.duration,
        "dt": report.dt,
        "outcome_counts": report.outcome_counts,
        "outcome_percentages": {k: round(v, 4) for k, v in
                                report.outcome_percentages.items()},
        "collision_count": report.collision_count,
        "infeasible_count": report.infeasible_count,
        "runs_with_fallback": report.runs_with_fallback,
        "total_fallback_steps": report.total_fallback_steps,
        "total_switch_violations": report.total_switch_violations,
        "min_h": report.min_h,
    }
    (outdir / "report.json").write_text(
        json.dumps(deterministic, indent=1, sort_keys=True) + "\n")
    (outdir / "timing.json").write_text(json.dumps({
        "wall_time_s": report.wall_time,
        "solve_time_mean_s": report.solve_time_mean,
        "solve_time_max_s": report.solve_time_max,
    }, indent=1, sort_keys=True) + "\n")
    lines = [",".join(RUNS_COLUMNS)]
    for rec in report.records:
        lines.append(",".join((
            str(rec.index), str(rec.seed), rec.outcome,
            _num(rec.success_time), str(rec.steps),
            str(rec.fallback_steps), str(rec.switch_violations),
            _num(rec.min_h["fc"]), _num(rec.min_h["ft"]),
            _num(rec.min_h["bt"]))))
    (outdir / "runs.csv").write_text("\n".join(lines) + "\n")
