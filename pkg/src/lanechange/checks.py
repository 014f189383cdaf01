"""The acceptance gate: every shipped claim, runnable as one suite.

Each check returns a CheckResult; the CLI `check` subcommand prints one
PASS/FAIL line per criterion and the pytest acceptance module asserts them
individually. Tolerances are fixed here, not configurable.
"""

import json
import tempfile
import time
from dataclasses import dataclass, replace
from itertools import combinations
from pathlib import Path

import numpy as np

from . import engine
from .barriers import ControllerGains, SurroundingVehicle, VehiclesOfInterest, cbf_acc, cbf_back, cbf_lane_change, clf_rows
from .batch import run_batch
from .dynamics import InputLimits, VehicleGeometry, VehicleState
from .oracles import barrier_rate_error, clf_rate_errors
from .qp import LinearInequality, QuadraticProgram, solve
from .reporting import write_batch_outputs
from .scenarios import CONSTANT_SPEED, Scenario, SurroundingSpec, build_typical
from .sim import LANE_CHANGE_SUCCESS, run

H_TOL = 1e-6  # discrete-time allowance on logged barrier values
INPUT_TOL = 1e-9
RATE_FD_TOL = 1e-5
QP_MATCH_TOL = 1e-6
KKT_TOL = 1e-8
CONTINUITY_TOL = 1e-12

# informative only: reported success percentages in the source study
REFERENCE_SUCCESS = {"urban": 62.46, "highway": 55.58}
SUCCESS_BAND_PP = 15.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: str

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.details}"


def _warm_up():
    """Compile the kernels once so wall-clock limits measure the run itself."""
    scn = replace(build_typical(1), duration=0.05)
    run(scn)


def _inputs_within_limits(trace) -> tuple[bool, str]:
    lim: InputLimits = trace.scenario.limits
    geo: VehicleGeometry = trace.scenario.geometry
    dt = trace.scenario.dt
    a, beta, v = trace.a, trace.beta, trace.v
    if np.max(np.abs(a)) > lim.a_max + INPUT_TOL:
        return False, f"accel exceeded: {np.max(np.abs(a)):.6f}"
    if np.max(np.abs(beta)) > lim.beta_max + INPUT_TOL:
        return False, f"slip exceeded: {np.max(np.abs(beta)):.6f}"
    if beta.size > 1:
        dbeta = np.max(np.abs(np.diff(beta)))
        if dbeta > lim.beta_rate_max * dt + INPUT_TOL:
            return False, f"slip rate exceeded: {dbeta:.6f}"
    ay = np.max(np.abs(v * v * beta / geo.l_r))
    if ay > lim.ay_max + INPUT_TOL:
        return False, f"lateral accel exceeded: {ay:.6f}"
    return True, ""


def _min_active_h(trace) -> float:
    vals = []
    for kind in ("fc", "ft", "bt"):
        series = trace.h_series(kind)
        series = series[~np.isnan(series)]
        if series.size:
            vals.append(float(np.min(series)))
    return min(vals) if vals else np.inf


def check_typical_scenarios() -> CheckResult:
    """Criterion 1: the three studies end in success with the expected speed
    profiles, clean safety record and small runtimes."""
    _warm_up()
    problems = []
    details = []
    for n in (1, 2, 3):
        tr = run(build_typical(n))
        states = np.array([int(s) for s in tr.diag[:, engine.D_STATE]])
        if tr.outcome != LANE_CHANGE_SUCCESS:
            problems.append(f"s{n}: outcome {tr.outcome}")
        if tr.collision is not None:
            problems.append(f"s{n}: collision")
        if tr.fallback_steps:
            problems.append(f"s{n}: {tr.fallback_steps} fallback steps")
        minh = _min_active_h(tr)
        if minh < -H_TOL:
            problems.append(f"s{n}: min h {minh:.2e}")
        ok, msg = _inputs_within_limits(tr)
        if not ok:
            problems.append(f"s{n}: {msg}")
        if tr.wall_time >= 5.0:
            problems.append(f"s{n}: runtime {tr.wall_time:.2f}s")
        v0 = tr.scenario.ego_init.v
        if n == 1:
            early = tr.v[: min(tr.steps, 500)]
            if np.min(early) >= v0 - 0.05:
                problems.append("s1: no initial deceleration phase")
        if n == 2:
            in_l = np.nonzero(states == engine.L)[0]
            before = tr.v[: in_l[0] + 1] if in_l.size else tr.v
            if np.max(before) <= v0 + 0.05:
                problems.append("s2: no acceleration before the change")
        if n == 3:
            eps = tr.fsm_episodes()
            if "BL" not in eps:
                problems.append(f"s3: no abort episode in {eps}")
            else:
                i = eps.index("BL")
                if i == 0 or eps[i - 1] != "L":
                    problems.append(f"s3: abort not from L in {eps}")
                if "L" not in eps[i + 1:] or eps[-1] != "ACC":
                    problems.append(f"s3: no re-attempt to success in {eps}")
        details.append(f"s{n}={tr.outcome}@{tr.wall_time:.2f}s")
    if problems:
        return CheckResult("typical-scenarios", False, "; ".join(problems))
    return CheckResult("typical-scenarios", True, ", ".join(details))


def check_acc_invariance() -> CheckResult:
    """Criterion 2: following a slower leader for 60 s keeps the headway
    barrier nonnegative and the gap converges to the barrier boundary."""
    base = build_typical(1)
    scn = replace(base, name="acc-regression", command_schedule=[(0.0, 0)],
                  duration=60.0, success_hold_s=0.0,
                  surrounding=[SurroundingSpec(id=1, x=55.0, y=1.75, v=22.0,
                                               behavior=CONSTANT_SPEED)])
    tr = run(scn)
    h = tr.h_series("fc")
    h = h[~np.isnan(h)]
    min_h = float(np.min(h))
    if min_h < -H_TOL:
        return CheckResult("acc-forward-invariance", False,
                           f"min h_fc = {min_h:.3e}")
    geo = scn.geometry
    k = tr.steps - 1
    lead_x = tr.vehicle_states[k][0][engine.V_X]
    gap = (lead_x - tr.x[k]) - geo.l_fc - geo.l_rc
    v_ss = tr.v[k]
    target = (1.0 + scn.gains.epsilon) * v_ss
    rel = abs(gap - target) / target
    if rel > 0.02:
        return CheckResult("acc-forward-invariance", False,
                           f"gap {gap:.2f} vs {target:.2f} ({100*rel:.1f}%)")
    return CheckResult(
        "acc-forward-invariance", True,
        f"min h_fc={min_h:.2e}, gap within {100*rel:.2f}% of boundary")


def check_monte_carlo(runs: int = 500, workers: int = 1) -> CheckResult:
    """Criterion 3: desk-scale batches finish quickly with zero collisions;
    non-recoverable infeasibility stays under 2% (0% with strict traffic).
    Success rates are compared to the reference numbers informatively."""
    _warm_up()
    problems = []
    notes = []
    t0 = time.perf_counter()
    default_reports = {}
    for env in ("urban", "highway"):
        default_reports[env] = run_batch(env, runs, base_seed=1000,
                                         workers=workers)
    default_wall = time.perf_counter() - t0
    if default_wall >= 600.0:
        problems.append(f"default batches took {default_wall:.0f}s")
    for env, rep in default_reports.items():
        if rep.collision_count:
            problems.append(f"{env}: {rep.collision_count} collisions")
        rate = 100.0 * rep.infeasible_count / rep.runs
        if rate > 2.0:
            problems.append(f"{env}: infeasible rate {rate:.2f}%")
        delta = rep.success_rate - REFERENCE_SUCCESS[env]
        flag = "" if abs(delta) <= SUCCESS_BAND_PP else " (outside info band)"
        notes.append(f"{env} {rep.success_rate:.1f}% success "
                     f"({delta:+.1f}pp vs reference){flag}")
    for env in ("urban", "highway"):
        rep = run_batch(env, runs, base_seed=1000, workers=workers,
                        strict=True)
        if rep.collision_count:
            problems.append(f"{env} strict: {rep.collision_count} collisions")
        if rep.infeasible_count:
            problems.append(
                f"{env} strict: {rep.infeasible_count} infeasible")
        notes.append(f"{env}-strict {rep.success_rate:.1f}%")
    if problems:
        return CheckResult("monte-carlo", False, "; ".join(problems))
    return CheckResult("monte-carlo", True,
                       f"{2*runs} default runs in {default_wall:.0f}s; "
                       + "; ".join(notes))


def check_derivative_oracle(n_states: int = 1000) -> CheckResult:
    """Criterion 4: analytic barrier/tracking rates match central differences
    along the coupled flow on randomly sampled states, every branch."""
    rng = np.random.default_rng(2024)
    geo = VehicleGeometry()
    gains = ControllerGains(v_d=27.5, v_l=33.33)
    worst = 0.0
    worst_name = ""
    per_branch = n_states // 10 + 1

    def eval_front(e, o):
        return cbf_acc(e, o, gains, geo)

    def eval_rear(e, o):
        return cbf_lane_change(e, VehiclesOfInterest(bt=o), gains, geo)[0]

    def eval_rfront(e, o):
        return cbf_back(e, VehiclesOfInterest(ft=o), gains, geo)[0]

    def eval_rrear(e, o):
        return cbf_back(e, VehiclesOfInterest(bt=o), gains, geo)[0]

    def sample(branch_case):
        v = rng.uniform(5, 35)
        ego = VehicleState(rng.uniform(-5, 5), rng.uniform(1, 9),
                           rng.uniform(-0.3, 0.3), v)
        dv = rng.uniform(0.5, 8)
        far = rng.uniform(8, 60)
        ylat = ego.y + rng.choice([-1, 1]) * rng.uniform(2.2, 4.0)
        accel = rng.uniform(-2.5, 2.5)
        vy = rng.uniform(-1.2, 1.2)
        near = rng.uniform(-3.5, 3.0)
        fn, slower, behind, lateral = branch_case
        vk = max(v - dv, 0.1) if slower else v + dv
        if lateral:
            x = ego.x + near
        else:
            x = ego.x - far if behind else ego.x + far
        y = ylat if (behind or lateral or fn is not eval_front) else ego.y
        other = SurroundingVehicle(id=1, x=x, y=y, v=vk, accel=accel,
                                   lateral_speed=vy if lateral else 0.0)
        return ego, other

    branch_cases = [
        (eval_front, True, False, False), (eval_front, False, False, False),
        (eval_rear, True, True, False), (eval_rear, False, True, False),
        (eval_rfront, True, False, False), (eval_rfront, False, False, False),
        (eval_rfront, False, False, True),
        (eval_rrear, False, True, False), (eval_rrear, True, True, False),
        (eval_rrear, False, True, True),
    ]
    for case in branch_cases:
        for _ in range(per_branch):
            ego, other = sample(case)
            u = np.array([rng.uniform(-2.9, 2.9), rng.uniform(-0.2, 0.2)])
            err = barrier_rate_error(case[0], ego, other, u, geo)
            if err > worst:
                worst, worst_name = err, case[0].__name__
    for _ in range(n_states):
        ego = VehicleState(rng.uniform(-10, 10), rng.uniform(0, 10),
                           rng.uniform(-0.5, 0.5), rng.uniform(0.1, 40))
        u = np.array([rng.uniform(-3, 3), rng.uniform(-0.26, 0.26)])
        y_t = rng.uniform(0, 10)
        rows, values = clf_rows(ego, gains, y_t, geo)
        err = float(np.max(clf_rate_errors(rows, values, ego, u, gains, y_t,
                                           geo)))
        if err > worst:
            worst, worst_name = err, "clf"
    if worst >= RATE_FD_TOL:
        return CheckResult("derivative-oracle", False,
                           f"worst rel err {worst:.2e} ({worst_name})")
    return CheckResult("derivative-oracle", True,
                       f"worst rel err {worst:.2e}")


def _enumeration_oracle(P, q, A, b, tol=1e-8):
    n, m = P.shape[0], A.shape[0]
    best, best_obj = None, np.inf
    for k in range(n + 1):
        for S in combinations(range(m), k):
            S = list(S)
            K = np.zeros((n + k, n + k))
            K[:n, :n] = P
            if k:
                K[:n, n:] = A[S].T
                K[n:, :n] = A[S]
            rhs = np.concatenate([-q, b[S]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            z, lam = sol[:n], sol[n:]
            if k and np.min(lam) < -tol:
                continue
            if m and np.max(A @ z - b) > tol:
                continue
            obj = 0.5 * z @ P @ z + q @ z
            if obj < best_obj - 1e-13:
                best_obj, best = obj, z
    return best


def check_qp_oracle() -> CheckResult:
    """Criterion 5: the solver agrees with exhaustive active-set enumeration
    on random instances, and every closed-loop solve certifies KKT."""
    rng = np.random.default_rng(777)
    mismatches = 0
    worst = 0.0
    feasible = 0
    for _ in range(500):
        M = rng.normal(size=(5, 5))
        P = M @ M.T + 0.5 * np.eye(5)
        q = rng.normal(size=5)
        m = int(rng.integers(1, 11))
        A = rng.normal(size=(m, 5))
        b = rng.normal(size=m) + 0.5
        rows = [LinearInequality(A[i], float(b[i])) for i in range(m)]
        sol = solve(QuadraticProgram(5, P, q, rows))
        ref = _enumeration_oracle(P, q, A, b)
        if sol.optimal:
            feasible += 1
            if ref is None:
                mismatches += 1
                continue
            err = float(np.max(np.abs(sol.z - ref)))
            worst = max(worst, err)
            if err > QP_MATCH_TOL:
                mismatches += 1
        else:
            if ref is not None:
                mismatches += 1
            if sol.phase1_violation <= 1e-9:
                mismatches += 1
    if mismatches:
        return CheckResult("qp-oracle", False,
                           f"{mismatches} oracle disagreements")
    max_kkt = 0.0
    for n in (1, 2, 3):
        tr = run(build_typical(n))
        vals = tr.diag[:, engine.D_KKT]
        vals = vals[~np.isnan(vals)]
        max_kkt = max(max_kkt, float(np.max(vals)))
    if max_kkt >= KKT_TOL:
        return CheckResult("qp-oracle", False,
                           f"closed-loop KKT residual {max_kkt:.2e}")
    return CheckResult(
        "qp-oracle", True,
        f"{feasible} feasible matched (worst {worst:.1e}); "
        f"closed-loop KKT max {max_kkt:.1e}")


def check_branch_continuity() -> CheckResult:
    """Criterion 6: every speed-conditioned piecewise barrier is continuous
    across its branch boundary."""
    rng = np.random.default_rng(5)
    geo = VehicleGeometry()
    gains = ControllerGains(v_d=27.5, v_l=33.33)
    worst = 0.0
    for _ in range(300):
        vk = rng.uniform(1, 39)
        gap = rng.uniform(5, 120)
        lo_v = np.nextafter(vk, -np.inf)
        hi_v = np.nextafter(vk, np.inf)
        lead = SurroundingVehicle(id=1, x=gap, y=1.75, v=vk,
                                  accel=rng.uniform(-2, 2))
        rear = SurroundingVehicle(id=1, x=-gap, y=5.25, v=vk,
                                  accel=rng.uniform(-2, 2))
        pairs = [
            (cbf_acc(VehicleState(0, 1.75, 0, lo_v), lead, gains, geo).h,
             cbf_acc(VehicleState(0, 1.75, 0, hi_v), lead, gains, geo).h),
            (cbf_lane_change(VehicleState(0, 1.75, 0, lo_v),
                             VehiclesOfInterest(ft=lead), gains, geo)[0].h,
             cbf_lane_change(VehicleState(0, 1.75, 0, hi_v),
                             VehiclesOfInterest(ft=lead), gains, geo)[0].h),
            (cbf_lane_change(VehicleState(0, 1.75, 0, lo_v),
                             VehiclesOfInterest(bt=rear), gains, geo)[0].h,
             cbf_lane_change(VehicleState(0, 1.75, 0, hi_v),
                             VehiclesOfInterest(bt=rear), gains, geo)[0].h),
            (cbf_back(VehicleState(0, 1.75, 0, lo_v),
                      VehiclesOfInterest(ft=lead), gains, geo)[0].h,
             cbf_back(VehicleState(0, 1.75, 0, hi_v),
                      VehiclesOfInterest(ft=lead), gains, geo)[0].h),
            (cbf_back(VehicleState(0, 1.75, 0, lo_v),
                      VehiclesOfInterest(bt=rear), gains, geo)[0].h,
             cbf_back(VehicleState(0, 1.75, 0, hi_v),
                      VehiclesOfInterest(bt=rear), gains, geo)[0].h),
        ]
        for lo, hi in pairs:
            worst = max(worst, abs(lo - hi))
    if worst >= CONTINUITY_TOL:
        return CheckResult("branch-continuity", False,
                           f"worst jump {worst:.2e}")
    return CheckResult("branch-continuity", True, f"worst jump {worst:.2e}")


def check_switching_safety() -> CheckResult:
    """Criterion 7: every constraint-set switch in the three studies lands
    inside the incoming safe sets."""
    switches = 0
    violations = 0
    for n in (1, 2, 3):
        tr = run(build_typical(n))
        flags = tr.diag[:, engine.D_SWITCH]
        switches += int(np.sum(flags >= 1.0))
        violations += int(np.sum(flags == 2.0))
    if violations:
        return CheckResult("switching-safety", False,
                           f"{violations} violations in {switches} switches")
    if switches == 0:
        return CheckResult("switching-safety", False, "no switches observed")
    return CheckResult("switching-safety", True,
                       f"{switches} switches, zero violations")


def check_batch_determinism(runs: int = 100) -> CheckResult:
    """Criterion 8: identical reports for repeated invocations and for any
    worker count."""
    _warm_up()
    outputs = []
    for workers in (1, 1, 2):
        rep = run_batch("urban", runs, base_seed=7, workers=workers)
        with tempfile.TemporaryDirectory() as tmp:
            write_batch_outputs(rep, tmp)
            outputs.append((Path(tmp, "report.json").read_bytes(),
                            Path(tmp, "runs.csv").read_bytes()))
    if outputs[0] == outputs[1] and outputs[0] == outputs[2]:
        return CheckResult("batch-determinism", True,
                           f"{runs} runs byte-identical across workers 1/2")
    return CheckResult("batch-determinism", False,
                       "reports differ across invocations or worker counts")


ALL_CHECKS = (
    ("1", check_typical_scenarios),
    ("2", check_acc_invariance),
    ("3", check_monte_carlo),
    ("4", check_derivative_oracle),
    ("5", check_qp_oracle),
    ("6", check_branch_continuity),
    ("7", check_switching_safety),
    ("8", check_batch_determinism),
)


def run_all(output_dir=None, workers: int = 1) -> list[CheckResult]:
    results = []
    for num, fn in ALL_CHECKS:
        if fn is check_monte_carlo:
            res = fn(workers=workers)
        else:
            res = fn()
        res.name = f"criterion-{num} {res.name}"
        print(res.line(), flush=True)
        results.append(res)
    if output_dir is not None:
        outdir = Path(output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        payload = [{"name": r.name, "passed": r.passed, "details": r.details}
                   for r in results]
        (outdir / "check_report.json").write_text(
            json.dumps(payload, indent=1) + "\n")
    return results
