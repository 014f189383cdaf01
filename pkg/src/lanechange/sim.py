"""Closed-loop execution: ego under the supervisor at 100 Hz, traffic under
its behavior models, collision surveillance, outcome classification.

A run stops early on collision, on a non-recoverable QP infeasibility
(fallback engaged while lane keeping or aborting), or shortly after a
completed lane change; surviving the full horizon without reaching the
target lane is itself an outcome.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .barriers import ControllerGains
from .collision import CollisionEvent
from .controller import FsmState, cost_matrix, pack_params
from .scenarios import Scenario, traffic_arrays

LANE_CHANGE_SUCCESS = "lane_change_success"
STILL_IN_CURRENT_LANE = "still_in_current_lane"
QP_INFEASIBLE = "qp_infeasible"
COLLISION = "collision"

OUTCOMES = (LANE_CHANGE_SUCCESS, STILL_IN_CURRENT_LANE, QP_INFEASIBLE,
            COLLISION)

# an infeasibility episode counts as non-recoverable once the emergency
# fallback has been applied this many consecutive steps (1 s at 100 Hz)
FALLBACK_LIMIT_STEPS = 100


class SimulationError(RuntimeError):
    """A sanity bound was violated (indicates a harness or controller bug)."""


@dataclass
class SimTrace:
    scenario: Scenario
    steps: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    v: np.ndarray
    a: np.ndarray
    beta: np.ndarray
    command: np.ndarray
    diag: np.ndarray  # per-step controller record, engine.D_* columns
    vehicle_states: np.ndarray  # observed traffic, (steps, n, NVCOLS)
    outcome: str = ""
    success_time: float | None = None
    collision: CollisionEvent | None = None
    fallback_steps: int = 0
    infeasible_terminal: bool = False  # a fallback episode never recovered
    switch_violations: int = 0
    wall_time: float = 0.0
    solve_time_mean: float = 0.0
    solve_time_max: float = 0.0

    @property
    def fsm_states(self) -> list[str]:
        return [FsmState(int(s)).name for s in self.diag[:, engine.D_STATE]]

    def fsm_episodes(self) -> list[str]:
        """State sequence with consecutive repeats collapsed."""
        out = []
        for name in self.fsm_states:
            if not out or out[-1] != name:
                out.append(name)
        return out

    def h_series(self, kind: str) -> np.ndarray:
        col = {"fc": engine.D_HFC, "ft": engine.D_HFT,
               "bt": engine.D_HBT}[kind]
        return self.diag[:, col]

    def min_h(self) -> dict:
        out = {}
        for kind in ("fc", "ft", "bt"):
            series = self.h_series(kind)
            out[kind] = (float(np.nanmin(series))
                         if np.any(~np.isnan(series)) else None)
        return out

    @property
    def p_series(self) -> np.ndarray:
        return self.diag[:, engine.D_P]

    @property
    def e_series(self) -> np.ndarray:
        return self.diag[:, engine.D_E]


def run(scn: Scenario) -> SimTrace:
    """Execute one scenario to its terminal condition."""
    t_wall = time.perf_counter()
    dt = scn.dt
    nmax = scn.n_steps()
    geo = scn.geometry
    prm = pack_params(scn.gains, scn.limits, geo, dt)
    P5 = cost_matrix(scn.gains)
    centers = scn.lanes.centers
    width = scn.lanes.width

    ci = np.zeros(engine.CI_LEN, dtype=np.int64)
    ci[engine.CI_CUR] = scn.ego_lane
    ci[engine.CI_TGT] = -1
    ci[engine.CI_SIGN] = -1
    cf = np.zeros(engine.CF_LEN)

    veh, bi, bf, sched = traffic_arrays(scn)
    nveh = veh.shape[0]
    commands = scn.command_steps()

    t_arr = np.zeros(nmax)
    xs = np.zeros(nmax)
    ys = np.zeros(nmax)
    psis = np.zeros(nmax)
    vs = np.zeros(nmax)
    aa = np.zeros(nmax)
    bb = np.zeros(nmax)
    diag_all = np.zeros((nmax, engine.DIAG_LEN))
    veh_all = np.zeros((nmax, nveh, engine.NVCOLS))
    diag = np.zeros(engine.DIAG_LEN)

    ex, ey, epsi, ev = (scn.ego_init.x, scn.ego_init.y, scn.ego_init.psi,
                        scn.ego_init.v)
    outcome = STILL_IN_CURRENT_LANE
    collision = None
    success_time = None
    steps = nmax
    solve_sum = 0.0
    solve_max = 0.0
    strict = scn.strict_traffic
    fallback_run = 0
    infeasible_terminal = False

    for k in range(nmax):
        t = k * dt
        engine.world_sync(veh, bi, bf, sched, t, dt, centers, width, strict,
                          ex, ey, ev, geo.length, geo.width)
        veh_all[k] = veh
        hit = engine.first_hit(ex, ey, epsi, veh, geo.l_fc, geo.l_rc,
                               geo.w_lc, geo.w_rc)
        if hit >= 0:
            collision = CollisionEvent(step=k, t=t,
                                       vehicle_id=int(veh[hit, engine.V_ID]))
            outcome = COLLISION
            steps = k + 1
            t_arr[k], xs[k], ys[k], psis[k], vs[k] = t, ex, ey, epsi, ev
            break

        t0 = time.perf_counter()
        a, beta = engine.controller_step(ex, ey, epsi, ev, veh,
                                         int(commands[k]), centers, width,
                                         prm, P5, ci, cf, diag)
        t1 = time.perf_counter() - t0
        solve_sum += t1
        if t1 > solve_max:
            solve_max = t1

        t_arr[k], xs[k], ys[k], psis[k], vs[k] = t, ex, ey, epsi, ev
        aa[k], bb[k] = a, beta
        diag_all[k] = diag

        if diag[engine.D_FALLBACK] == 1.0:
            # the fallback (hard braking toward the lane center) is the
            # recovery mechanism; only a persistent episode ends the run
            fallback_run += 1
            if fallback_run >= FALLBACK_LIMIT_STEPS:
                outcome = QP_INFEASIBLE
                infeasible_terminal = True
                steps = k + 1
                break
        else:
            fallback_run = 0

        ex, ey, epsi, ev = engine.dyn_rk4(ex, ey, epsi, ev, a, beta, dt,
                                          geo.l_r)
        if abs(epsi) >= np.pi / 2:
            raise SimulationError("heading left the highway regime")
        engine.world_advance(veh, bi, bf, t, dt, centers, width, strict,
                             geo.length)

        if diag[engine.D_P] == 1.0 and success_time is None:
            success_time = t
            outcome = LANE_CHANGE_SUCCESS
        if (success_time is not None
                and t + dt - success_time >= scn.success_hold_s - 1e-12):
            steps = k + 1
            break

    trace = SimTrace(
        scenario=scn,
        steps=steps,
        t=t_arr[:steps], x=xs[:steps], y=ys[:steps], psi=psis[:steps],
        v=vs[:steps], a=aa[:steps], beta=bb[:steps],
        command=commands[:steps],
        diag=diag_all[:steps],
        vehicle_states=veh_all[:steps],
        outcome=outcome,
        success_time=success_time,
        collision=collision,
        fallback_steps=int(np.sum(diag_all[:steps, engine.D_FALLBACK] == 1.0)),
        infeasible_terminal=infeasible_terminal,
        switch_violations=int(np.sum(diag_all[:steps,
                                              engine.D_SWITCH] == 2.0)),
        wall_time=time.perf_counter() - t_wall,
        solve_time_mean=solve_sum / max(steps, 1),
        solve_time_max=solve_max,
    )
    trace.outcome = classify_outcome(trace)
    return trace


def classify_outcome(trace: SimTrace) -> str:
    """Collision dominates, then non-recoverable infeasibility, then whether
    the lateral-progress signal ever reached 1."""
    if trace.collision is not None:
        return COLLISION
    if trace.infeasible_terminal:
        return QP_INFEASIBLE
    if np.any(trace.diag[:, engine.D_P] == 1.0):
        return LANE_CHANGE_SUCCESS
    return STILL_IN_CURRENT_LANE
