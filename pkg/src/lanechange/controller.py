"""Finite-state lane change supervisor around the per-state QP.

The supervisor runs at the control rate. Each step it refreshes the lateral
progress signal, resolves state transitions, selects the vehicles of
interest, assembles the state's CLF/CBF/input rows, solves the QP, and
returns the applied input. The lane-change feasibility signal e is computed
by attempting the lane-change QP itself, gated on the incoming barriers
being nonnegative so every executed constraint switch lands inside the new
safe sets.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import engine
from .barriers import ControllerGains, SurroundingVehicle, VehiclesOfInterest, cost_matrix
from .dynamics import ControlInput, InputLimits, VehicleGeometry, VehicleState


class FsmState(Enum):
    ACC = engine.ACC
    L = engine.L
    R = engine.R
    BL = engine.BL
    BR = engine.BR


_PROBE_NAMES = {engine.PROBE_NONE: None, engine.PROBE_GATED: "gated",
                engine.PROBE_OK: "ok", engine.PROBE_INFEASIBLE: "infeasible"}
_SWITCH_NAMES = {0: None, 1: "ok", 2: "violation"}
_BRANCH_NAMES = {engine.BR_NONE: None, engine.BR_PLAIN: "plain",
                 engine.BR_BRAKE: "brake", engine.BR_LATERAL: "lateral"}


@dataclass
class SignalSet:
    c: int  # lane change command: -1 right, 0 keep, 1 left
    p: float  # lateral progress: 0, 0.5 or 1
    e: int  # environment permits the lane change: 0 or 1

    def __post_init__(self):
        if self.c not in (-1, 0, 1):
            raise ValueError(f"command must be -1, 0 or 1, got {self.c}")
        if self.p not in (0.0, 0.5, 1.0):
            raise ValueError(f"progress must be 0, 0.5 or 1, got {self.p}")
        if self.e not in (0, 1):
            raise ValueError(f"environment flag must be 0 or 1, got {self.e}")


@dataclass
class LaneLayout:
    width: float  # m
    centers: np.ndarray  # ordered center-line y coordinates, m

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        if self.width <= 0.0:
            raise ValueError("lane width must be positive")
        if self.centers.size < 1:
            raise ValueError("at least one lane is required")
        if self.centers.size > 1:
            gaps = np.diff(self.centers)
            if not np.allclose(gaps, self.width, atol=1e-9):
                raise ValueError("lane centers must be spaced by the width")

    @property
    def count(self) -> int:
        return int(self.centers.size)

    def center(self, index: int) -> float:
        return float(self.centers[index])

    def lane_of(self, y: float) -> int:
        """Lane whose band contains the lateral position (clamped)."""
        return int(engine.lane_of(y, self.centers, self.width))

    def body_in_lane(self, y: float, lane: int, geo: VehicleGeometry) -> bool:
        return bool(engine.body_in_lane(y, lane, self.centers, self.width,
                                        geo.w_lc, geo.w_rc))


@dataclass
class ControllerDiagnostics:
    fsm_state: FsmState
    command: int
    p: float
    e: int
    qp_status: str  # optimal | infeasible
    h_values: dict  # kind -> h for the actuated barrier rows
    branches: dict  # kind -> branch name
    relaxations: tuple  # (delta_v, delta_y, delta_psi), nan when infeasible
    kkt_residual: float
    switch_check: str | None  # None (no switch) | "ok" | "violation"
    fallback: bool
    probe: str | None  # entry probe outcome while commanded in ACC
    active_rows: int
    solver_iterations: int
    infeasibility_certificate: float  # phase-1 violation / gate margin
    solve_time: float = 0.0  # seconds, filled by the harness


def vehicles_to_array(vehicles: list[SurroundingVehicle],
                      lanes: LaneLayout) -> np.ndarray:
    """Pack observations for the kernels; lane assignment is by c.g."""
    arr = np.zeros((len(vehicles), engine.NVCOLS))
    for i, veh in enumerate(vehicles):
        arr[i, engine.V_X] = veh.x
        arr[i, engine.V_Y] = veh.y
        arr[i, engine.V_V] = veh.v
        arr[i, engine.V_A] = veh.accel
        arr[i, engine.V_VY] = veh.lateral_speed
        arr[i, engine.V_LANE] = lanes.lane_of(veh.y)
        arr[i, engine.V_ID] = veh.id
    return arr


def pack_params(gains: ControllerGains, limits: InputLimits,
                geo: VehicleGeometry, dt: float) -> np.ndarray:
    prm = np.zeros(engine.NPARAMS)
    prm[engine.P_EPS] = gains.epsilon
    prm[engine.P_ALPHA_V] = gains.alpha_v
    prm[engine.P_ALPHA_Y] = gains.alpha_y
    prm[engine.P_ALPHA_PSI] = gains.alpha_psi
    prm[engine.P_GAMMA_FC] = gains.gamma_fc
    prm[engine.P_GAMMA_FT] = gains.gamma_ft
    prm[engine.P_GAMMA_BT] = gains.gamma_bt
    prm[engine.P_PEN_V] = gains.p_v
    prm[engine.P_PEN_Y] = gains.p_y
    prm[engine.P_PEN_PSI] = gains.p_psi
    prm[engine.P_AL] = gains.a_l
    prm[engine.P_VD] = gains.v_d
    prm[engine.P_VL] = gains.v_l
    prm[engine.P_BETA_MAX] = limits.beta_max
    prm[engine.P_BETA_RATE] = limits.beta_rate_max
    prm[engine.P_A_MAX] = limits.a_max
    prm[engine.P_AY_MAX] = limits.ay_max
    prm[engine.P_LF] = geo.l_f
    prm[engine.P_LR] = geo.l_r
    prm[engine.P_LFC] = geo.l_fc
    prm[engine.P_LRC] = geo.l_rc
    prm[engine.P_WLC] = geo.w_lc
    prm[engine.P_WRC] = geo.w_rc
    prm[engine.P_DT] = dt
    return prm


def select_vehicles_of_interest(ego: VehicleState,
                                vehicles: list[SurroundingVehicle],
                                lanes: LaneLayout, current_lane: int,
                                target_lane: int | None = None
                                ) -> VehiclesOfInterest:
    """Nearest front vehicle in the current lane plus nearest front/rear in
    the target lane (by c.g. position and c.g. lane assignment). Other
    traffic is ignored."""
    arr = vehicles_to_array(vehicles, lanes)
    tgt = -1 if target_lane is None else int(target_lane)
    fc, ft, bt = engine.select_interest(arr, ego.x, int(current_lane), tgt)
    return VehiclesOfInterest(
        fc=vehicles[fc] if fc >= 0 else None,
        ft=vehicles[ft] if ft >= 0 else None,
        bt=vehicles[bt] if bt >= 0 else None,
    )


def compute_p(ego: VehicleState, geo: VehicleGeometry, lanes: LaneLayout,
              current_lane: int, target_lane: int, dwell: float) -> float:
    """Lateral progress of an active attempt: 0 while the body is entirely in
    the current lane, 0.5 once any edge crosses the shared boundary, 1 after
    the body has been fully inside the target lane for 1.5 s (`dwell`)."""
    return float(engine.lateral_progress(ego.y, int(current_lane),
                                         int(target_lane), dwell,
                                         lanes.centers, lanes.width,
                                         geo.w_lc, geo.w_rc))


def predictive_speed_check(ego: VehicleState, voi: VehiclesOfInterest,
                           gains: ControllerGains,
                           geo: VehicleGeometry) -> float:
    """Desired-speed lookahead while a commanded change is pending: if
    accelerating to the speed limit would open all three gaps, the limit
    becomes the desired speed, otherwise the original one is kept."""
    eps, a_l, vl = gains.epsilon, gains.a_l, gains.v_l
    tau = (vl - ego.v) / a_l
    dv_term = (vl * vl - ego.v * ego.v) / (2.0 * a_l)
    ok = True
    for kind, veh in voi.present():
        dx = engine.gap_dx(ego.x, veh.x, geo.l_fc, geo.l_rc)
        if kind in ("fc", "ft"):
            if dx + veh.v * tau - dv_term - (1.0 + eps) * ego.v <= 0.0:
                ok = False
        else:
            if dx - veh.v * tau + dv_term - (1.0 + eps) * veh.v <= 0.0:
                ok = False
    return gains.v_l if ok else gains.v_d


def transition(state: FsmState, signals: SignalSet) -> FsmState:
    """Pure transition table of the supervisor."""
    nxt = engine.fsm_transition(state.value, signals.c, float(signals.p),
                                signals.e)
    if nxt < 0:
        raise ValueError(f"undefined signal combination {signals}")
    return FsmState(nxt)


class LaneChangeController:
    """Stateful per-ego supervisor; one instance per simulated vehicle.

    Instances are independent (safe on parallel workers); stepping within one
    instance is strictly sequential.
    """

    def __init__(self, gains: ControllerGains, limits: InputLimits,
                 geo: VehicleGeometry, lanes: LaneLayout, initial_lane: int,
                 dt: float = 0.01):
        if not (0 <= initial_lane < lanes.count):
            raise ValueError("initial lane outside the layout")
        self.gains = gains
        self.limits = limits
        self.geo = geo
        self.lanes = lanes
        self.dt = dt
        self.params = pack_params(gains, limits, geo, dt)
        self.cost = cost_matrix(gains)
        self.ci = np.zeros(engine.CI_LEN, dtype=np.int64)
        self.ci[engine.CI_CUR] = initial_lane
        self.ci[engine.CI_TGT] = -1
        self.ci[engine.CI_SIGN] = -1
        self.cf = np.zeros(engine.CF_LEN)

    @property
    def state(self) -> FsmState:
        return FsmState(int(self.ci[engine.CI_STATE]))

    @property
    def current_lane(self) -> int:
        return int(self.ci[engine.CI_CUR])

    @property
    def target_lane(self) -> int | None:
        tgt = int(self.ci[engine.CI_TGT])
        return None if tgt < 0 else tgt

    @property
    def last_input(self) -> ControlInput:
        return ControlInput(float(self.cf[engine.CF_UA]),
                            float(self.cf[engine.CF_UB]))

    def control_step(self, ego: VehicleState,
                     vehicles: list[SurroundingVehicle], c: int
                     ) -> tuple[ControlInput, SignalSet,
                                ControllerDiagnostics]:
        """One control step; also advances the FSM and signal bookkeeping."""
        if c not in (-1, 0, 1):
            raise ValueError(f"command must be -1, 0 or 1, got {c}")
        arr = vehicles_to_array(vehicles, self.lanes)
        diag = np.empty(engine.DIAG_LEN)
        a, beta = engine.controller_step(
            ego.x, ego.y, ego.psi, ego.v, arr, int(c), self.lanes.centers,
            self.lanes.width, self.params, self.cost, self.ci, self.cf, diag)
        return (ControlInput(float(a), float(beta)),
                SignalSet(int(diag[engine.D_CMD]), float(diag[engine.D_P]),
                          int(diag[engine.D_E])),
                diagnostics_from_array(diag))


def diagnostics_from_array(diag: np.ndarray) -> ControllerDiagnostics:
    hs = {}
    brs = {}
    for kind, hslot, bslot in (("fc", engine.D_HFC, engine.D_BRFC),
                               ("ft", engine.D_HFT, engine.D_BRFT),
                               ("bt", engine.D_HBT, engine.D_BRBT)):
        h = diag[hslot]
        if not np.isnan(h):
            hs[kind] = float(h)
            brs[kind] = _BRANCH_NAMES[int(diag[bslot])]
    return ControllerDiagnostics(
        fsm_state=FsmState(int(diag[engine.D_STATE])),
        command=int(diag[engine.D_CMD]),
        p=float(diag[engine.D_P]),
        e=int(diag[engine.D_E]),
        qp_status="optimal" if diag[engine.D_QP] == 1 else "infeasible",
        h_values=hs,
        branches=brs,
        relaxations=(float(diag[engine.D_DV]), float(diag[engine.D_DY]),
                     float(diag[engine.D_DPSI])),
        kkt_residual=float(diag[engine.D_KKT]),
        switch_check=_SWITCH_NAMES[int(diag[engine.D_SWITCH])],
        fallback=bool(diag[engine.D_FALLBACK]),
        probe=_PROBE_NAMES[int(diag[engine.D_PROBE])],
        active_rows=int(diag[engine.D_NROWS]),
        solver_iterations=int(diag[engine.D_ITERS]),
        infeasibility_certificate=float(diag[engine.D_ECERT]),
    )
