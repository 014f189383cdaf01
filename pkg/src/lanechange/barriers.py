"""Control Lyapunov and control barrier rows over (a, beta, dv, dy, dpsi).

All barriers are time varying: surrounding-vehicle motion enters through the
partial-time term, ego motion through the affine-model Lie derivatives, so
each assembled row stays linear in the decision vector. Front/behind roles
and absolute-value signs are frozen per control step.
"""

from dataclasses import dataclass, field

import numpy as np

from . import engine
from .dynamics import G, VehicleGeometry, VehicleState
from .qp import LinearInequality

BRANCH_NAMES = {engine.BR_PLAIN: "plain", engine.BR_BRAKE: "brake",
                engine.BR_LATERAL: "lateral"}

SAFETY_TOL = engine.SAFETY_TOL


@dataclass
class SurroundingVehicle:
    id: int
    x: float  # m
    y: float  # m
    v: float  # longitudinal speed, m/s
    accel: float = 0.0  # m/s^2
    lane_index: int = 0
    lateral_speed: float = 0.0  # nonzero only for a vehicle changing lanes


@dataclass
class VehiclesOfInterest:
    fc: SurroundingVehicle | None = None  # front, current lane
    ft: SurroundingVehicle | None = None  # front, target lane
    bt: SurroundingVehicle | None = None  # behind, target lane

    def present(self) -> list[tuple[str, SurroundingVehicle]]:
        out = []
        if self.fc is not None:
            out.append(("fc", self.fc))
        if self.ft is not None:
            out.append(("ft", self.ft))
        if self.bt is not None:
            out.append(("bt", self.bt))
        return out


@dataclass
class GapMeasures:
    dx: float  # longitudinal body gap, may be negative when overlapping
    dy: float  # lateral body gap


def gap_measures(ego: VehicleState, other: SurroundingVehicle,
                 geo: VehicleGeometry) -> GapMeasures:
    return GapMeasures(
        dx=float(engine.gap_dx(ego.x, other.x, geo.l_fc, geo.l_rc)),
        dy=float(engine.gap_dy(ego.y, other.y, geo.w_lc, geo.w_rc)),
    )


def _default_h():
    return np.array([[0.01, 0.0], [0.0, 0.0]])


@dataclass
class ControllerGains:
    v_d: float  # desired speed, m/s
    v_l: float  # scenario speed limit, m/s
    epsilon: float = 0.5  # safety factor scaling the required headway
    alpha_v: float = 1.7  # tracking rates, 1/s
    alpha_y: float = 0.8
    alpha_psi: float = 12.0
    gamma_fc: float = 1.0  # barrier decay rates, 1/s
    gamma_ft: float = 1.0
    gamma_bt: float = 1.0
    p_v: float = 0.1  # relaxation penalties
    p_y: float = 15.0
    p_psi: float = 400.0
    H: np.ndarray = field(default_factory=_default_h)  # input cost, 2x2
    a_l: float = 0.3 * G  # assumed braking capability, m/s^2

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        if not (0.1 <= self.epsilon <= 1.0):
            raise ValueError("safety factor must lie in [0.1, 1]")
        for name in ("alpha_v", "alpha_y", "alpha_psi", "gamma_fc",
                     "gamma_ft", "gamma_bt", "p_v", "p_y", "p_psi", "a_l",
                     "v_d", "v_l"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.H.shape != (2, 2) or not np.allclose(self.H, self.H.T):
            raise ValueError("input cost must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(self.H)[0] < -1e-12:
            raise ValueError("input cost must be positive semidefinite")

    def gamma(self, kind: str) -> float:
        return {"fc": self.gamma_fc, "ft": self.gamma_ft,
                "bt": self.gamma_bt}[kind]


def cost_matrix(gains: ControllerGains, ridge: float = 1e-6) -> np.ndarray:
    """Strictly convex 5x5 cost: input block plus relaxation penalties.

    The penalty terms are written p*delta^2, i.e. 2p on the quadratic-form
    diagonal; the ridge restores strict convexity of the singular input cost.
    """
    P = np.zeros((5, 5))
    P[:2, :2] = gains.H
    P[2, 2] = 2.0 * gains.p_v
    P[3, 3] = 2.0 * gains.p_y
    P[4, 4] = 2.0 * gains.p_psi
    return P + ridge * np.eye(5)


@dataclass
class BarrierEvaluation:
    """One evaluated barrier: value, split derivative terms, branch taken."""

    kind: str  # fc | ft | bt
    branch: str  # plain | brake | lateral
    h: float
    dt_term: float  # surrounding-vehicle (time-varying) part of hdot
    lf_term: float  # ego drift part
    lg_row: np.ndarray  # ego input part, coefficients on (a, beta)

    def row(self, gamma: float, dim: int = 5) -> LinearInequality:
        """Encode dh/dt + Lf h + Lg h u >= -gamma h as a <=-inequality."""
        coeffs = np.zeros(dim)
        coeffs[0] = -self.lg_row[0]
        coeffs[1] = -self.lg_row[1]
        return LinearInequality(coeffs,
                                self.dt_term + self.lf_term + gamma * self.h,
                                f"cbf-{self.kind}")


def clf_rows(s: VehicleState, gains: ControllerGains, y_target: float,
             geo: VehicleGeometry
             ) -> tuple[list[LinearInequality], tuple[float, float, float]]:
    """Tracking rows for speed, lateral offset and heading, each softened by
    its own relaxation column. Returns the rows and the V values."""
    A = np.empty((engine.MAXR, engine.DIM))
    b = np.empty(engine.MAXR)
    tags = np.empty(engine.MAXR, dtype=np.int64)
    n = engine.build_clf_rows(A, b, tags, 0, s.v, s.y, s.psi, gains.v_d,
                              y_target, gains.alpha_v, gains.alpha_y,
                              gains.alpha_psi, geo.l_r)
    rows = [LinearInequality(A[i, :engine.DIM].copy(), float(b[i]),
                             engine.TAG_NAMES[tags[i]]) for i in range(n)]
    values = ((s.v - gains.v_d) ** 2, (s.y - y_target) ** 2, s.psi ** 2)
    return rows, values


def cbf_acc(s: VehicleState, fc: SurroundingVehicle, gains: ControllerGains,
            geo: VehicleGeometry) -> BarrierEvaluation:
    """Headway barrier to the leading vehicle while lane keeping."""
    if fc is None:
        raise ValueError("a leading vehicle is required")
    if fc.x <= s.x:
        raise ValueError("leading vehicle must be ahead of the ego")
    dx = engine.gap_dx(s.x, fc.x, geo.l_fc, geo.l_rc)
    h, dtm, lf, la, lb, br = engine.barrier_front(
        dx, s.v, s.psi, fc.v, fc.accel, gains.epsilon, gains.a_l)
    return BarrierEvaluation("fc", BRANCH_NAMES[br], float(h), float(dtm),
                             float(lf), np.array([la, lb]))


def cbf_lane_change(s: VehicleState, voi: VehiclesOfInterest,
                    gains: ControllerGains, geo: VehicleGeometry,
                    ego_fully_in_target: bool = False
                    ) -> list[BarrierEvaluation]:
    """Barriers active while moving into the target lane: headway to both
    front vehicles and a rear gap sized by the rear vehicle's speed. The
    current-lane and rear barriers are dropped once the ego body is entirely
    inside the target lane; absent vehicles produce no row."""
    out = []
    eps, a_l = gains.epsilon, gains.a_l
    if voi.fc is not None and not ego_fully_in_target:
        dx = engine.gap_dx(s.x, voi.fc.x, geo.l_fc, geo.l_rc)
        h, dtm, lf, la, lb, br = engine.barrier_front(
            dx, s.v, s.psi, voi.fc.v, voi.fc.accel, eps, a_l)
        out.append(BarrierEvaluation("fc", BRANCH_NAMES[br], float(h),
                                     float(dtm), float(lf),
                                     np.array([la, lb])))
    if voi.ft is not None:
        dx = engine.gap_dx(s.x, voi.ft.x, geo.l_fc, geo.l_rc)
        h, dtm, lf, la, lb, br = engine.barrier_front(
            dx, s.v, s.psi, voi.ft.v, voi.ft.accel, eps, a_l)
        out.append(BarrierEvaluation("ft", BRANCH_NAMES[br], float(h),
                                     float(dtm), float(lf),
                                     np.array([la, lb])))
    if voi.bt is not None and not ego_fully_in_target:
        dx = engine.gap_dx(s.x, voi.bt.x, geo.l_fc, geo.l_rc)
        h, dtm, lf, la, lb, br = engine.barrier_rear(
            dx, s.v, s.psi, voi.bt.v, voi.bt.accel, eps, a_l)
        out.append(BarrierEvaluation("bt", BRANCH_NAMES[br], float(h),
                                     float(dtm), float(lf),
                                     np.array([la, lb])))
    return out


def cbf_back(s: VehicleState, voi: VehiclesOfInterest,
             gains: ControllerGains,
             geo: VehicleGeometry) -> list[BarrierEvaluation]:
    """Barriers active while aborting back to the original lane: headway to
    the front current-lane vehicle, and longitudinal-or-lateral floors on the
    target-lane pair (lateral once the bodies overlap along the road)."""
    out = []
    eps, a_l = gains.epsilon, gains.a_l
    if voi.fc is not None:
        dx = engine.gap_dx(s.x, voi.fc.x, geo.l_fc, geo.l_rc)
        h, dtm, lf, la, lb, br = engine.barrier_front(
            dx, s.v, s.psi, voi.fc.v, voi.fc.accel, eps, a_l)
        out.append(BarrierEvaluation("fc", BRANCH_NAMES[br], float(h),
                                     float(dtm), float(lf),
                                     np.array([la, lb])))
    if voi.ft is not None:
        dx = engine.gap_dx(s.x, voi.ft.x, geo.l_fc, geo.l_rc)
        dy = engine.gap_dy(s.y, voi.ft.y, geo.w_lc, geo.w_rc)
        sy = 1.0 if s.y >= voi.ft.y else -1.0
        h, dtm, lf, la, lb, br = engine.barrier_return_front(
            dx, dy, sy, s.v, s.psi, voi.ft.v, voi.ft.accel,
            voi.ft.lateral_speed, eps, a_l)
        out.append(BarrierEvaluation("ft", BRANCH_NAMES[br], float(h),
                                     float(dtm), float(lf),
                                     np.array([la, lb])))
    if voi.bt is not None:
        dx = engine.gap_dx(s.x, voi.bt.x, geo.l_fc, geo.l_rc)
        dy = engine.gap_dy(s.y, voi.bt.y, geo.w_lc, geo.w_rc)
        sy = 1.0 if s.y >= voi.bt.y else -1.0
        h, dtm, lf, la, lb, br = engine.barrier_return_rear(
            dx, dy, sy, s.v, s.psi, voi.bt.v, voi.bt.accel,
            voi.bt.lateral_speed, eps, a_l)
        out.append(BarrierEvaluation("bt", BRANCH_NAMES[br], float(h),
                                     float(dtm), float(lf),
                                     np.array([la, lb])))
    return out


def barrier_value(kind: str, s: VehicleState, other: SurroundingVehicle,
                  gains: ControllerGains, geo: VehicleGeometry,
                  returning: bool = False) -> float:
    """Value of the active branch only (no derivatives). `returning` selects
    the abort-state definitions for ft/bt."""
    if other is None:
        raise ValueError("a vehicle is required")
    voi = VehiclesOfInterest(**{kind: other})
    if kind == "fc":
        return cbf_acc(s, other, gains, geo).h
    evals = (cbf_back if returning else cbf_lane_change)(s, voi, gains, geo)
    return evals[0].h


def switch_safety_check(new_rows: list[BarrierEvaluation],
                        tol: float = SAFETY_TOL) -> bool:
    """Safe-set intersection condition at a constraint switch: every barrier
    of the incoming set must be nonnegative (up to the discrete-time
    allowance) at the switch instant."""
    return all(ev.h >= -tol for ev in new_rows)
