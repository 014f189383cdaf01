"""Kinematic bicycle plant, its control-affine approximation, and input limits.

The plant integrates the full nonlinear model; the controller's constraint
rows use the affine form, so the model mismatch is visible in closed loop
rather than hidden in the integrator.
"""

from dataclasses import dataclass, field

import numpy as np

from . import engine
from .qp import LinearInequality

G = 9.81  # gravitational acceleration, m/s^2


@dataclass
class VehicleState:
    x: float  # position in the inertial frame, m
    y: float  # m
    psi: float  # heading, rad
    v: float  # speed, m/s

    def __post_init__(self):
        if self.v < 0.0:
            raise ValueError(f"speed must be nonnegative, got {self.v}")
        if not np.isfinite(self.psi):
            raise ValueError("heading must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.v])


@dataclass
class ControlInput:
    a: float  # longitudinal acceleration at the c.g., m/s^2
    beta: float  # slip angle, rad

    def steering(self, geo: "VehicleGeometry") -> float:
        """Front steering angle realizing this slip angle."""
        return steering_from_slip(self.beta, geo)


@dataclass(frozen=True)
class VehicleGeometry:
    l_f: float = 1.11  # c.g. to front axle, m
    l_r: float = 1.74  # c.g. to rear axle, m
    l_fc: float = 2.15  # body length ahead of c.g., m
    l_rc: float = 2.77  # body length behind c.g., m
    w_lc: float = 0.93  # body width left of c.g., m
    w_rc: float = 0.93  # body width right of c.g., m

    def __post_init__(self):
        for name in ("l_f", "l_r", "l_fc", "l_rc", "w_lc", "w_rc"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    @property
    def length(self) -> float:
        return self.l_fc + self.l_rc

    @property
    def width(self) -> float:
        return self.w_lc + self.w_rc


@dataclass(frozen=True)
class InputLimits:
    beta_max: float = np.radians(15.0)  # rad
    beta_rate_max: float = np.radians(15.0)  # rad/s
    a_max: float = 0.3 * G  # m/s^2
    ay_max: float = 0.3 * G  # lateral acceleration bound, m/s^2
    g: float = G

    def __post_init__(self):
        for name in ("beta_max", "beta_rate_max", "a_max", "ay_max", "g"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


def derivative(s: VehicleState, u: ControlInput,
               geo: VehicleGeometry) -> np.ndarray:
    """Nonlinear plant derivative (xdot, ydot, psidot, vdot)."""
    return np.array(engine.dyn_derivative(s.x, s.y, s.psi, s.v, u.a, u.beta,
                                          geo.l_r))


def affine_terms(s: VehicleState,
                 geo: VehicleGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Drift vector and input gain of the control-affine model.

    Columns of the gain correspond to (a, beta); valid under the small
    slip-angle assumption.
    """
    drift = np.array([s.v * np.cos(s.psi), s.v * np.sin(s.psi), 0.0, 0.0])
    gain = np.array([
        [0.0, -s.v * np.sin(s.psi)],
        [0.0, s.v * np.cos(s.psi)],
        [0.0, s.v / geo.l_r],
        [1.0, 0.0],
    ])
    return drift, gain


def step(s: VehicleState, u: ControlInput, dt: float,
         geo: VehicleGeometry) -> VehicleState:
    """One RK4 step of the nonlinear plant with the input held constant.

    Speed is floored at zero (the plant cannot reverse).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    x, y, psi, v = engine.dyn_rk4(s.x, s.y, s.psi, s.v, u.a, u.beta, dt,
                                  geo.l_r)
    return VehicleState(x, y, psi, v)


def steering_from_slip(beta: float, geo: VehicleGeometry) -> float:
    """Invert the slip-angle relation to recover the front steering angle."""
    if abs(beta) >= np.pi / 2:
        raise ValueError("slip angle must be inside (-pi/2, pi/2)")
    return float(np.arctan(np.tan(beta) * (geo.l_f + geo.l_r) / geo.l_r))


def input_rows(s: VehicleState, u_prev: ControlInput, dt: float,
               lim: InputLimits, geo: VehicleGeometry,
               dim: int = 2) -> list[LinearInequality]:
    """Input-limit rows over (a, beta): accel and slip boxes, per-step slip
    rate, and the lateral-acceleration bound linearized at the current speed.

    At zero speed the lateral rows are vacuous (0 <= ay_max) and flagged so.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    A = np.empty((engine.MAXR, engine.DIM))
    b = np.empty(engine.MAXR)
    tags = np.empty(engine.MAXR, dtype=np.int64)
    n = engine.build_input_rows(A, b, tags, 0, s.v, u_prev.beta, dt,
                                lim.beta_max, lim.beta_rate_max, lim.a_max,
                                lim.ay_max, geo.l_r)
    rows = []
    for i in range(n):
        coeffs = A[i, :dim].copy()
        rows.append(LinearInequality(coeffs, float(b[i]),
                                     engine.TAG_NAMES[tags[i]]))
    return rows
