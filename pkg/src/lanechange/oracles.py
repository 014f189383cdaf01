"""Independent finite-difference oracles for the constraint construction.

The analytic rows claim a time derivative for every barrier and tracking
function; these helpers check that claim by advancing the coupled
ego/vehicle flow numerically (ego under the affine model with a frozen
input, the other vehicle under its reported kinematics) and differencing.
Central differences with an RK4 flow keep the oracle error near 1e-10 so a
1e-5 acceptance bound is meaningful.
"""

from dataclasses import replace

import numpy as np

from .barriers import BarrierEvaluation, ControllerGains, SurroundingVehicle
from .dynamics import VehicleGeometry, VehicleState, affine_terms


def flow_affine(s: VehicleState, u: np.ndarray, tau: float,
                geo: VehicleGeometry) -> VehicleState:
    """One RK4 step of the control-affine model with the input frozen."""

    def rhs(state):
        drift, gain = affine_terms(
            VehicleState(state[0], state[1], state[2], state[3]), geo)
        return drift + gain @ u

    z = np.array([s.x, s.y, s.psi, s.v])
    k1 = rhs(z)
    k2 = rhs(z + 0.5 * tau * k1)
    k3 = rhs(z + 0.5 * tau * k2)
    k4 = rhs(z + tau * k3)
    z = z + tau / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return VehicleState(z[0], z[1], z[2], z[3])


def advance_other(other: SurroundingVehicle, tau: float) -> SurroundingVehicle:
    """Advance a surrounding vehicle by its reported kinematics."""
    return replace(
        other,
        x=other.x + other.v * tau + 0.5 * other.accel * tau * tau,
        v=other.v + other.accel * tau,
        y=other.y + other.lateral_speed * tau,
    )


def barrier_rate_error(eval_fn, ego: VehicleState, other: SurroundingVehicle,
                       u: np.ndarray, geo: VehicleGeometry,
                       tau: float = 1e-5) -> float:
    """Relative error between the claimed barrier rate and a central
    difference along the coupled flow. Raises if the piecewise branch flips
    inside the differencing window (the sample is then meaningless)."""
    ev0: BarrierEvaluation = eval_fn(ego, other)
    analytic = ev0.dt_term + ev0.lf_term + float(ev0.lg_row @ u)

    def h_at(t):
        ev = eval_fn(flow_affine(ego, u, t, geo), advance_other(other, t))
        if ev.branch != ev0.branch:
            raise ValueError("branch flip inside the differencing window")
        return ev.h

    fd = (h_at(tau) - h_at(-tau)) / (2.0 * tau)
    return abs(analytic - fd) / max(1.0, abs(analytic))


def clf_rate_errors(rows, values, ego: VehicleState, u: np.ndarray,
                    gains: ControllerGains, y_target: float,
                    geo: VehicleGeometry, tau: float = 1e-5) -> np.ndarray:
    """Relative errors of the three tracking-function rates implied by the
    rows (Lf V = -bound - alpha V, Lg V u = coeffs . u) against central
    differences of V along the affine flow."""
    alphas = (gains.alpha_v, gains.alpha_y, gains.alpha_psi)

    def v_values(s):
        return np.array([(s.v - gains.v_d) ** 2, (s.y - y_target) ** 2,
                         s.psi ** 2])

    plus = v_values(flow_affine(ego, u, tau, geo))
    minus = v_values(flow_affine(ego, u, -tau, geo))
    fd = (plus - minus) / (2.0 * tau)
    errs = np.empty(3)
    for j, row in enumerate(rows):
        analytic = (float(row.coeffs[:2] @ u) - row.bound
                    - alphas[j] * values[j])
        errs[j] = abs(analytic - fd[j]) / max(1.0, abs(analytic))
    return errs
