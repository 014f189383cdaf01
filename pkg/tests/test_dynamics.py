import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lanechange import (
    ControlInput,
    InputLimits,
    VehicleGeometry,
    VehicleState,
    affine_terms,
    derivative,
    input_rows,
    steering_from_slip,
    step,
)


def test_derivative_straight_line(geo):
    d = derivative(VehicleState(0, 0, 0, 10), ControlInput(0, 0), geo)
    assert np.allclose(d, [10, 0, 0, 0])


def test_derivative_pure_acceleration(geo):
    d = derivative(VehicleState(0, 0, 0, 10), ControlInput(1, 0), geo)
    assert np.allclose(d, [10, 0, 0, 1])


def test_derivative_direct_substitution(geo):
    # oracle: substitute into the model equations by hand
    d = derivative(VehicleState(0, 0, 0.1, 20), ControlInput(0, 0.05), geo)
    expected = np.array([20 * np.cos(0.15), 20 * np.sin(0.15),
                         (20 / 1.74) * np.sin(0.05), 0.0])
    assert np.allclose(d, expected, rtol=0, atol=1e-12)


def test_derivative_matches_finite_differenced_trajectory(geo):
    # oracle: central difference of a finely integrated trajectory
    s = VehicleState(0, 0, 0.1, 20)
    u = ControlInput(0.3, 0.05)
    tau = 1e-6
    fwd = step(s, u, tau, geo)
    back_state = s
    # integrate backwards by stepping with the reversed derivative
    d = derivative(s, u, geo)
    back = np.array([s.x, s.y, s.psi, s.v]) - tau * d
    fd = (np.array([fwd.x, fwd.y, fwd.psi, fwd.v]) - back) / (2 * tau)
    assert np.allclose(fd, d, rtol=1e-6, atol=1e-9)


def test_affine_terms_substitution(geo):
    drift, gain = affine_terms(VehicleState(0, 0, 0, 10), geo)
    assert np.allclose(drift, [10, 0, 0, 0])
    assert np.allclose(gain, [[0, 0], [0, 10], [0, 10 / 1.74], [1, 0]])


def test_affine_terms_zero_speed_kills_slip_authority(geo):
    drift, gain = affine_terms(VehicleState(5, 2, 0, 0), geo)
    assert np.allclose(drift, 0)
    assert np.allclose(gain[:, 1], 0)


def test_affine_close_to_nonlinear_for_small_slip(geo):
    rng = np.random.default_rng(7)
    for _ in range(1000):
        v = rng.uniform(0, 40)
        psi = rng.uniform(-1.4, 1.4)
        beta = rng.uniform(-0.05, 0.05)
        a = rng.uniform(-3, 3)
        s = VehicleState(0, 0, psi, v)
        u = ControlInput(a, beta)
        exact = derivative(s, u, geo)
        drift, gain = affine_terms(s, geo)
        approx = drift + gain @ np.array([a, beta])
        assert np.max(np.abs(exact - approx)) < 0.005 * v + 1e-12


def test_affine_terms_are_exact_jacobian_of_affine_flow(geo):
    # finite differences of the affine model reproduce drift + gain @ u
    rng = np.random.default_rng(3)
    tau = 1e-5
    for _ in range(200):
        v = rng.uniform(0.1, 40)
        psi = rng.uniform(-1.0, 1.0)
        y = rng.uniform(-5, 15)
        u = np.array([rng.uniform(-3, 3), rng.uniform(-0.2, 0.2)])

        def affine_rhs(state):
            drift, gain = affine_terms(
                VehicleState(state[0], state[1], state[2], max(state[3], 0)),
                geo)
            return drift + gain @ u

        def rk4_flow(s, h):
            k1 = affine_rhs(s)
            k2 = affine_rhs(s + 0.5 * h * k1)
            k3 = affine_rhs(s + 0.5 * h * k2)
            k4 = affine_rhs(s + h * k3)
            return s + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

        s0 = np.array([0.0, y, psi, v])
        fd = (rk4_flow(s0, tau) - rk4_flow(s0, -tau)) / (2 * tau)
        k1 = affine_rhs(s0)
        rel = np.abs(fd - k1) / np.maximum(1.0, np.abs(k1))
        assert np.max(rel) < 1e-8


def test_step_uniform_motion_exact(geo):
    s = step(VehicleState(0, 0, 0, 10), ControlInput(0, 0), 0.01, geo)
    assert np.allclose([s.x, s.y, s.psi, s.v], [0.1, 0, 0, 10], atol=1e-15)


def test_step_constant_acceleration_closed_form(geo):
    # oracle: x = v0 t + a t^2 / 2, v = v0 + a t
    s = step(VehicleState(0, 0, 0, 10), ControlInput(2, 0), 0.01, geo)
    assert s.x == pytest.approx(0.1001, abs=1e-12)
    assert s.v == pytest.approx(10.02, abs=1e-12)


def test_step_matches_substepped_reference(geo):
    # Richardson-style oracle: dt/10 sub-stepping over one second
    u = ControlInput(1, 0.1)
    coarse = VehicleState(0, 0, 0, 10)
    fine = VehicleState(0, 0, 0, 10)
    for _ in range(100):
        coarse = step(coarse, u, 0.01, geo)
    for _ in range(1000):
        fine = step(fine, u, 0.001, geo)
    err = np.abs(np.array([coarse.x - fine.x, coarse.y - fine.y,
                           coarse.psi - fine.psi, coarse.v - fine.v]))
    assert np.max(err) < 1e-8


def test_step_fourth_order_convergence(geo):
    u = ControlInput(1.5, 0.12)
    s0 = VehicleState(0, 0, 0.05, 15)
    ref = s0
    for _ in range(256):
        ref = step(ref, u, 0.04 / 256, geo)
    ref_arr = np.array([ref.x, ref.y, ref.psi, ref.v])

    def one_step_err(dt, n):
        s = s0
        for _ in range(n):
            s = step(s, u, dt, geo)
        return np.linalg.norm(np.array([s.x, s.y, s.psi, s.v]) - ref_arr)

    e1 = one_step_err(0.04, 1)
    e2 = one_step_err(0.02, 2)
    # halving dt cuts the error by about 2^4
    assert e1 / e2 > 10


def test_step_speed_never_negative(geo):
    s = VehicleState(0, 0, 0, 0.01)
    for _ in range(20):
        s = step(s, ControlInput(-2.943, 0), 0.01, geo)
    assert s.v == 0.0


def test_steering_identity(geo):
    assert steering_from_slip(0.0, geo) == 0.0


def test_steering_direct_evaluation(geo):
    # oracle: invert the slip relation by hand
    expected = np.arctan(np.tan(0.1) * (1.11 + 1.74) / 1.74)
    assert steering_from_slip(0.1, geo) == pytest.approx(expected, abs=1e-15)
    assert steering_from_slip(0.1, geo) == pytest.approx(0.1628853, abs=5e-7)


@given(beta=st.floats(-1.2, 1.2))
@settings(max_examples=200, deadline=None)
def test_steering_round_trip(beta):
    geo = VehicleGeometry()
    delta = steering_from_slip(beta, geo)
    back = np.arctan(geo.l_r / (geo.l_f + geo.l_r) * np.tan(delta))
    assert abs(back - beta) < 1e-12


@given(beta=st.floats(0.0, 1.4))
@settings(max_examples=200, deadline=None)
def test_steering_is_odd(beta):
    geo = VehicleGeometry()
    assert steering_from_slip(-beta, geo) == -steering_from_slip(beta, geo)


def test_input_rows_zero_speed_lateral_rows_vacuous(geo, limits):
    rows = input_rows(VehicleState(0, 0, 0, 0), ControlInput(0, 0), 0.01,
                      limits, geo)
    lateral = [r for r in rows if r.tag.startswith("box-ay")]
    assert len(lateral) == 2
    assert all(r.is_vacuous for r in lateral)
    assert all(r.bound == pytest.approx(limits.ay_max) for r in lateral)


def test_input_rows_lateral_bound_at_speed(geo, limits):
    # oracle: |beta| <= ay_max * l_r / v^2 and a_y = v^2 beta / l_r <= 0.3 g
    v = 27.5
    rows = input_rows(VehicleState(0, 0, 0, v), ControlInput(0, 0), 0.01,
                      limits, geo)
    hi = next(r for r in rows if r.tag == "box-ay+")
    beta_bound = hi.bound / hi.coeffs[1]
    assert beta_bound == pytest.approx(limits.ay_max * geo.l_r / v**2,
                                       rel=1e-12)
    assert beta_bound == pytest.approx(6.77e-3, abs=5e-5)
    assert v**2 * beta_bound / geo.l_r <= 0.3 * 9.81 + 1e-12


def test_input_rows_rate_window(geo, limits):
    rows = input_rows(VehicleState(0, 0, 0, 20), ControlInput(0, 0.001),
                      0.01, limits, geo)
    hi = next(r for r in rows if r.tag == "box-beta-rate+")
    lo = next(r for r in rows if r.tag == "box-beta-rate-")
    width = np.radians(15.0) * 0.01
    assert hi.bound == pytest.approx(0.001 + width, abs=1e-15)
    assert -lo.bound == pytest.approx(0.001 - width, abs=1e-15)


@given(v=st.floats(5.0, 40.0), frac=st.floats(-1.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_input_rows_keep_lateral_acceleration_bounded(v, frac):
    geo = VehicleGeometry()
    limits = InputLimits()
    rows = input_rows(VehicleState(0, 0, 0, v), ControlInput(0, 0), 0.01,
                      limits, geo)
    # largest beta admitted by every row
    hi = min(r.bound / r.coeffs[1] for r in rows if r.coeffs[1] > 0)
    lo = max(r.bound / r.coeffs[1] for r in rows if r.coeffs[1] < 0)
    beta = lo + (frac + 1.0) / 2.0 * (hi - lo)
    assert abs(v**2 * beta / geo.l_r) <= 0.3 * 9.81 + 1e-9


def test_invalid_construction():
    with pytest.raises(ValueError):
        VehicleState(0, 0, 0, -1.0)
    with pytest.raises(ValueError):
        VehicleGeometry(l_f=-0.1)
    with pytest.raises(ValueError):
        InputLimits(a_max=0.0)
    with pytest.raises(ValueError):
        steering_from_slip(1.6, VehicleGeometry())
