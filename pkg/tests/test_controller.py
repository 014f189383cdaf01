import numpy as np
import pytest

from lanechange import (
    ControlInput,
    FsmState,
    LaneChangeController,
    SignalSet,
    SurroundingVehicle,
    VehicleState,
    VehiclesOfInterest,
    compute_p,
    predictive_speed_check,
    select_vehicles_of_interest,
    step,
    transition,
)


def veh(x, y, v, vid=1, accel=0.0):
    return SurroundingVehicle(id=vid, x=x, y=y, v=v, accel=accel)


# --- transition table --------------------------------------------------------


@pytest.mark.parametrize("state,c,p,e,expected", [
    (FsmState.ACC, 1, 0.0, 1, FsmState.L),
    (FsmState.ACC, -1, 0.0, 1, FsmState.R),
    (FsmState.ACC, 1, 0.0, 0, FsmState.ACC),
    (FsmState.ACC, 0, 0.0, 1, FsmState.ACC),
    (FsmState.L, 1, 1.0, 1, FsmState.ACC),
    (FsmState.L, 1, 0.5, 0, FsmState.BL),
    (FsmState.L, 1, 0.0, 0, FsmState.BL),
    (FsmState.L, 1, 0.5, 1, FsmState.L),
    (FsmState.R, -1, 1.0, 0, FsmState.ACC),
    (FsmState.R, -1, 0.5, 0, FsmState.BR),
    (FsmState.BL, 1, 0.0, 1, FsmState.ACC),
    (FsmState.BL, 1, 0.5, 1, FsmState.BL),
    (FsmState.BR, -1, 0.0, 0, FsmState.ACC),
    (FsmState.BR, 0, 0.5, 0, FsmState.BR),
])
def test_transition_table(state, c, p, e, expected):
    assert transition(state, SignalSet(c, p, e)) == expected


def test_transition_rejects_invalid_signals():
    with pytest.raises(ValueError):
        SignalSet(2, 0.0, 1)
    with pytest.raises(ValueError):
        SignalSet(1, 0.3, 1)
    with pytest.raises(ValueError):
        SignalSet(1, 0.0, 2)


# --- lateral progress --------------------------------------------------------


def test_progress_zero_in_current_lane(geo, lanes3):
    ego = VehicleState(0, 1.75, 0, 27.5)
    assert compute_p(ego, geo, lanes3, 0, 1, 0.0) == 0.0


def test_progress_half_once_edge_crosses(geo, lanes3):
    # boundary between lanes 0 and 1 sits at y = 3.5
    y = 3.5 - geo.w_lc + 0.01
    assert compute_p(VehicleState(0, y, 0, 27.5), geo, lanes3, 0, 1,
                     0.0) == 0.5
    y = 3.5 - geo.w_lc - 0.01
    assert compute_p(VehicleState(0, y, 0, 27.5), geo, lanes3, 0, 1,
                     0.0) == 0.0


def test_progress_one_needs_dwell(geo, lanes3):
    ego = VehicleState(0, 5.25, 0, 27.5)  # fully inside the target lane
    assert compute_p(ego, geo, lanes3, 0, 1, 1.49) == 0.5
    assert compute_p(ego, geo, lanes3, 0, 1, 1.50) == 1.0


def test_progress_rightward_change(geo, lanes3):
    ego = VehicleState(0, 5.25, 0, 27.5)
    assert compute_p(ego, geo, lanes3, 1, 0, 0.0) == 0.0
    y = 3.5 + geo.w_rc - 0.01
    assert compute_p(VehicleState(0, y, 0, 27.5), geo, lanes3, 1, 0,
                     0.0) == 0.5


# --- vehicles of interest ----------------------------------------------------


def test_select_empty_road(lanes3):
    voi = select_vehicles_of_interest(VehicleState(0, 1.75, 0, 27.5), [],
                                      lanes3, 0, 1)
    assert voi.fc is None and voi.ft is None and voi.bt is None


def test_select_leading_vehicle_only(lanes3):
    vehicles = [veh(55, 1.75, 22)]
    voi = select_vehicles_of_interest(VehicleState(0, 1.75, 0, 27.5),
                                      vehicles, lanes3, 0, 1)
    assert voi.fc is vehicles[0]
    assert voi.ft is None and voi.bt is None


def test_select_nearest_ahead(lanes3):
    vehicles = [veh(40, 5.25, 20, vid=1), veh(20, 5.25, 20, vid=2),
                veh(-10, 5.25, 20, vid=3), veh(-30, 5.25, 20, vid=4)]
    voi = select_vehicles_of_interest(VehicleState(0, 1.75, 0, 27.5),
                                      vehicles, lanes3, 0, 1)
    assert voi.ft.id == 2
    assert voi.bt.id == 3
    assert voi.fc is None


def test_select_assigns_lane_by_center_of_gravity(lanes3):
    # y = 3.6 is past the 0/1 boundary: the vehicle counts as lane 1
    vehicles = [veh(30, 3.6, 20)]
    voi = select_vehicles_of_interest(VehicleState(0, 1.75, 0, 27.5),
                                      vehicles, lanes3, 0, 1)
    assert voi.ft is vehicles[0]
    voi = select_vehicles_of_interest(VehicleState(0, 1.75, 0, 27.5),
                                      [veh(30, 3.4, 20)], lanes3, 0, 1)
    assert voi.ft is None and voi.fc is not None


# --- predictive desired speed ------------------------------------------------


def test_predictive_empty_returns_limit(geo, gains):
    ego = VehicleState(0, 1.75, 0, 27.5)
    assert predictive_speed_check(ego, VehiclesOfInterest(), gains,
                                  geo) == gains.v_l


def test_predictive_blocked_by_slow_leader(geo, gains):
    # oracle: dx' = dx + v_fc (v_l - v)/a_l - (v_l^2 - v^2)/(2 a_l) - 1.5 v
    ego = VehicleState(0, 1.75, 0, 27.5)
    voi = VehiclesOfInterest(fc=veh(55, 1.75, 22))
    dx = 55 - 4.92
    tau = (gains.v_l - 27.5) / gains.a_l
    dxp = (dx + 22 * tau - (gains.v_l**2 - 27.5**2) / (2 * gains.a_l)
           - 1.5 * 27.5)
    assert dxp < 0  # the lookahead says no room (about -7.84)
    assert dxp == pytest.approx(-7.84, abs=0.01)
    assert predictive_speed_check(ego, voi, gains, geo) == gains.v_d


def test_predictive_far_rear_vehicle_passes(geo, gains):
    ego = VehicleState(0, 1.75, 0, 27.5)
    voi = VehiclesOfInterest(bt=veh(-204.92, 5.25, 19))  # gap of 200
    tau = (gains.v_l - 27.5) / gains.a_l
    dxp = (200 - 19 * tau + (gains.v_l**2 - 27.5**2) / (2 * gains.a_l)
           - 1.5 * 19)
    assert dxp > 0
    assert predictive_speed_check(ego, voi, gains, geo) == gains.v_l


# --- closed-loop controller steps --------------------------------------------


def make_controller(gains, limits, geo, lanes3):
    return LaneChangeController(gains, limits, geo, lanes3, initial_lane=0)


def test_equilibrium_step_is_zero(gains, limits, geo, lanes3):
    ctrl = make_controller(gains, limits, geo, lanes3)
    ego = VehicleState(0, 1.75, 0, 27.5)  # at speed, centered, straight
    u, signals, diag = ctrl.control_step(ego, [], 0)
    assert abs(u.a) < 1e-6 and abs(u.beta) < 1e-6
    assert diag.qp_status == "optimal"
    assert max(abs(d) for d in diag.relaxations) < 1e-6
    assert diag.kkt_residual < 1e-8
    assert signals.e == 1 and signals.p == 0.0


def test_immediate_entry_with_leading_vehicle(gains, limits, geo, lanes3):
    # slow leader ahead, empty target lane: enter L and brake
    ctrl = make_controller(gains, limits, geo, lanes3)
    ego = VehicleState(0, 1.75, 0, 27.5)
    u, signals, diag = ctrl.control_step(ego, [veh(55, 1.75, 22)], 1)
    assert ctrl.state == FsmState.L
    assert diag.fsm_state == FsmState.L
    assert signals.e == 1
    assert diag.h_values["fc"] == pytest.approx(3.691, abs=1e-3)
    assert u.a < -0.5  # deceleration forced by the headway barrier
    assert diag.switch_check == "ok"


def test_blocked_entry_stays_cruising(gains, limits, geo, lanes3):
    # rear target-lane vehicle violating the entry condition
    ctrl = make_controller(gains, limits, geo, lanes3)
    ego = VehicleState(0, 1.75, 0, 27.5)
    u, signals, diag = ctrl.control_step(ego, [veh(-15, 5.25, 19)], 1)
    assert ctrl.state == FsmState.ACC
    assert signals.e == 0
    assert diag.probe == "gated"
    assert diag.infeasibility_certificate == pytest.approx(-18.42, abs=1e-9)
    assert u.a > 0.5  # lookahead raised the desired speed


def test_box_limits_respected_closed_loop(gains, limits, geo, lanes3):
    # starts inside the safe set (the scenario-1 geometry)
    ctrl = make_controller(gains, limits, geo, lanes3)
    ego = VehicleState(0, 1.75, 0, 27.5)
    vehicles = [veh(55, 1.75, 22)]
    prev_beta = 0.0
    for k in range(200):
        u, signals, diag = ctrl.control_step(ego, vehicles, 1)
        assert abs(u.a) <= limits.a_max + 1e-9
        assert abs(u.beta) <= limits.beta_max + 1e-9
        assert abs(u.beta - prev_beta) <= limits.beta_rate_max * 0.01 + 1e-9
        assert abs(ego.v**2 * u.beta / geo.l_r) <= limits.ay_max + 1e-9
        assert diag.qp_status == "optimal"
        prev_beta = u.beta
        ego = step(ego, u, 0.01, geo)
        vehicles[0] = veh(vehicles[0].x + 22 * 0.01, 1.75, 22)


def test_abort_on_sudden_threat(gains, limits, geo, lanes3):
    # enter L on an empty road, then a threat materializes in the target lane
    ctrl = make_controller(gains, limits, geo, lanes3)
    ego = VehicleState(0, 1.75, 0, 27.5)
    u, signals, diag = ctrl.control_step(ego, [], 1)
    assert ctrl.state == FsmState.L
    ego = step(ego, u, 0.01, geo)
    threat = veh(6.0, 5.25, 33.0)  # close ahead in the target lane
    u, signals, diag = ctrl.control_step(ego, [threat], 1)
    assert ctrl.state == FsmState.BL
    assert signals.e == 0
    assert diag.infeasibility_certificate > 1e-9
    assert diag.qp_status == "optimal"  # the return QP took over


def test_controller_rejects_bad_command(gains, limits, geo, lanes3):
    ctrl = make_controller(gains, limits, geo, lanes3)
    with pytest.raises(ValueError):
        ctrl.control_step(VehicleState(0, 1.75, 0, 27.5), [], 5)


def test_control_input_steering(geo):
    u = ControlInput(0.0, 0.1)
    assert u.steering(geo) == pytest.approx(0.1628853, abs=1e-6)
