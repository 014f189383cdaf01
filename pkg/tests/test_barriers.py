import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lanechange import (
    ControllerGains,
    SurroundingVehicle,
    VehicleGeometry,
    VehicleState,
    VehiclesOfInterest,
    barrier_value,
    cbf_acc,
    cbf_back,
    cbf_lane_change,
    clf_rows,
    cost_matrix,
    gap_measures,
    switch_safety_check,
)
from lanechange.oracles import barrier_rate_error, clf_rate_errors


def veh(x, y, v, accel=0.0, vy=0.0, vid=1):
    return SurroundingVehicle(id=vid, x=x, y=y, v=v, accel=accel,
                              lateral_speed=vy)


# --- tracking rows -----------------------------------------------------------


def test_clf_rows_vanish_at_equilibrium(geo, gains):
    rows, values = clf_rows(VehicleState(0, 1.75, 0, 27.5), gains, 1.75, geo)
    assert values == (0.0, 0.0, 0.0)
    for row in rows:
        assert np.allclose(row.coeffs[:2], 0)
        assert row.bound == 0.0


def test_clf_speed_row_substitution(geo):
    # oracle: 2(v - vd) a <= -alpha_v (v - vd)^2 + dv at v=27.5, vd=25
    gains = ControllerGains(v_d=25.0, v_l=33.33)
    rows, values = clf_rows(VehicleState(0, 1.75, 0, 27.5), gains, 1.75, geo)
    speed = rows[0]
    assert speed.tag == "clf-v"
    assert speed.coeffs[0] == pytest.approx(5.0, abs=1e-12)
    assert speed.coeffs[2] == -1.0
    assert speed.bound == pytest.approx(-1.7 * 6.25, abs=1e-12)
    assert values[0] == pytest.approx(6.25)


def test_clf_rates_match_finite_differences(geo, gains):
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(1000):
        s = VehicleState(rng.uniform(-10, 10), rng.uniform(0, 10),
                         rng.uniform(-0.5, 0.5), rng.uniform(0.1, 40))
        u = np.array([rng.uniform(-3, 3), rng.uniform(-0.26, 0.26)])
        y_t = rng.uniform(0, 10)
        rows, values = clf_rows(s, gains, y_t, geo)
        errs = clf_rate_errors(rows, values, s, u, gains, y_t, geo)
        worst = max(worst, float(np.max(errs)))
    assert worst < 1e-6


# --- cruise barrier ----------------------------------------------------------


def test_acc_barrier_initial_gap_value(geo, gains):
    # oracle: direct substitution with the shared body lengths
    ego = VehicleState(0, 1.75, 0, 27.5)
    lead = veh(55.0, 1.75, 22.0)
    ev = cbf_acc(ego, lead, gains, geo)
    dx = 55.0 - (2.15 + 2.77)
    expected = dx - 1.5 * 27.5 - (22.0 - 27.5) ** 2 / (2 * gains.a_l)
    assert ev.h == pytest.approx(expected, abs=1e-12)
    assert ev.h == pytest.approx(3.691, abs=1e-3)
    assert ev.branch == "brake"
    assert gap_measures(ego, lead, geo).dx == pytest.approx(50.08)


def test_acc_barrier_requires_leader_ahead(geo, gains):
    with pytest.raises(ValueError):
        cbf_acc(VehicleState(0, 0, 0, 20), veh(-5, 0, 20), gains, geo)
    with pytest.raises(ValueError):
        cbf_acc(VehicleState(0, 0, 0, 20), None, gains, geo)


def test_acc_barrier_continuous_at_branch_boundary(geo, gains):
    ego_v = 25.0
    lead = veh(40.0, 1.75, ego_v)
    lo = cbf_acc(VehicleState(0, 1.75, 0, np.nextafter(ego_v, -np.inf)),
                 lead, gains, geo)
    hi = cbf_acc(VehicleState(0, 1.75, 0, np.nextafter(ego_v, np.inf)),
                 lead, gains, geo)
    assert lo.branch != hi.branch
    assert abs(lo.h - hi.h) < 1e-12


# --- lane-change barriers ----------------------------------------------------


def test_lane_change_no_vehicles_no_rows(geo, gains):
    evals = cbf_lane_change(VehicleState(0, 1.75, 0, 27.5),
                            VehiclesOfInterest(), gains, geo)
    assert evals == []


def test_lane_change_rear_gap_value(geo, gains):
    # rear vehicle behind in the target lane, slower than ego
    ego = VehicleState(0, 1.75, 0, 27.5)
    rear = veh(-15.0, 5.25, 19.0)
    evals = cbf_lane_change(ego, VehiclesOfInterest(bt=rear), gains, geo)
    assert len(evals) == 1
    ev = evals[0]
    assert ev.kind == "bt" and ev.branch == "plain"
    assert ev.h == pytest.approx((15.0 - 4.92) - 1.5 * 19.0, abs=1e-12)
    assert ev.h == pytest.approx(-18.42, abs=1e-12)


def test_lane_change_front_target_value(geo, gains):
    ego = VehicleState(0, 1.75, 0, 27.5)
    front = veh(30.0, 5.25, 33.0)
    evals = cbf_lane_change(ego, VehiclesOfInterest(ft=front), gains, geo)
    ev = evals[0]
    assert ev.kind == "ft" and ev.branch == "plain"  # ego slower
    assert ev.h == pytest.approx((30.0 - 4.92) - 1.5 * 27.5, abs=1e-12)


def test_lane_change_drop_rule(geo, gains):
    ego = VehicleState(0, 5.25, 0, 27.5)
    voi = VehiclesOfInterest(fc=veh(50, 1.75, 22, vid=1),
                             ft=veh(40, 5.25, 30, vid=2),
                             bt=veh(-30, 5.25, 20, vid=3))
    full = cbf_lane_change(ego, voi, gains, geo, ego_fully_in_target=True)
    assert [ev.kind for ev in full] == ["ft"]
    partial = cbf_lane_change(ego, voi, gains, geo, ego_fully_in_target=False)
    assert [ev.kind for ev in partial] == ["fc", "ft", "bt"]


def test_rear_barrier_continuous_at_branch_boundary(geo, gains):
    ego = VehicleState(0, 1.75, 0, 24.0)
    lo = cbf_lane_change(
        ego, VehiclesOfInterest(bt=veh(-20, 5.25, np.nextafter(24.0, -np.inf))),
        gains, geo)[0]
    hi = cbf_lane_change(
        ego, VehiclesOfInterest(bt=veh(-20, 5.25, np.nextafter(24.0, np.inf))),
        gains, geo)[0]
    assert lo.branch != hi.branch
    assert abs(lo.h - hi.h) < 1e-12


# --- abort barriers ----------------------------------------------------------


def test_return_front_branches_coincide_at_equal_speed(geo, gains):
    ego_v = 27.5
    ego = VehicleState(0, 1.75, 0, ego_v)
    lo = cbf_back(ego, VehiclesOfInterest(
        ft=veh(20, 5.25, np.nextafter(ego_v, np.inf))), gains, geo)[0]
    hi = cbf_back(ego, VehiclesOfInterest(
        ft=veh(20, 5.25, np.nextafter(ego_v, -np.inf))), gains, geo)[0]
    assert abs(lo.h - hi.h) < 1e-12


def test_return_rear_lateral_floor_value(geo, gains):
    # rear vehicle overlapping longitudinally: lateral branch with floor eps
    ego = VehicleState(0, 1.75, 0, 27.5)
    rear = veh(1.0, 5.25, 27.0)
    evals = cbf_back(ego, VehiclesOfInterest(bt=rear), gains, geo)
    ev = evals[0]
    assert ev.branch == "lateral"
    assert ev.h == pytest.approx(3.5 - 1.86 - 0.5, abs=1e-12)
    assert ev.h == pytest.approx(1.14, abs=1e-12)


def test_return_front_lateral_floor_is_smaller(geo, gains):
    ego = VehicleState(0, 1.75, 0, 27.5)
    front = veh(1.0, 5.25, 27.0)
    ev = cbf_back(ego, VehiclesOfInterest(ft=front), gains, geo)[0]
    assert ev.branch == "lateral"
    assert ev.h == pytest.approx(3.5 - 1.86 - 0.05, abs=1e-12)


def test_barrier_value_matches_evaluations(geo, gains):
    ego = VehicleState(0, 1.75, 0, 27.5)
    lead = veh(55, 1.75, 22)
    assert barrier_value("fc", ego, lead, gains, geo) == pytest.approx(
        cbf_acc(ego, lead, gains, geo).h)
    rear = veh(-15, 5.25, 19)
    assert barrier_value("bt", ego, rear, gains, geo) == pytest.approx(-18.42)
    side = veh(1.0, 5.25, 27.0)
    assert barrier_value("bt", ego, side, gains, geo,
                         returning=True) == pytest.approx(1.14)


# --- derivative consistency (finite-difference oracle) -----------------------


def _sample_cases(rng, n):
    """States hitting every piecewise branch with margin so the differencing
    window cannot flip branches."""
    geo = VehicleGeometry()
    gains = ControllerGains(v_d=27.5, v_l=33.33)
    cases = []
    for _ in range(n):
        v = rng.uniform(5, 35)
        psi = rng.uniform(-0.3, 0.3)
        ego = VehicleState(rng.uniform(-5, 5), rng.uniform(1, 9), psi, v)
        u = np.array([rng.uniform(-2.9, 2.9), rng.uniform(-0.2, 0.2)])
        dv = rng.uniform(0.5, 8)  # strict speed separation
        far = rng.uniform(8, 60)
        near = rng.uniform(-3.5, 3.0)  # longitudinal overlap
        ahead = ego.x + far
        behind = ego.x - far
        ylat = ego.y + rng.choice([-1, 1]) * rng.uniform(2.2, 4.0)
        vy = rng.uniform(-1.2, 1.2)
        accel = rng.uniform(-2.5, 2.5)

        def fc_eval(e, o, gains=gains, geo=geo):
            return cbf_acc(e, o, gains, geo)

        def ft_eval(e, o, gains=gains, geo=geo):
            return cbf_lane_change(e, VehiclesOfInterest(ft=o), gains, geo)[0]

        def bt_eval(e, o, gains=gains, geo=geo):
            return cbf_lane_change(e, VehiclesOfInterest(bt=o), gains, geo)[0]

        def rft_eval(e, o, gains=gains, geo=geo):
            return cbf_back(e, VehiclesOfInterest(ft=o), gains, geo)[0]

        def rbt_eval(e, o, gains=gains, geo=geo):
            return cbf_back(e, VehiclesOfInterest(bt=o), gains, geo)[0]

        cases += [
            ("front-brake", fc_eval, ego,
             veh(ahead, ego.y, max(v - dv, 0.1), accel)),
            ("front-plain", fc_eval, ego, veh(ahead, ego.y, v + dv, accel)),
            ("front-brake", ft_eval, ego,
             veh(ahead, ylat, max(v - dv, 0.1), accel)),
            ("rear-brake", bt_eval, ego, veh(behind, ylat, v + dv, accel)),
            ("rear-plain", bt_eval, ego,
             veh(behind, ylat, max(v - dv, 0.1), accel)),
            ("return-front-brake", rft_eval, ego,
             veh(ahead, ylat, max(v - dv, 0.1), accel)),
            ("return-front-plain", rft_eval, ego,
             veh(ahead, ylat, v + dv, accel)),
            ("return-front-lateral", rft_eval, ego,
             veh(ego.x + near, ylat, v + dv, accel, vy)),
            ("return-rear-brake", rbt_eval, ego,
             veh(behind, ylat, v + dv, accel)),
            ("return-rear-plain", rbt_eval, ego,
             veh(behind, ylat, max(v - dv, 0.1), accel)),
            ("return-rear-lateral", rbt_eval, ego,
             veh(ego.x + near, ylat, v + dv, accel, vy)),
        ]
    return geo, cases


def test_barrier_rates_match_finite_differences(geo):
    rng = np.random.default_rng(99)
    geo, cases = _sample_cases(rng, 40)
    seen = set()
    worst = 0.0
    for name, eval_fn, ego, other in cases:
        err = barrier_rate_error(eval_fn, ego, other, np.array([1.0, 0.05]),
                                 geo)
        worst = max(worst, err)
        seen.add(name)
    assert worst < 1e-5
    assert len(seen) == 10  # every branch of every barrier family


# --- assembled rows and switch condition -------------------------------------


def test_barrier_row_encodes_decay_condition(geo, gains):
    rng = np.random.default_rng(1)
    ego = VehicleState(0, 1.75, 0.05, 27.5)
    ev = cbf_acc(ego, veh(40, 1.75, 22), gains, geo)
    row = ev.row(gains.gamma("fc"))
    for _ in range(50):
        z = rng.normal(size=5)
        lhs_condition = (ev.dt_term + ev.lf_term + ev.lg_row @ z[:2]
                         + gains.gamma_fc * ev.h)
        assert (row.coeffs @ z <= row.bound) == (lhs_condition >= -1e-15)


def test_switch_safety_check(geo, gains):
    assert switch_safety_check([]) is True
    ego = VehicleState(0, 1.75, 0, 27.5)
    good = cbf_acc(ego, veh(55, 1.75, 22), gains, geo)
    assert switch_safety_check([good]) is True
    bad = cbf_lane_change(ego, VehiclesOfInterest(bt=veh(-15, 5.25, 19)),
                          gains, geo)
    assert switch_safety_check(bad) is False


def test_gain_validation():
    with pytest.raises(ValueError):
        ControllerGains(v_d=27.5, v_l=33.33, gamma_fc=-1.0)
    with pytest.raises(ValueError):
        ControllerGains(v_d=27.5, v_l=33.33, epsilon=0.05)
    with pytest.raises(ValueError):
        ControllerGains(v_d=27.5, v_l=33.33, p_y=0.0)


def test_cost_matrix_structure(gains):
    P = cost_matrix(gains)
    assert P[0, 0] == pytest.approx(0.01 + 1e-6)
    assert P[1, 1] == pytest.approx(1e-6)
    assert P[2, 2] == pytest.approx(0.2 + 1e-6)
    assert P[3, 3] == pytest.approx(30.0 + 1e-6)
    assert P[4, 4] == pytest.approx(800.0 + 1e-6)
    assert np.linalg.eigvalsh(P)[0] >= 1e-6 - 1e-15


@given(vk=st.floats(1.0, 39.0), gap=st.floats(5.0, 120.0))
@settings(max_examples=150, deadline=None)
def test_front_barrier_branch_continuity_everywhere(vk, gap):
    geo = VehicleGeometry()
    gains = ControllerGains(v_d=27.5, v_l=33.33)
    lead = veh(gap + 4.92, 1.75, vk)
    lo = cbf_acc(VehicleState(0, 1.75, 0, np.nextafter(vk, -np.inf)),
                 lead, gains, geo)
    hi = cbf_acc(VehicleState(0, 1.75, 0, np.nextafter(vk, np.inf)),
                 lead, gains, geo)
    assert abs(lo.h - hi.h) < 1e-12
