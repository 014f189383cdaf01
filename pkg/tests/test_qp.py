from itertools import combinations

import numpy as np
import pytest
from scipy.optimize import linprog

from lanechange import (
    ConfigurationError,
    LinearInequality,
    QuadraticProgram,
    kkt_residual,
    regularized_cost,
    solve,
)
from lanechange import engine


def enumeration_oracle(P, q, A, b, tol=1e-8):
    """Exhaustive active-set enumeration: solve the KKT system for every
    candidate subset, keep feasible stationary points with nonnegative
    multipliers, return the best. Independent of the solver under test."""
    n = P.shape[0]
    m = A.shape[0]
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


def min_violation_oracle(A, b):
    """Smallest uniform violation bound, via an LP solved by scipy."""
    m, n = A.shape
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([A, -np.ones((m, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=b, bounds=[(None, None)] * n + [(0, None)],
                  method="highs")
    assert res.success
    return res.x[-1]


def random_instance(rng):
    n = 5
    M = rng.normal(size=(n, n))
    P = M @ M.T + 0.5 * np.eye(n)
    q = rng.normal(size=n)
    m = rng.integers(1, 11)
    A = rng.normal(size=(m, n))
    b = rng.normal(size=m) + 0.5
    return P, q, A, b


def as_qp(P, q, A, b):
    rows = [LinearInequality(A[i], float(b[i])) for i in range(A.shape[0])]
    return QuadraticProgram(P.shape[0], P, q, rows)


def test_unconstrained_identity_cost():
    sol = solve(QuadraticProgram(2, np.eye(2), np.zeros(2), []))
    assert sol.optimal
    assert np.allclose(sol.z, 0)
    assert sol.kkt_residual < 1e-12


def test_single_active_constraint_closed_form():
    qp = QuadraticProgram(1, np.array([[0.01]]), np.zeros(1),
                          [LinearInequality(np.array([-1.0]), -1.0)])
    sol = solve(qp)
    assert sol.optimal
    assert sol.z[0] == pytest.approx(1.0, abs=1e-12)
    assert sol.multipliers[0] == pytest.approx(0.01, abs=1e-12)
    assert kkt_residual(qp, sol) < 1e-12


def test_kkt_residual_detects_perturbation():
    qp = QuadraticProgram(1, np.array([[0.01]]), np.zeros(1),
                          [LinearInequality(np.array([-1.0]), -1.0)])
    sol = solve(qp)
    sol.z = sol.z + 1e-3
    assert kkt_residual(qp, sol) >= 1e-5 - 1e-12


def test_matches_enumeration_oracle_on_500_random_instances():
    rng = np.random.default_rng(42)
    n_feasible = 0
    n_infeasible = 0
    for _ in range(500):
        P, q, A, b = random_instance(rng)
        viol = min_violation_oracle(A, b)
        sol = solve(as_qp(P, q, A, b))
        if viol > 1e-7:
            assert sol.status == "infeasible"
            assert sol.phase1_violation > 1e-9
            n_infeasible += 1
        elif viol < 1e-12:
            assert sol.optimal, f"solver infeasible but oracle viol={viol}"
            z_ref = enumeration_oracle(P, q, A, b)
            assert z_ref is not None
            assert np.max(np.abs(sol.z - z_ref)) < 1e-6
            assert sol.kkt_residual < 1e-8
            n_feasible += 1
    assert n_feasible >= 200
    assert n_infeasible >= 10


def test_deterministic_bit_identical():
    rng = np.random.default_rng(11)
    P, q, A, b = random_instance(rng)
    s1 = solve(as_qp(P, q, A, b))
    s2 = solve(as_qp(P, q, A, b))
    assert np.array_equal(s1.z, s2.z)
    assert np.array_equal(s1.multipliers, s2.multipliers)
    assert s1.kkt_residual == s2.kkt_residual


def test_row_scaling_leaves_solution_unchanged():
    rng = np.random.default_rng(5)
    for _ in range(20):
        P, q, A, b = random_instance(rng)
        s1 = solve(as_qp(P, q, A, b))
        s2 = solve(as_qp(P, q, 2.0 * A, 2.0 * b))
        assert s1.status == s2.status
        if s1.optimal:
            assert np.max(np.abs(s1.z - s2.z)) < 1e-9


def test_infeasible_certificate():
    # a <= -1 and a >= 1 cannot hold; least uniform violation is 1
    qp = QuadraticProgram(1, np.eye(1), np.zeros(1), [
        LinearInequality(np.array([1.0]), -1.0),
        LinearInequality(np.array([-1.0]), -1.0),
    ])
    sol = solve(qp)
    assert sol.status == "infeasible"
    assert sol.phase1_violation == pytest.approx(1.0, abs=1e-9)
    assert sol.phase1_violation > 1e-9


def test_non_psd_cost_rejected():
    with pytest.raises(ConfigurationError):
        solve(QuadraticProgram(2, np.array([[1.0, 0.0], [0.0, -1.0]]),
                               np.zeros(2), []))


def test_singular_cost_rejected_until_regularized():
    H = np.array([[0.01, 0.0], [0.0, 0.0]])
    with pytest.raises(ConfigurationError):
        solve(QuadraticProgram(2, H, np.zeros(2), []))
    sol = solve(QuadraticProgram(2, regularized_cost(H), np.zeros(2), []))
    assert sol.optimal


def test_vacuous_rows_flagged_and_harmless():
    row = LinearInequality(np.zeros(2), 1.0, "box-ay+")
    assert row.is_vacuous
    qp = QuadraticProgram(2, np.eye(2), np.zeros(2),
                          [row, LinearInequality(np.array([-1.0, 0.0]), -1.0)])
    sol = solve(qp)
    assert sol.optimal
    assert sol.z[0] == pytest.approx(1.0, abs=1e-9)


def test_zero_row_negative_bound_is_infeasible():
    qp = QuadraticProgram(2, np.eye(2), np.zeros(2),
                          [LinearInequality(np.zeros(2), -0.5)])
    sol = solve(qp)
    assert sol.status == "infeasible"
    assert sol.phase1_violation == pytest.approx(0.5, abs=1e-9)


def test_warm_start_agrees_with_cold():
    rng = np.random.default_rng(9)
    for _ in range(50):
        P, q, A, b = random_instance(rng)
        cold = solve(as_qp(P, q, A, b))
        if not cold.optimal:
            continue
        warm = solve(as_qp(P, q, A, b), start=cold.z)
        assert np.max(np.abs(cold.z - warm.z)) < 1e-9


def test_iteration_count_stays_small():
    rng = np.random.default_rng(21)
    for _ in range(100):
        P, q, A, b = random_instance(rng)
        z, lam, status, viol, iters = engine.qp_solve(P, q, A, b,
                                                      np.zeros(5), False)
        assert iters <= max(2 ** A.shape[0], 8)
        assert iters < 30


def test_lifted_rows():
    row = LinearInequality(np.array([1.0, -2.0]), 3.0, "t")
    lifted = row.lifted(5)
    assert lifted.coeffs.shape == (5,)
    assert np.allclose(lifted.coeffs, [1, -2, 0, 0, 0])
    assert lifted.bound == 3.0 and lifted.tag == "t"
    with pytest.raises(ConfigurationError):
        row.lifted(1)


def test_dimension_mismatch_rejected():
    with pytest.raises(ConfigurationError):
        QuadraticProgram(3, np.eye(3), np.zeros(3),
                         [LinearInequality(np.ones(2), 0.0)])
