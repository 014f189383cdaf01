"""Dense convex quadratic programming for the small per-step control problems.

Primal active-set method behind a certified interface: optimal solutions come
back with multipliers and a KKT residual, infeasible problems with the
phase-1 violation bound. Deterministic: identical instances produce
bit-identical solutions (ties in constraint selection break toward the lowest
row index, and no threaded BLAS is involved).
"""

from dataclasses import dataclass, field

import numpy as np

from . import engine

FEASIBILITY_TOL = engine.FEAS_TOL
STATIONARITY_TOL = 1e-8


class ConfigurationError(ValueError):
    """The problem data is malformed (not a statement about feasibility)."""


class SolverError(RuntimeError):
    """The active-set iteration failed to converge (should not happen)."""


@dataclass
class LinearInequality:
    """One row `coeffs . z <= bound` of the decision-vector polytope."""

    coeffs: np.ndarray
    bound: float
    tag: str = ""

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 1:
            raise ConfigurationError("coeffs must be a vector")

    @property
    def is_vacuous(self) -> bool:
        """All-zero coefficients with a nonnegative bound: satisfiable by
        anything, kept only for bookkeeping."""
        return bool(np.all(self.coeffs == 0.0) and self.bound >= 0.0)

    def lifted(self, dim: int) -> "LinearInequality":
        """Zero-pad the row into a higher-dimensional decision space."""
        if dim < self.coeffs.size:
            raise ConfigurationError("cannot lift into a smaller space")
        coeffs = np.zeros(dim)
        coeffs[: self.coeffs.size] = self.coeffs
        return LinearInequality(coeffs, self.bound, self.tag)


@dataclass
class QuadraticProgram:
    """min 0.5 z'Pz + q'z subject to the inequality rows."""

    dim: int
    cost_matrix: np.ndarray
    cost_vector: np.ndarray
    inequalities: list[LinearInequality] = field(default_factory=list)

    def __post_init__(self):
        self.cost_matrix = np.asarray(self.cost_matrix, dtype=float)
        self.cost_vector = np.asarray(self.cost_vector, dtype=float)
        if self.cost_matrix.shape != (self.dim, self.dim):
            raise ConfigurationError("cost matrix shape mismatch")
        if self.cost_vector.shape != (self.dim,):
            raise ConfigurationError("cost vector shape mismatch")
        for row in self.inequalities:
            if row.coeffs.size != self.dim:
                raise ConfigurationError(
                    f"row '{row.tag}' has {row.coeffs.size} coefficients, "
                    f"expected {self.dim}")

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        m = len(self.inequalities)
        A = np.zeros((m, self.dim))
        b = np.zeros(m)
        for i, row in enumerate(self.inequalities):
            A[i] = row.coeffs
            b[i] = row.bound
        return A, b


@dataclass
class QpSolution:
    z: np.ndarray
    status: str  # "optimal" | "infeasible"
    multipliers: np.ndarray
    kkt_residual: float
    phase1_violation: float = 0.0  # smallest uniform violation bound found

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def regularized_cost(blocks: np.ndarray, ridge: float = 1e-6) -> np.ndarray:
    """Add a ridge so a merely-PSD cost becomes strictly convex."""
    P = np.asarray(blocks, dtype=float).copy()
    P += ridge * np.eye(P.shape[0])
    return P


def solve(qp: QuadraticProgram, start: np.ndarray | None = None) -> QpSolution:
    """Globally minimize the QP or certify infeasibility.

    The cost must be symmetric positive definite (regularize first if it is
    only PSD); anything else is a configuration error, not infeasibility.
    A feasible `start` skips the phase-1 subproblem.
    """
    P = qp.cost_matrix
    if not engine.cholesky_ok(P):
        raise ConfigurationError(
            "cost matrix must be symmetric positive definite "
            "(apply regularized_cost to a singular PSD cost)")
    A, b = qp.stacked()
    if start is not None:
        hint = np.asarray(start, dtype=float)
        if hint.shape != (qp.dim,):
            raise ConfigurationError("start point has the wrong dimension")
        use_hint = True
    else:
        hint = np.zeros(qp.dim)
        use_hint = False
    z, lam, status, viol, _ = engine.qp_solve(P, qp.cost_vector, A, b, hint,
                                              use_hint)
    if status == -1:
        raise SolverError("active-set iteration did not converge")
    if status == 0:
        return QpSolution(z=z, status="infeasible", multipliers=lam,
                          kkt_residual=np.nan, phase1_violation=float(viol))
    res = engine.kkt_residual_arrays(P, qp.cost_vector, A, b, z, lam)
    return QpSolution(z=z, status="optimal", multipliers=lam,
                      kkt_residual=float(res), phase1_violation=float(viol))


def kkt_residual(qp: QuadraticProgram, solution: QpSolution) -> float:
    """Recompute the certificate: max of stationarity, primal violation,
    dual negativity and complementarity."""
    if not solution.optimal:
        raise ValueError("KKT residual is defined for optimal solutions")
    A, b = qp.stacked()
    return float(engine.kkt_residual_arrays(qp.cost_matrix, qp.cost_vector,
                                            A, b, solution.z,
                                            solution.multipliers))
