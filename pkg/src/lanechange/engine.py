"""Compiled numeric core: QP solver, constraint assembly, FSM step, traffic update.

Everything here is plain array math so it can be jit-compiled (numba) and run
the 100 Hz control loop fast enough for large Monte-Carlo batches on one core.
The public modules (dynamics, qp, barriers, controller, sim) wrap these kernels
with dataclass APIs; this module is the single source of truth for the math.

Set LANECHANGE_JIT=0 to run the kernels interpreted (slow, easier to debug).
"""

import os

import numpy as np

if os.environ.get("LANECHANGE_JIT", "1") == "0":

    def njit(*args, **kwargs):  # no-op decorator, keeps kernels plain Python
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap

else:
    from numba import njit


# ---------------------------------------------------------------------------
# Layout constants
# ---------------------------------------------------------------------------

DIM = 5  # decision vector (a, beta, delta_v, delta_y, delta_psi)
MAXR = 14  # 3 CLF + 3 CBF + 8 input rows

# FSM states
ACC, L, R, BL, BR = 0, 1, 2, 3, 4

# vehicle-of-interest kinds
FC, FT, BT = 0, 1, 2

# barrier branches
BR_NONE, BR_PLAIN, BR_BRAKE, BR_LATERAL = 0, 1, 2, 3

# constraint-set families (which rulebook built the row)
FAM_CRUISE, FAM_CHANGE, FAM_RETURN = 0, 1, 2

# row tags
TAG_CLF_V, TAG_CLF_Y, TAG_CLF_PSI = 0, 1, 2
TAG_CBF_FC, TAG_CBF_FT, TAG_CBF_BT = 3, 4, 5
TAG_BOX_A_HI, TAG_BOX_A_LO = 6, 7
TAG_BOX_B_HI, TAG_BOX_B_LO = 8, 9
TAG_BOX_RATE_HI, TAG_BOX_RATE_LO = 10, 11
TAG_BOX_AY_HI, TAG_BOX_AY_LO = 12, 13

TAG_NAMES = (
    "clf-v", "clf-y", "clf-psi",
    "cbf-fc", "cbf-ft", "cbf-bt",
    "box-a+", "box-a-", "box-beta+", "box-beta-",
    "box-beta-rate+", "box-beta-rate-", "box-ay+", "box-ay-",
)

# parameter vector indices
P_EPS, P_ALPHA_V, P_ALPHA_Y, P_ALPHA_PSI = 0, 1, 2, 3
P_GAMMA_FC, P_GAMMA_FT, P_GAMMA_BT = 4, 5, 6
P_PEN_V, P_PEN_Y, P_PEN_PSI = 7, 8, 9
P_AL, P_VD, P_VL = 10, 11, 12
P_BETA_MAX, P_BETA_RATE, P_A_MAX, P_AY_MAX = 13, 14, 15, 16
P_LF, P_LR, P_LFC, P_LRC, P_WLC, P_WRC = 17, 18, 19, 20, 21, 22
P_DT = 23
NPARAMS = 24

# vehicle array columns
V_X, V_Y, V_V, V_A, V_VY, V_LANE, V_ID = 0, 1, 2, 3, 4, 5, 6
NVCOLS = 7

# controller integer state
CI_STATE, CI_CUR, CI_TGT, CI_DONE, CI_SIGN = 0, 1, 2, 3, 4
CI_SIG = 5  # 3 signature slots of (kind, vehicle id, family)
CI_LEN = 5 + 9

# controller float state
CF_UA, CF_UB, CF_DWELL = 0, 1, 2
CF_LEN = 3

# diagnostics row
D_P, D_E, D_STATE, D_QP = 0, 1, 2, 3
D_HFC, D_HFT, D_HBT = 4, 5, 6
D_BRFC, D_BRFT, D_BRBT = 7, 8, 9
D_DV, D_DY, D_DPSI = 10, 11, 12
D_KKT, D_SWITCH, D_FALLBACK, D_PROBE = 13, 14, 15, 16
D_NROWS, D_ITERS, D_VIOL = 17, 18, 19
D_CMD, D_ECERT = 20, 21
DIAG_LEN = 22

# probe outcomes
PROBE_NONE, PROBE_GATED, PROBE_OK, PROBE_INFEASIBLE = -1, 0, 1, 2

# solver tolerances
FEAS_TOL = 1e-9
DUAL_TOL = 1e-10
STEP_TOL = 1e-11
SAFETY_TOL = 1e-6  # discrete-time allowance on barrier values

# behavior types
BEH_CONST, BEH_RANDOM, BEH_SCRIPTED = 0, 1, 2

# behavior float columns
BF_VMIN, BF_VMAX, BF_PERIOD = 0, 1, 2
BF_TSTART, BF_DURATION, BF_YFROM, BF_YTO = 3, 4, 5, 6
BF_CLEARANCE, BF_T0 = 7, 8
BF_LEN = 9

# behavior int columns
BI_TYPE, BI_STARTED = 0, 1
BI_LEN = 2

GAP_MIN = 0.1  # enforced body gap between traffic vehicles in strict mode


# ---------------------------------------------------------------------------
# Dense linear algebra (deterministic, no BLAS)
# ---------------------------------------------------------------------------


@njit(cache=True)
def solve_linear(M, rhs):
    """Gaussian elimination with partial pivoting. Returns (x, ok)."""
    n = M.shape[0]
    a = M.copy()
    x = rhs.copy()
    for col in range(n):
        piv = col
        best = abs(a[col, col])
        for r in range(col + 1, n):
            m = abs(a[r, col])
            if m > best:
                best = m
                piv = r
        if best < 1e-14:
            return x, False
        if piv != col:
            for cc in range(n):
                tmp = a[col, cc]
                a[col, cc] = a[piv, cc]
                a[piv, cc] = tmp
            tmp = x[col]
            x[col] = x[piv]
            x[piv] = tmp
        inv = 1.0 / a[col, col]
        for r in range(col + 1, n):
            f = a[r, col] * inv
            if f != 0.0:
                for cc in range(col, n):
                    a[r, cc] -= f * a[col, cc]
                x[r] -= f * x[col]
    for col in range(n - 1, -1, -1):
        s = x[col]
        for cc in range(col + 1, n):
            s -= a[col, cc] * x[cc]
        x[col] = s / a[col, col]
    return x, True


@njit(cache=True)
def cholesky_ok(P):
    """True when P is symmetric positive definite (within fp tolerance)."""
    n = P.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if abs(P[i, j] - P[j, i]) > 1e-12 * (1.0 + abs(P[i, j])):
                return False
    a = P.copy()
    for k in range(n):
        s = a[k, k]
        for j in range(k):
            s -= a[k, j] * a[k, j]
        if s <= 0.0:
            return False
        d = np.sqrt(s)
        a[k, k] = d
        for i in range(k + 1, n):
            s = a[i, k]
            for j in range(k):
                s -= a[i, j] * a[k, j]
            a[i, k] = s / d
    return True


# ---------------------------------------------------------------------------
# QP solver: phase-1 feasibility LP + primal active-set phase 2
# ---------------------------------------------------------------------------


@njit(cache=True)
def _phase1(A, b, x_init):
    """Minimize the uniform violation bound s subject to A x - s <= b, s >= 0.

    Projected-gradient active set with Bland's rule (lowest index in and out),
    which cannot cycle. Returns (x, s_opt, ok).
    """
    m, n = A.shape
    nv = n + 1
    mr = m + 1

    w = np.zeros(nv)
    for j in range(n):
        w[j] = x_init[j]
    smax = 0.0
    for i in range(m):
        r = -b[i]
        for j in range(n):
            r += A[i, j] * w[j]
        if r > smax:
            smax = r
    w[n] = smax

    # rows: (A_i, -1) w <= b_i, plus -s <= 0
    wset = np.empty(mr, dtype=np.int64)
    nw = 0
    cost_dir = np.zeros(nv)
    cost_dir[n] = 1.0

    max_iter = 60 * mr + 60
    for _ in range(max_iter):
        # p = -(I - A_W^T (A_W A_W^T)^-1 A_W) c
        if nw == 0:
            p = -cost_dir.copy()
        else:
            G = np.empty((nw, nw))
            rhs = np.empty(nw)
            for i in range(nw):
                ri = wset[i]
                # row dot cost_dir: only the s column matters (c = e_s)
                rhs[i] = -1.0  # (A1_ri) . c  == -1 for every row
                for jj in range(nw):
                    rj = wset[jj]
                    s = 1.0  # s-column product (-1)(-1)
                    if ri < m and rj < m:
                        for k in range(n):
                            s += A[ri, k] * A[rj, k]
                    G[i, jj] = s
            mu, ok = solve_linear(G, rhs)
            if not ok:
                G2 = G.copy()
                for i in range(nw):
                    G2[i, i] += 1e-12
                mu, ok = solve_linear(G2, rhs)
                if not ok:
                    return w[:n].copy(), w[n], False
            p = -cost_dir.copy()
            for i in range(nw):
                ri = wset[i]
                if ri < m:
                    for k in range(n):
                        p[k] += A[ri, k] * mu[i]
                p[n] += -1.0 * mu[i]

        pn = 0.0
        for j in range(nv):
            if abs(p[j]) > pn:
                pn = abs(p[j])

        if pn <= STEP_TOL:
            # stationarity: c + A_W^T lam = 0 -> lam = -mu
            drop = -1
            for i in range(nw):
                lam_i = -mu[i] if nw > 0 else 0.0
                if lam_i < -DUAL_TOL:
                    drop = i  # Bland: first (lowest position, rows kept sorted)
                    break
            if drop < 0:
                return w[:n].copy(), w[n], True
            for i in range(drop, nw - 1):
                wset[i] = wset[i + 1]
            nw -= 1
            continue

        # ratio test over rows not in the working set (ascending index)
        alpha = 1e300
        blk = -1
        for i in range(mr):
            inw = False
            for jj in range(nw):
                if wset[jj] == i:
                    inw = True
                    break
            if inw:
                continue
            if i < m:
                d = -p[n]
                resid = b[i] - w[n] * (-1.0)
                for k in range(n):
                    d += A[i, k] * p[k]
                    resid -= A[i, k] * w[k]
            else:
                d = -p[n]
                resid = w[n]
            if d > 1e-13:
                r = resid / d
                if r < 0.0:
                    r = 0.0
                if r < alpha - 1e-15:
                    alpha = r
                    blk = i
        if blk < 0:
            # cost is bounded below by 0, so a blocking row must exist
            return w[:n].copy(), w[n], False
        for j in range(nv):
            w[j] += alpha * p[j]
        # insert blk keeping wset sorted (Bland needs a fixed order)
        pos = nw
        for i in range(nw):
            if wset[i] > blk:
                pos = i
                break
        for i in range(nw, pos, -1):
            wset[i] = wset[i - 1]
        wset[pos] = blk
        nw += 1
    return w[:n].copy(), w[n], False


@njit(cache=True)
def _active_set(P, q, A, b, x0):
    """Primal active-set method for strictly convex QP from a feasible point.

    min 0.5 x'Px + q'x  s.t.  A x <= b.
    Ties in row selection break toward the lowest row index.
    Returns (x, lam, ok, iters).
    """
    m, n = A.shape
    x = x0.copy()
    lam_full = np.zeros(m)
    wset = np.empty(m if m > 0 else 1, dtype=np.int64)
    nw = 0

    cap = 200 + 20 * (m + 1)
    if m <= 16 and (1 << (m + 2)) > cap:
        cap = 1 << (m + 2)
    it = 0
    while it < cap:
        it += 1
        g = q.copy()
        for i in range(n):
            for j in range(n):
                g[i] += P[i, j] * x[j]

        nk = n + nw
        K = np.zeros((nk, nk))
        rhs = np.zeros(nk)
        for i in range(n):
            for j in range(n):
                K[i, j] = P[i, j]
            rhs[i] = -g[i]
        for i in range(nw):
            ri = wset[i]
            for j in range(n):
                K[n + i, j] = A[ri, j]
                K[j, n + i] = A[ri, j]
        sol, ok = solve_linear(K, rhs)
        if not ok:
            K2 = K.copy()
            for i in range(nk):
                K2[i, i] += 1e-12
            sol, ok = solve_linear(K2, rhs)
            if not ok:
                return x, lam_full, False, it

        pn = 0.0
        xn = 1.0
        for j in range(n):
            if abs(sol[j]) > pn:
                pn = abs(sol[j])
            if abs(x[j]) > xn:
                xn = abs(x[j])

        at_minimizer = pn <= STEP_TOL * xn
        if not at_minimizer:
            alpha = 1.0
            blk = -1
            for i in range(m):
                inw = False
                for jj in range(nw):
                    if wset[jj] == i:
                        inw = True
                        break
                if inw:
                    continue
                d = 0.0
                resid = b[i]
                for k in range(n):
                    d += A[i, k] * sol[k]
                    resid -= A[i, k] * x[k]
                if d > 1e-13:
                    r = resid / d
                    if r < 0.0:
                        r = 0.0
                    if r < alpha - 1e-15:
                        alpha = r
                        blk = i
            for j in range(n):
                x[j] += alpha * sol[j]
            if blk >= 0:
                pos = nw
                for i in range(nw):
                    if wset[i] > blk:
                        pos = i
                        break
                for i in range(nw, pos, -1):
                    wset[i] = wset[i - 1]
                wset[pos] = blk
                nw += 1
                continue
            # unblocked full step: x is now the minimizer over the working
            # set and the multipliers of this KKT solve certify it

        drop = -1
        worst = -DUAL_TOL
        for i in range(nw):
            if sol[n + i] < worst:
                worst = sol[n + i]
                drop = i
        if drop < 0:
            # one iterative-refinement pass on the optimality system
            lam_w = sol[n:nk].copy()
            resid = np.zeros(nk)
            for i in range(n):
                s = q[i]
                for j in range(n):
                    s += P[i, j] * x[j]
                for w in range(nw):
                    s += A[wset[w], i] * lam_w[w]
                resid[i] = -s
            for w in range(nw):
                s = -b[wset[w]]
                for j in range(n):
                    s += A[wset[w], j] * x[j]
                resid[n + w] = -s
            corr, ok = solve_linear(K, resid)
            if ok:
                for j in range(n):
                    x[j] += corr[j]
                for w in range(nw):
                    lam_w[w] += corr[n + w]
            for j in range(m):
                lam_full[j] = 0.0
            for i in range(nw):
                v = lam_w[i]
                if v < 0.0:
                    v = 0.0
                lam_full[wset[i]] = v
            return x, lam_full, True, it
        for i in range(drop, nw - 1):
            wset[i] = wset[i + 1]
        nw -= 1
    return x, lam_full, False, it


@njit(cache=True)
def kkt_residual_arrays(P, q, A, b, z, lam):
    """Max of stationarity, primal violation, dual negativity, complementarity."""
    m, n = A.shape
    res = 0.0
    for i in range(n):
        s = q[i]
        for j in range(n):
            s += P[i, j] * z[j]
        for r in range(m):
            s += A[r, i] * lam[r]
        if abs(s) > res:
            res = abs(s)
    for r in range(m):
        viol = -b[r]
        for j in range(n):
            viol += A[r, j] * z[j]
        if viol > res:
            res = viol
        if -lam[r] > res:
            res = -lam[r]
        c = abs(lam[r] * viol)
        if c > res:
            res = c
    return res


@njit(cache=True)
def qp_solve(P, q, A, b, hint, use_hint):
    """Solve min 0.5 x'Px + q'x s.t. A x <= b for strictly convex P.

    Returns (z, lam, status, phase1_violation, iters); status 1 = optimal,
    0 = infeasible (violation > FEAS_TOL), -1 = numerical failure.
    """
    m, n = A.shape
    x0 = np.zeros(n)
    have_start = False
    if use_hint:
        worst = 0.0
        for i in range(m):
            r = -b[i]
            for j in range(n):
                r += A[i, j] * hint[j]
            if r > worst:
                worst = r
        if worst <= 1e-10:
            x0 = hint.copy()
            have_start = True
    viol = 0.0
    if not have_start:
        x0, viol, ok = _phase1(A, b, np.zeros(n))
        if not ok:
            return x0, np.zeros(m), -1, viol, 0
        if viol > FEAS_TOL:
            return x0, np.zeros(m), 0, viol, 0
    z, lam, ok, iters = _active_set(P, q, A, b, x0)
    if not ok:
        return z, lam, -1, viol, iters
    return z, lam, 1, viol, iters


# ---------------------------------------------------------------------------
# Vehicle dynamics
# ---------------------------------------------------------------------------


@njit(cache=True)
def dyn_derivative(x, y, psi, v, a, beta, l_r):
    """Nonlinear kinematic bicycle: returns (xdot, ydot, psidot, vdot)."""
    return (
        v * np.cos(psi + beta),
        v * np.sin(psi + beta),
        (v / l_r) * np.sin(beta),
        a,
    )


@njit(cache=True)
def dyn_rk4(x, y, psi, v, a, beta, dt, l_r):
    """Classical RK4 step with the input held constant; speed floored at 0."""
    k1 = dyn_derivative(x, y, psi, v, a, beta, l_r)
    k2 = dyn_derivative(
        x + 0.5 * dt * k1[0], y + 0.5 * dt * k1[1],
        psi + 0.5 * dt * k1[2], v + 0.5 * dt * k1[3], a, beta, l_r)
    k3 = dyn_derivative(
        x + 0.5 * dt * k2[0], y + 0.5 * dt * k2[1],
        psi + 0.5 * dt * k2[2], v + 0.5 * dt * k2[3], a, beta, l_r)
    k4 = dyn_derivative(
        x + dt * k3[0], y + dt * k3[1], psi + dt * k3[2], v + dt * k3[3],
        a, beta, l_r)
    nx = x + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    ny = y + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    npsi = psi + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    nv = v + dt / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
    if nv < 0.0:
        nv = 0.0
    return nx, ny, npsi, nv


# ---------------------------------------------------------------------------
# Constraint row builders (decision vector: a, beta, dv, dy, dpsi)
# ---------------------------------------------------------------------------


@njit(cache=True)
def build_clf_rows(A, b, tags, nrows, v, y, psi, vd, y_l, al_v, al_y, al_psi,
                   l_r):
    """Soft tracking rows for speed, lateral position, heading.

    Each row is Lie(V) - delta_j <= -alpha_j V using the affine model.
    Returns new row count; V values go unreported (reconstructable).
    """
    n = nrows
    ev = v - vd
    A[n, 0] = 2.0 * ev
    A[n, 1] = 0.0
    A[n, 2] = -1.0
    A[n, 3] = 0.0
    A[n, 4] = 0.0
    b[n] = -al_v * ev * ev
    tags[n] = TAG_CLF_V
    n += 1

    ey = y - y_l
    A[n, 0] = 0.0
    A[n, 1] = 2.0 * ey * v * np.cos(psi)
    A[n, 2] = 0.0
    A[n, 3] = -1.0
    A[n, 4] = 0.0
    b[n] = -al_y * ey * ey - 2.0 * ey * v * np.sin(psi)
    tags[n] = TAG_CLF_Y
    n += 1

    A[n, 0] = 0.0
    A[n, 1] = 2.0 * psi * v / l_r
    A[n, 2] = 0.0
    A[n, 3] = 0.0
    A[n, 4] = -1.0
    b[n] = -al_psi * psi * psi
    tags[n] = TAG_CLF_PSI
    n += 1
    return n


@njit(cache=True)
def build_input_rows(A, b, tags, nrows, v, beta_prev, dt, beta_max, rate_max,
                     a_max, ay_max, l_r):
    """Physical input box: accel, slip angle, slip rate, lateral acceleration."""
    n = nrows
    A[n, 0] = 1.0
    A[n, 1] = 0.0
    A[n, 2] = 0.0
    A[n, 3] = 0.0
    A[n, 4] = 0.0
    b[n] = a_max
    tags[n] = TAG_BOX_A_HI
    n += 1
    A[n, 0] = -1.0
    A[n, 1] = 0.0
    A[n, 2] = 0.0
    A[n, 3] = 0.0
    A[n, 4] = 0.0
    b[n] = a_max
    tags[n] = TAG_BOX_A_LO
    n += 1
    A[n, 0] = 0.0
    A[n, 1] = 1.0
    A[n, 2] = 0.0
    A[n, 3] = 0.0
    A[n, 4] = 0.0
    b[n] = beta_max
    tags[n] = TAG_BOX_B_HI
    n += 1
    A[n, 0] = 0.0
    A[n, 1] = -1.0
    A[n, 2] = 0.0
    A[n, 3] = 0.0
    A[n, 4] = 0.0
    b[n] = beta_max
    tags[n] = TAG_BOX_B_LO
    n += 1
    A[n, 0] = 0.0
    A[n, 1] = 1.0
    A[n, 2] = 0.0
    A[n, 3] = 0.0
    A[n, 4] = 0.0
    b[n] = beta_prev + rate_max * dt
    tags[n] = TAG_BOX_RATE_HI
    n += 1
    A[n, 0] = 0.0
    A[n, 1] = -1.0
    A[n, 2] = 0.0
    A[n, 3] = 0.0
    A[n, 4] = 0.0
    b[n] = -(beta_prev - rate_max * dt)
    tags[n] = TAG_BOX_RATE_LO
    n += 1
    # |v^2 beta / l_r| <= ay_max, linear in beta at the known speed
    cy = v * v / l_r
    A[n, 0] = 0.0
    A[n, 1] = cy
    A[n, 2] = 0.0
    A[n, 3] = 0.0
    A[n, 4] = 0.0
    b[n] = ay_max
    tags[n] = TAG_BOX_AY_HI
    n += 1
    A[n, 0] = 0.0
    A[n, 1] = -cy
    A[n, 2] = 0.0
    A[n, 3] = 0.0
    A[n, 4] = 0.0
    b[n] = ay_max
    tags[n] = TAG_BOX_AY_LO
    n += 1
    return n


@njit(cache=True)
def gap_dx(ex, kx, l_fc, l_rc):
    return abs(ex - kx) - l_fc - l_rc


@njit(cache=True)
def gap_dy(ey, ky, w_lc, w_rc):
    return abs(ey - ky) - w_rc - w_lc


@njit(cache=True)
def barrier_front(dx, v, psi, vk, ak, eps, a_l):
    """Headway barrier to a vehicle ahead, with a braking-distance term when
    ego is the faster one. Returns (h, dt_term, lf, lg_a, lg_b, branch)."""
    if v >= vk:
        h = dx - (1.0 + eps) * v - (vk - v) * (vk - v) / (2.0 * a_l)
        dt_term = vk - (vk - v) * ak / a_l
        la = -(1.0 + eps) + (vk - v) / a_l
        branch = BR_BRAKE
    else:
        h = dx - (1.0 + eps) * v
        dt_term = vk
        la = -(1.0 + eps)
        branch = BR_PLAIN
    lf = -v * np.cos(psi)
    lb = v * np.sin(psi)
    return h, dt_term, lf, la, lb, branch


@njit(cache=True)
def barrier_rear(dx, v, psi, vk, ak, eps, a_l):
    """Headway barrier to the vehicle behind in the target lane (its speed
    sets the required gap). Returns (h, dt_term, lf, lg_a, lg_b, branch)."""
    if vk >= v:
        h = dx - (1.0 + eps) * vk - (vk - v) * (vk - v) / (2.0 * a_l)
        dt_term = -vk + ak * (-(1.0 + eps) - (vk - v) / a_l)
        la = (vk - v) / a_l
        branch = BR_BRAKE
    else:
        h = dx - (1.0 + eps) * vk
        dt_term = -vk - (1.0 + eps) * ak
        la = 0.0
        branch = BR_PLAIN
    lf = v * np.cos(psi)
    lb = -v * np.sin(psi)
    return h, dt_term, lf, la, lb, branch


@njit(cache=True)
def barrier_return_front(dx, dy, sy, v, psi, vk, ak, vyk, eps, a_l):
    """Abort-state barrier to the front target-lane vehicle: longitudinal when
    clear along x, lateral floor otherwise."""
    if dx >= 0.0 and v >= vk:
        h = dx - (vk - v) * (vk - v) / (2.0 * a_l)
        dt_term = vk - (vk - v) * ak / a_l
        lf = -v * np.cos(psi)
        la = (vk - v) / a_l
        lb = v * np.sin(psi)
        return h, dt_term, lf, la, lb, BR_BRAKE
    if dx >= 0.0:
        h = dx
        dt_term = vk
        lf = -v * np.cos(psi)
        la = 0.0
        lb = v * np.sin(psi)
        return h, dt_term, lf, la, lb, BR_PLAIN
    h = dy - 0.1 * eps
    dt_term = -sy * vyk
    lf = sy * v * np.sin(psi)
    la = 0.0
    lb = sy * v * np.cos(psi)
    return h, dt_term, lf, la, lb, BR_LATERAL


@njit(cache=True)
def barrier_return_rear(dx, dy, sy, v, psi, vk, ak, vyk, eps, a_l):
    """Abort-state barrier to the rear target-lane vehicle, mirrored."""
    if dx >= 0.0 and vk >= v:
        h = dx - (vk - v) * (vk - v) / (2.0 * a_l)
        dt_term = -vk - (vk - v) * ak / a_l
        lf = v * np.cos(psi)
        la = (vk - v) / a_l
        lb = -v * np.sin(psi)
        return h, dt_term, lf, la, lb, BR_BRAKE
    if dx >= 0.0:
        h = dx
        dt_term = -vk
        lf = v * np.cos(psi)
        la = 0.0
        lb = -v * np.sin(psi)
        return h, dt_term, lf, la, lb, BR_PLAIN
    h = dy - eps
    dt_term = -sy * vyk
    lf = sy * v * np.sin(psi)
    la = 0.0
    lb = sy * v * np.cos(psi)
    return h, dt_term, lf, la, lb, BR_LATERAL


@njit(cache=True)
def append_barrier_row(A, b, tags, nrows, tag, gamma, h, dt_term, lf, la, lb):
    """Encode dh/dt + Lf h + Lg h u >= -gamma h as a <=-row on (a, beta)."""
    A[nrows, 0] = -la
    A[nrows, 1] = -lb
    A[nrows, 2] = 0.0
    A[nrows, 3] = 0.0
    A[nrows, 4] = 0.0
    b[nrows] = dt_term + lf + gamma * h
    tags[nrows] = tag
    return nrows + 1


# ---------------------------------------------------------------------------
# Lanes, signals, vehicle-of-interest selection
# ---------------------------------------------------------------------------


@njit(cache=True)
def lane_of(y, centers, width):
    """Lane index containing a lateral position (nearest band, clamped)."""
    n = centers.shape[0]
    idx = int(np.floor((y - centers[0]) / width + 0.5))
    if idx < 0:
        idx = 0
    if idx > n - 1:
        idx = n - 1
    return idx


@njit(cache=True)
def body_in_lane(y, lane, centers, width, w_lc, w_rc):
    """Whole body (lateral extremes y+w_lc / y-w_rc) inside the lane band."""
    lo = centers[lane] - 0.5 * width
    hi = centers[lane] + 0.5 * width
    return (y - w_rc >= lo) and (y + w_lc <= hi)


@njit(cache=True)
def crossed_boundary(y, cur, tgt, centers, width, w_lc, w_rc):
    """Any body edge beyond the boundary shared with the target lane."""
    if tgt > cur:
        return y + w_lc > centers[cur] + 0.5 * width
    return y - w_rc < centers[cur] - 0.5 * width


@njit(cache=True)
def lateral_progress(y, cur, tgt, dwell, centers, width, w_lc, w_rc):
    """The positional signal: 0 in the original lane, 0.5 once crossing,
    1 after dwelling fully inside the target lane for 1.5 s."""
    if dwell >= 1.5 - 1e-9:
        return 1.0
    if crossed_boundary(y, cur, tgt, centers, width, w_lc, w_rc):
        return 0.5
    return 0.0


@njit(cache=True)
def fsm_transition(state, c, p, e):
    """Transition table of the supervisor. Returns -1 on an invalid signal."""
    if c != -1 and c != 0 and c != 1:
        return -1
    if p != 0.0 and p != 0.5 and p != 1.0:
        return -1
    if e != 0 and e != 1:
        return -1
    if state == ACC:
        if e == 1 and c == 1:
            return L
        if e == 1 and c == -1:
            return R
        return ACC
    if state == L:
        if p == 1.0:
            return ACC
        if e == 0:
            return BL
        return L
    if state == R:
        if p == 1.0:
            return ACC
        if e == 0:
            return BR
        return R
    if state == BL:
        if p == 0.0:
            return ACC
        return BL
    if state == BR:
        if p == 0.0:
            return ACC
        return BR
    return -1


@njit(cache=True)
def select_interest(veh, ex, cur, tgt):
    """Nearest front vehicle in the current lane and nearest front/rear in the
    target lane, by c.g. position. Returns row indices, -1 when absent."""
    n = veh.shape[0]
    fc = -1
    ft = -1
    bt = -1
    best_fc = 1e300
    best_ft = 1e300
    best_bt = -1e300
    for i in range(n):
        lx = veh[i, V_X]
        lane = int(veh[i, V_LANE])
        if lane == cur and lx > ex and lx < best_fc:
            best_fc = lx
            fc = i
        if tgt >= 0 and lane == tgt:
            if lx > ex and lx < best_ft:
                best_ft = lx
                ft = i
            if lx < ex and lx > best_bt:
                best_bt = lx
                bt = i
    return fc, ft, bt


@njit(cache=True)
def predictive_speed(veh, fc, ft, bt, ex, v, prm):
    """Speed-limit feasibility lookahead: would flooring it to the limit open
    enough space on all three gaps? Returns the desired speed to use."""
    eps = prm[P_EPS]
    a_l = prm[P_AL]
    vl = prm[P_VL]
    lfc = prm[P_LFC]
    lrc = prm[P_LRC]
    dv_term = (vl * vl - v * v) / (2.0 * a_l)
    tau = (vl - v) / a_l
    ok = True
    if fc >= 0:
        dx = gap_dx(ex, veh[fc, V_X], lfc, lrc)
        if dx + veh[fc, V_V] * tau - dv_term - (1.0 + eps) * v <= 0.0:
            ok = False
    if ft >= 0:
        dx = gap_dx(ex, veh[ft, V_X], lfc, lrc)
        if dx + veh[ft, V_V] * tau - dv_term - (1.0 + eps) * v <= 0.0:
            ok = False
    if bt >= 0:
        dx = gap_dx(ex, veh[bt, V_X], lfc, lrc)
        vbt = veh[bt, V_V]
        if dx - vbt * tau + dv_term - (1.0 + eps) * vbt <= 0.0:
            ok = False
    if ok:
        return vl
    return prm[P_VD]


# ---------------------------------------------------------------------------
# Per-state constraint menus
# ---------------------------------------------------------------------------


@njit(cache=True)
def build_cruise_cbf(A, b, tags, nrows, hs, brs, veh, fc, ex, ey, psi, v, prm):
    """Front-vehicle headway barrier used while lane keeping."""
    n = nrows
    if fc >= 0:
        dx = gap_dx(ex, veh[fc, V_X], prm[P_LFC], prm[P_LRC])
        h, dtm, lf, la, lb, br = barrier_front(
            dx, v, psi, veh[fc, V_V], veh[fc, V_A], prm[P_EPS], prm[P_AL])
        n = append_barrier_row(A, b, tags, n, TAG_CBF_FC, prm[P_GAMMA_FC],
                               h, dtm, lf, la, lb)
        hs[FC] = h
        brs[FC] = br
    return n


@njit(cache=True)
def build_change_cbf(A, b, tags, nrows, hs, brs, veh, fc, ft, bt, ex, ey, psi,
                     v, fully_in_target, prm):
    """Lane-change barriers; the current-lane and rear gaps are dropped once
    the body is entirely inside the target lane."""
    n = nrows
    if fc >= 0 and not fully_in_target:
        dx = gap_dx(ex, veh[fc, V_X], prm[P_LFC], prm[P_LRC])
        h, dtm, lf, la, lb, br = barrier_front(
            dx, v, psi, veh[fc, V_V], veh[fc, V_A], prm[P_EPS], prm[P_AL])
        n = append_barrier_row(A, b, tags, n, TAG_CBF_FC, prm[P_GAMMA_FC],
                               h, dtm, lf, la, lb)
        hs[FC] = h
        brs[FC] = br
    if ft >= 0:
        dx = gap_dx(ex, veh[ft, V_X], prm[P_LFC], prm[P_LRC])
        h, dtm, lf, la, lb, br = barrier_front(
            dx, v, psi, veh[ft, V_V], veh[ft, V_A], prm[P_EPS], prm[P_AL])
        n = append_barrier_row(A, b, tags, n, TAG_CBF_FT, prm[P_GAMMA_FT],
                               h, dtm, lf, la, lb)
        hs[FT] = h
        brs[FT] = br
    if bt >= 0 and not fully_in_target:
        dx = gap_dx(ex, veh[bt, V_X], prm[P_LFC], prm[P_LRC])
        h, dtm, lf, la, lb, br = barrier_rear(
            dx, v, psi, veh[bt, V_V], veh[bt, V_A], prm[P_EPS], prm[P_AL])
        n = append_barrier_row(A, b, tags, n, TAG_CBF_BT, prm[P_GAMMA_BT],
                               h, dtm, lf, la, lb)
        hs[BT] = h
        brs[BT] = br
    return n


@njit(cache=True)
def build_return_cbf(A, b, tags, nrows, hs, brs, veh, fc, ft, bt, ex, ey, psi,
                     v, prm):
    """Abort barriers: front headway plus longitudinal-or-lateral floors on
    the two target-lane vehicles."""
    n = nrows
    if fc >= 0:
        dx = gap_dx(ex, veh[fc, V_X], prm[P_LFC], prm[P_LRC])
        h, dtm, lf, la, lb, br = barrier_front(
            dx, v, psi, veh[fc, V_V], veh[fc, V_A], prm[P_EPS], prm[P_AL])
        n = append_barrier_row(A, b, tags, n, TAG_CBF_FC, prm[P_GAMMA_FC],
                               h, dtm, lf, la, lb)
        hs[FC] = h
        brs[FC] = br
    if ft >= 0:
        dx = gap_dx(ex, veh[ft, V_X], prm[P_LFC], prm[P_LRC])
        dy = gap_dy(ey, veh[ft, V_Y], prm[P_WLC], prm[P_WRC])
        sy = 1.0 if ey >= veh[ft, V_Y] else -1.0
        h, dtm, lf, la, lb, br = barrier_return_front(
            dx, dy, sy, v, psi, veh[ft, V_V], veh[ft, V_A], veh[ft, V_VY],
            prm[P_EPS], prm[P_AL])
        n = append_barrier_row(A, b, tags, n, TAG_CBF_FT, prm[P_GAMMA_FT],
                               h, dtm, lf, la, lb)
        hs[FT] = h
        brs[FT] = br
    if bt >= 0:
        dx = gap_dx(ex, veh[bt, V_X], prm[P_LFC], prm[P_LRC])
        dy = gap_dy(ey, veh[bt, V_Y], prm[P_WLC], prm[P_WRC])
        sy = 1.0 if ey >= veh[bt, V_Y] else -1.0
        h, dtm, lf, la, lb, br = barrier_return_rear(
            dx, dy, sy, v, psi, veh[bt, V_V], veh[bt, V_A], veh[bt, V_VY],
            prm[P_EPS], prm[P_AL])
        n = append_barrier_row(A, b, tags, n, TAG_CBF_BT, prm[P_GAMMA_BT],
                               h, dtm, lf, la, lb)
        hs[BT] = h
        brs[BT] = br
    return n


# ---------------------------------------------------------------------------
# Controller step
# ---------------------------------------------------------------------------


@njit(cache=True)
def _assemble_and_solve(P5, A, b, tags, veh, fc, ft, bt, family, ex, ey, psi,
                        v, vd_use, y_target, fully_in_target, beta_prev, prm,
                        hs, brs):
    """Build CLF + state CBF + input rows, then solve. Returns
    (z, status, viol, iters, nrows, kkt)."""
    hs[0] = np.nan
    hs[1] = np.nan
    hs[2] = np.nan
    brs[0] = BR_NONE
    brs[1] = BR_NONE
    brs[2] = BR_NONE
    n = build_clf_rows(A, b, tags, 0, v, ey, psi, vd_use, y_target,
                       prm[P_ALPHA_V], prm[P_ALPHA_Y], prm[P_ALPHA_PSI],
                       prm[P_LR])
    if family == FAM_CRUISE:
        n = build_cruise_cbf(A, b, tags, n, hs, brs, veh, fc, ex, ey, psi, v,
                             prm)
    elif family == FAM_CHANGE:
        n = build_change_cbf(A, b, tags, n, hs, brs, veh, fc, ft, bt, ex, ey,
                             psi, v, fully_in_target, prm)
    else:
        n = build_return_cbf(A, b, tags, n, hs, brs, veh, fc, ft, bt, ex, ey,
                             psi, v, prm)
    n = build_input_rows(A, b, tags, n, v, beta_prev, prm[P_DT],
                         prm[P_BETA_MAX], prm[P_BETA_RATE], prm[P_A_MAX],
                         prm[P_AY_MAX], prm[P_LR])
    q = np.zeros(DIM)
    hint = np.zeros(DIM)
    hint[1] = beta_prev
    z, lam, status, viol, iters = qp_solve(P5, q, A[:n], b[:n], hint, True)
    kkt = np.nan
    if status == 1:
        kkt = kkt_residual_arrays(P5, q, A[:n], b[:n], z, lam)
    return z, status, viol, iters, n, kkt


@njit(cache=True)
def _signature_changed(ci, fc_id, ft_id, bt_id, family, hs):
    """Update the active-barrier signature; returns 0 (same), 1 (switched,
    all values inside the safe sets) or 2 (switched with a violation)."""
    cnt = 0
    sig = np.empty((3, 3), dtype=np.int64)
    if not np.isnan(hs[FC]):
        sig[cnt, 0] = FC
        sig[cnt, 1] = fc_id
        sig[cnt, 2] = family
        cnt += 1
    if not np.isnan(hs[FT]):
        sig[cnt, 0] = FT
        sig[cnt, 1] = ft_id
        sig[cnt, 2] = family
        cnt += 1
    if not np.isnan(hs[BT]):
        sig[cnt, 0] = BT
        sig[cnt, 1] = bt_id
        sig[cnt, 2] = family
        cnt += 1
    same = ci[CI_SIGN] == cnt
    if same:
        for i in range(cnt):
            for j in range(3):
                if ci[CI_SIG + 3 * i + j] != sig[i, j]:
                    same = False
    ci[CI_SIGN] = cnt
    for i in range(cnt):
        for j in range(3):
            ci[CI_SIG + 3 * i + j] = sig[i, j]
    if same:
        return 0
    for k in range(3):
        if not np.isnan(hs[k]) and hs[k] < -SAFETY_TOL:
            return 2
    return 1


@njit(cache=True)
def _fallback_input(ey, v, cur, centers, width, beta_prev, prm):
    """Last-resort input: maximum braking, steering toward the lane center
    within the box, rate and lateral-acceleration limits."""
    a = -prm[P_A_MAX]
    err = centers[cur] - ey
    vv = v if v > 1.0 else 1.0
    beta = 0.5 * err / vv
    bmax = prm[P_BETA_MAX]
    if beta > bmax:
        beta = bmax
    if beta < -bmax:
        beta = -bmax
    ay_lim = prm[P_AY_MAX] * prm[P_LR] / (v * v) if v > 1e-9 else bmax
    if beta > ay_lim:
        beta = ay_lim
    if beta < -ay_lim:
        beta = -ay_lim
    lo = beta_prev - prm[P_BETA_RATE] * prm[P_DT]
    hi = beta_prev + prm[P_BETA_RATE] * prm[P_DT]
    if beta > hi:
        beta = hi
    if beta < lo:
        beta = lo
    return a, beta


@njit(cache=True)
def controller_step(ex, ey, epsi, ev, veh, c_in, centers, width, prm, P5,
                    ci, cf, diag):
    """One 100 Hz supervisor step: update signals, resolve transitions, build
    the state's QP, solve, and return the applied (a, beta).

    `ci`/`cf` persist controller state across calls; `diag` receives the
    per-step record (see D_* layout).
    """
    for i in range(DIAG_LEN):
        diag[i] = np.nan
    A = np.empty((MAXR, DIM))
    b = np.empty(MAXR)
    tags = np.empty(MAXR, dtype=np.int64)
    hs = np.empty(3)
    brs = np.empty(3, dtype=np.int64)

    state = ci[CI_STATE]
    cur = ci[CI_CUR]
    tgt = ci[CI_TGT]
    dt = prm[P_DT]
    beta_prev = cf[CF_UB]
    nlanes = centers.shape[0]

    # command consumption: a completed command stays消 until it is released
    c = c_in
    if c_in != 0 and c_in == ci[CI_DONE]:
        c = 0
    if c_in == 0:
        ci[CI_DONE] = 0

    # positional signal
    attempt = state == L or state == R or state == BL or state == BR
    p = 0.0
    if attempt:
        fully_t = body_in_lane(ey, tgt, centers, width, prm[P_WLC],
                               prm[P_WRC])
        if (state == L or state == R) and fully_t:
            cf[CF_DWELL] += dt
        elif not fully_t:
            cf[CF_DWELL] = 0.0
        p = lateral_progress(ey, cur, tgt, cf[CF_DWELL], centers, width,
                             prm[P_WLC], prm[P_WRC])

    # signal-driven transitions that do not need the solve (success / return)
    p_out = p
    if (state == L or state == R) and p == 1.0:
        state = fsm_transition(state, c, p, 1)  # -> ACC
        cur = tgt
        tgt = -1
        ci[CI_DONE] = c_in
        c = 0
        cf[CF_DWELL] = 0.0
        attempt = False
        p = 0.0
    if (state == BL or state == BR) and p == 0.0:
        state = fsm_transition(state, c, p, 1)  # -> ACC
        tgt = -1
        attempt = False
        cf[CF_DWELL] = 0.0

    e = 1
    ecert = np.nan
    probe = PROBE_NONE
    fallback = 0
    status = 0
    viol = 0.0
    iters = 0
    nrows = 0
    kkt = np.nan
    za = 0.0
    zb = 0.0
    dv = np.nan
    dy = np.nan
    dpsi = np.nan
    family = FAM_CRUISE
    fc = -1
    ft = -1
    bt = -1

    if state == ACC:
        tgt_cand = -1
        if c == 1 and cur + 1 < nlanes:
            tgt_cand = cur + 1
        elif c == -1 and cur - 1 >= 0:
            tgt_cand = cur - 1
        fc, ft, bt = select_interest(veh, ex, cur, tgt_cand)
        vd_use = prm[P_VD]
        if tgt_cand >= 0:
            vd_use = predictive_speed(veh, fc, ft, bt, ex, ev, prm)
            # entry requires the new safe sets to contain the state...
            hs[0] = np.nan
            hs[1] = np.nan
            hs[2] = np.nan
            brs[0] = BR_NONE
            brs[1] = BR_NONE
            brs[2] = BR_NONE
            nprobe = build_change_cbf(
                np.empty((MAXR, DIM)), np.empty(MAXR),
                np.empty(MAXR, dtype=np.int64), 0, hs, brs, veh, fc, ft, bt,
                ex, ey, epsi, ev, False, prm)
            gate_ok = True
            gate_min = np.inf
            for k in range(3):
                if not np.isnan(hs[k]):
                    if hs[k] < gate_min:
                        gate_min = hs[k]
                    if hs[k] < 0.0:
                        gate_ok = False
            if gate_ok:
                # ...and the lane-change QP to be solvable
                z, status, viol, iters, nrows, kkt = _assemble_and_solve(
                    P5, A, b, tags, veh, fc, ft, bt, FAM_CHANGE, ex, ey, epsi,
                    ev, prm[P_VD], centers[tgt_cand], False, beta_prev, prm,
                    hs, brs)
                if status == 1:
                    probe = PROBE_OK
                    e = 1
                    state = fsm_transition(ACC, c, p, 1)  # -> L or R
                    tgt = tgt_cand
                    cf[CF_DWELL] = 0.0
                    family = FAM_CHANGE
                    za = z[0]
                    zb = z[1]
                    dv = z[2]
                    dy = z[3]
                    dpsi = z[4]
                else:
                    probe = PROBE_INFEASIBLE
                    e = 0
                    ecert = viol
            else:
                probe = PROBE_GATED
                e = 0
                ecert = gate_min
        if state == ACC:
            z, status, viol, iters, nrows, kkt = _assemble_and_solve(
                P5, A, b, tags, veh, fc, -1, -1, FAM_CRUISE, ex, ey, epsi, ev,
                vd_use, centers[cur], False, beta_prev, prm, hs, brs)
            family = FAM_CRUISE
            ft = -1
            bt = -1
            if status == 1:
                za = z[0]
                zb = z[1]
                dv = z[2]
                dy = z[3]
                dpsi = z[4]
            else:
                fallback = 1
                za, zb = _fallback_input(ey, ev, cur, centers, width,
                                         beta_prev, prm)
    elif state == L or state == R:
        fc, ft, bt = select_interest(veh, ex, cur, tgt)
        fully_t = body_in_lane(ey, tgt, centers, width, prm[P_WLC],
                               prm[P_WRC])
        z, status, viol, iters, nrows, kkt = _assemble_and_solve(
            P5, A, b, tags, veh, fc, ft, bt, FAM_CHANGE, ex, ey, epsi, ev,
            prm[P_VD], centers[tgt], fully_t, beta_prev, prm, hs, brs)
        family = FAM_CHANGE
        if status == 1:
            e = 1
            za = z[0]
            zb = z[1]
            dv = z[2]
            dy = z[3]
            dpsi = z[4]
        else:
            e = 0
            ecert = viol
            state = fsm_transition(state, c, p, 0)  # -> BL or BR
            z, status, viol, iters, nrows, kkt = _assemble_and_solve(
                P5, A, b, tags, veh, fc, ft, bt, FAM_RETURN, ex, ey, epsi, ev,
                prm[P_VD], centers[cur], False, beta_prev, prm, hs, brs)
            family = FAM_RETURN
            if status == 1:
                za = z[0]
                zb = z[1]
                dv = z[2]
                dy = z[3]
                dpsi = z[4]
            else:
                fallback = 1
                za, zb = _fallback_input(ey, ev, cur, centers, width,
                                         beta_prev, prm)
    else:  # BL or BR
        e = 0
        fc, ft, bt = select_interest(veh, ex, cur, tgt)
        z, status, viol, iters, nrows, kkt = _assemble_and_solve(
            P5, A, b, tags, veh, fc, ft, bt, FAM_RETURN, ex, ey, epsi, ev,
            prm[P_VD], centers[cur], False, beta_prev, prm, hs, brs)
        family = FAM_RETURN
        if status == 1:
            za = z[0]
            zb = z[1]
            dv = z[2]
            dy = z[3]
            dpsi = z[4]
        else:
            fallback = 1
            za, zb = _fallback_input(ey, ev, cur, centers, width, beta_prev,
                                     prm)

    fc_id = int(veh[fc, V_ID]) if fc >= 0 else -1
    ft_id = int(veh[ft, V_ID]) if ft >= 0 else -1
    bt_id = int(veh[bt, V_ID]) if bt >= 0 else -1
    switch = _signature_changed(ci, fc_id, ft_id, bt_id, family, hs)

    ci[CI_STATE] = state
    ci[CI_CUR] = cur
    ci[CI_TGT] = tgt
    cf[CF_UA] = za
    cf[CF_UB] = zb

    diag[D_P] = p_out
    diag[D_E] = e
    diag[D_STATE] = state
    diag[D_QP] = status
    diag[D_HFC] = hs[FC]
    diag[D_HFT] = hs[FT]
    diag[D_HBT] = hs[BT]
    diag[D_BRFC] = brs[FC]
    diag[D_BRFT] = brs[FT]
    diag[D_BRBT] = brs[BT]
    diag[D_DV] = dv
    diag[D_DY] = dy
    diag[D_DPSI] = dpsi
    diag[D_KKT] = kkt
    diag[D_SWITCH] = switch
    diag[D_FALLBACK] = fallback
    diag[D_PROBE] = probe
    diag[D_NROWS] = nrows
    diag[D_ITERS] = iters
    diag[D_VIOL] = viol
    diag[D_CMD] = c
    diag[D_ECERT] = ecert
    return za, zb


# ---------------------------------------------------------------------------
# Traffic behaviors
# ---------------------------------------------------------------------------


YIELD_MARGIN_X = 2.0  # longitudinal body-gap below which a merger yields
# lateral body-gap below which a merger yields; sized so the abort-state
# lateral barrier stays satisfiable under the slip-rate limit
YIELD_MARGIN_Y = 4.0


@njit(cache=True)
def _merge_blocked(x6, y6, dirn, xo, yo, geom_len, geom_wid):
    """A merging vehicle must not sweep its body through an occupied slot:
    blocked when the other body overlaps longitudinally, is laterally close,
    and lies on the side the merger is moving toward."""
    if abs(x6 - xo) - geom_len >= YIELD_MARGIN_X:
        return False
    if abs(y6 - yo) - geom_wid >= YIELD_MARGIN_Y:
        return False
    return (yo - y6) * dirn > 0.0


@njit(cache=True)
def world_sync(veh, bi, bf, sched, t, dt, centers, width, strict,
               ex, ey, ev, geom_len, geom_wid):
    """Refresh observed accel / lateral speed / lane for the current time.

    Random-accel vehicles saturate so the speed bounds are never crossed;
    the scripted merger exposes its true lateral speed. A merger never
    initiates lateral motion through the ego body (it pauses its profile,
    resuming once clear); in strict mode it extends the same courtesy to
    other vehicles and waits for headway-based clearance before starting.
    """
    n = veh.shape[0]
    for i in range(n):
        typ = bi[i, BI_TYPE]
        if typ == BEH_CONST:
            veh[i, V_A] = 0.0
            veh[i, V_VY] = 0.0
        elif typ == BEH_RANDOM:
            period = bf[i, BF_PERIOD]
            slot = int(t / period + 1e-9)
            if slot > sched.shape[1] - 1:
                slot = sched.shape[1] - 1
            a = sched[i, slot]
            v = veh[i, V_V]
            vn = v + a * dt
            if vn > bf[i, BF_VMAX]:
                a = (bf[i, BF_VMAX] - v) / dt
            elif vn < bf[i, BF_VMIN]:
                a = (bf[i, BF_VMIN] - v) / dt
            veh[i, V_A] = a
            veh[i, V_VY] = 0.0
        else:  # scripted lane change
            veh[i, V_A] = 0.0
            if bi[i, BI_STARTED] == 0 and t + 1e-12 >= bf[i, BF_TSTART]:
                ok = True
                if strict:
                    tgt_lane = lane_of(bf[i, BF_YTO], centers, width)
                    clear = bf[i, BF_CLEARANCE]
                    xi = veh[i, V_X]
                    vi = veh[i, V_V]
                    for j in range(n):
                        if j == i:
                            continue
                        if int(veh[j, V_LANE]) != tgt_lane:
                            continue
                        gap = abs(xi - veh[j, V_X]) - geom_len
                        if veh[j, V_X] > xi:
                            if gap < clear * vi:
                                ok = False
                        else:
                            if gap < clear * veh[j, V_V]:
                                ok = False
                    if lane_of(ey, centers, width) == tgt_lane:
                        gap = abs(xi - ex) - geom_len
                        if ex > xi:
                            if gap < clear * vi:
                                ok = False
                        elif gap < clear * ev:
                            ok = False
                if ok:
                    bi[i, BI_STARTED] = 1
                    bf[i, BF_T0] = t
            if bi[i, BI_STARTED] == 1:
                tau = (t - bf[i, BF_T0]) / bf[i, BF_DURATION]
                paused = False
                if 0.0 <= tau < 1.0:
                    dirn = 1.0 if bf[i, BF_YTO] > bf[i, BF_YFROM] else -1.0
                    if _merge_blocked(veh[i, V_X], veh[i, V_Y], dirn, ex, ey,
                                      geom_len, geom_wid):
                        paused = True
                    if strict and not paused:
                        for j in range(n):
                            if j != i and _merge_blocked(
                                    veh[i, V_X], veh[i, V_Y], dirn,
                                    veh[j, V_X], veh[j, V_Y], geom_len,
                                    geom_wid):
                                paused = True
                                break
                if paused:
                    # freeze the lateral profile in place; it resumes when
                    # the slot clears
                    bf[i, BF_T0] += dt
                    veh[i, V_VY] = 0.0
                elif 0.0 <= tau <= 1.0:
                    span = bf[i, BF_YTO] - bf[i, BF_YFROM]
                    veh[i, V_VY] = (span * np.pi / (2.0 * bf[i, BF_DURATION])
                                    * np.sin(np.pi * tau))
                else:
                    veh[i, V_VY] = 0.0
            else:
                veh[i, V_VY] = 0.0
        veh[i, V_LANE] = lane_of(veh[i, V_Y], centers, width)


@njit(cache=True)
def world_advance(veh, bi, bf, t, dt, centers, width, strict, geom_len):
    """Integrate traffic one step (after sync picked accelerations)."""
    n = veh.shape[0]
    for i in range(n):
        typ = bi[i, BI_TYPE]
        if typ == BEH_CONST:
            veh[i, V_X] += veh[i, V_V] * dt
        elif typ == BEH_RANDOM:
            a = veh[i, V_A]
            veh[i, V_X] += veh[i, V_V] * dt + 0.5 * a * dt * dt
            v = veh[i, V_V] + a * dt
            if v > bf[i, BF_VMAX]:
                v = bf[i, BF_VMAX]
            if v < bf[i, BF_VMIN]:
                v = bf[i, BF_VMIN]
            veh[i, V_V] = v
        else:
            veh[i, V_X] += veh[i, V_V] * dt
            if bi[i, BI_STARTED] == 1:
                tau = (t + dt - bf[i, BF_T0]) / bf[i, BF_DURATION]
                if tau > 1.0:
                    tau = 1.0
                if tau >= 0.0:
                    span = bf[i, BF_YTO] - bf[i, BF_YFROM]
                    veh[i, V_Y] = (bf[i, BF_YFROM]
                                   + span * 0.5 * (1.0 - np.cos(np.pi * tau)))
        veh[i, V_LANE] = lane_of(veh[i, V_Y], centers, width)

    if strict:
        # same-lane vehicles may not pass through each other: cap followers
        order = np.empty(n, dtype=np.int64)
        for i in range(n):
            order[i] = i
        # insertion sort by x descending, id ascending on ties
        for i in range(1, n):
            key = order[i]
            j = i - 1
            while j >= 0 and (
                    veh[order[j], V_X] < veh[key, V_X]
                    or (veh[order[j], V_X] == veh[key, V_X]
                        and veh[order[j], V_ID] > veh[key, V_ID])):
                order[j + 1] = order[j]
                j -= 1
            order[j + 1] = key
        nl = centers.shape[0]
        for lane in range(nl):
            lead = -1
            for oi in range(n):
                i = order[oi]
                if int(veh[i, V_LANE]) != lane:
                    continue
                if lead >= 0:
                    cap = veh[lead, V_X] - geom_len - GAP_MIN
                    if veh[i, V_X] > cap:
                        veh[i, V_X] = cap
                        if veh[i, V_V] > veh[lead, V_V]:
                            veh[i, V_V] = veh[lead, V_V]
                        veh[i, V_A] = 0.0
                lead = i


# ---------------------------------------------------------------------------
# Collision test (separating axes; ego rotated, traffic axis-aligned)
# ---------------------------------------------------------------------------


@njit(cache=True)
def rect_overlap(ex, ey, epsi, ox, oy, l_fc, l_rc, w_lc, w_rc):
    """Body overlap between the heading-aligned ego rectangle and an
    axis-aligned vehicle rectangle (both share the geometry)."""
    c = np.cos(epsi)
    s = np.sin(epsi)
    # ego corners in world frame (body corners: fore/aft x left/right)
    exs = np.empty(4)
    eys = np.empty(4)
    bx = (l_fc, l_fc, -l_rc, -l_rc)
    by = (w_lc, -w_rc, -w_rc, w_lc)
    for i in range(4):
        exs[i] = ex + c * bx[i] - s * by[i]
        eys[i] = ey + s * bx[i] + c * by[i]
    # world axes vs the other body's box
    if max(exs[0], exs[1], exs[2], exs[3]) < ox - l_rc:
        return False
    if min(exs[0], exs[1], exs[2], exs[3]) > ox + l_fc:
        return False
    if max(eys[0], eys[1], eys[2], eys[3]) < oy - w_rc:
        return False
    if min(eys[0], eys[1], eys[2], eys[3]) > oy + w_lc:
        return False
    # ego axes vs the other body's corners projected into ego body frame
    pxs = np.empty(4)
    pys = np.empty(4)
    obx = (ox + l_fc, ox + l_fc, ox - l_rc, ox - l_rc)
    oby = (oy + w_lc, oy - w_rc, oy - w_rc, oy + w_lc)
    for i in range(4):
        dx = obx[i] - ex
        dy = oby[i] - ey
        pxs[i] = c * dx + s * dy
        pys[i] = -s * dx + c * dy
    if max(pxs[0], pxs[1], pxs[2], pxs[3]) < -l_rc:
        return False
    if min(pxs[0], pxs[1], pxs[2], pxs[3]) > l_fc:
        return False
    if max(pys[0], pys[1], pys[2], pys[3]) < -w_rc:
        return False
    if min(pys[0], pys[1], pys[2], pys[3]) > w_lc:
        return False
    return True


@njit(cache=True)
def first_hit(ex, ey, epsi, veh, l_fc, l_rc, w_lc, w_rc):
    """Index of the first vehicle overlapping the ego body, or -1."""
    for i in range(veh.shape[0]):
        if rect_overlap(ex, ey, epsi, veh[i, V_X], veh[i, V_Y],
                        l_fc, l_rc, w_lc, w_rc):
            return i
    return -1
