"""Independent reference computations used by the tests.

None of these call into the package's solvers: trajectories come from the
matrix exponential, Lyapunov solutions from scipy, SDPs from cvxpy and
commitments from exhaustive enumeration.
"""
import itertools

import cvxpy as cp
import numpy as np
from scipy.linalg import expm, solve_continuous_lyapunov
from scipy.optimize import linprog, minimize_scalar


def aggregate_sums(sgs, commitment, p_base):
    """Textbook weighted sums, loop by loop."""
    m = d = f = r = tw = w = 0.0
    for s, on in zip(sgs, commitment):
        if on:
            wi = s.p_rating / p_base
            m += s.m_i * wi
            d += s.d_i * wi
            f += s.k_i * s.f_i / s.r_i * wi
            r += s.k_i / s.r_i * wi
            tw += s.t_i * wi
            w += wi
    return m, d, f, r, tw / w


def sfr_matrices(m_g, d_g, f_g, r_g, t, d_c=0.0, m_c=0.0):
    """Closed-loop omega / omega_dot dynamics of the second-order model (independent derivation)."""
    m = m_g + m_c
    d = d_g + d_c
    a = np.array([[0.0, 1.0], [-(d + r_g) / (m * t), -(m + t * (d + f_g)) / (m * t)]])
    b = np.array([0.0, 1.0 / (m * t)])
    return a, b, m


def exact_states(a, b, x0, dpl, t):
    """x(t) for x' = A x + b dpl via the augmented matrix exponential."""
    n = a.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = a
    aug[:n, n] = b * dpl
    z0 = np.append(x0, 1.0)
    return np.array([(expm(aug * ti) @ z0)[:n] for ti in np.atleast_1d(t)])


def exact_nadir(a, b, m, dpl, t_hi=30.0):
    """Peak omega and its time for the step response starting at [0, dpl/m]."""
    x0 = np.array([0.0, dpl / m])
    grid = np.linspace(0.0, t_hi, 3001)
    w = exact_states(a, b, x0, dpl, grid)[:, 0]
    k = int(np.argmax(w))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(lambda s: -exact_states(a, b, x0, dpl, s)[0, 0], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return -res.fun, res.x


def lyapunov(a, alpha, e):
    a_hat = a + 0.5 * alpha * np.eye(a.shape[0])
    e = np.asarray(e, dtype=float).reshape(a.shape[0], -1)
    return solve_continuous_lyapunov(a_hat, -e @ e.T / alpha)


def p2p_sdp(a, b1, e_t, alpha, c, b2, x0=None):
    """The closed-loop SDP at fixed alpha, solved by cvxpy."""
    n = a.shape[0]
    p = cp.Variable((n, n), symmetric=True)
    y = cp.Variable((1, n))
    z = cp.Variable((1, 1))
    b1 = np.asarray(b1).reshape(n, 1)
    e_t = np.asarray(e_t).reshape(n, 1)
    lyap = a @ p + p @ a.T + alpha * p + b1 @ y + y.T @ b1.T
    blk = cp.bmat([[lyap, e_t], [e_t.T, -alpha * np.eye(1)]])
    cons = [0.5 * (blk + blk.T) << 0, cp.bmat([[z, y], [y.T, p]]) >> 0]
    if x0 is not None:
        x0 = np.asarray(x0).reshape(n, 1)
        cons.append(cp.bmat([[np.eye(1), x0.T], [x0, p]]) >> 0)
    obj = cp.trace(c @ p @ c.T + c @ y.T @ b2.T + b2 @ y @ c.T + b2 @ z @ b2.T)
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10, max_iter=500)
    return prob.value, p.value, y.value


def uc_dispatch_lp(instance, commitment, curve=None, reserve=None, tie_break=1e-3):
    """Cheapest dispatch for a fixed commitment (per period LPs), or inf if infeasible."""
    total = 0.0
    for t in range(instance.periods):
        total += period_dispatch_lp(instance, t, commitment[:, t], curve, reserve, tie_break)
        if not np.isfinite(total):
            return np.inf
    return total


def period_dispatch_lp(instance, t, on, curve=None, reserve=None, tie_break=1e-3):
    """Cheapest dispatch of period ``t`` with units ``on``, or inf if infeasible.

    Written directly from the model statement: balance, unit limits, wind
    bounds, per-IBR headroom with the linear curve requirement, and the
    SG-only RoCoF and steady-state rows.
    """
    fl = instance.fleet
    G, C = len(fl.sgs), len(fl.converters)
    mode = instance.mode.value
    w_ss, rocof = instance.limits.w_ss_lim_hz / fl.f_base, instance.limits.rocof_lim_hz_s / fl.f_base
    if mode != "Base":
        m_g = sum(s.m_i * s.p_rating for s, u in zip(fl.sgs, on) if u) / fl.p_base
        dr = sum((s.d_i + s.k_i / s.r_i) * s.p_rating for s, u in zip(fl.sgs, on) if u) / fl.p_base
        if m_g < fl.dpl_pu / rocof - 1e-9 or dr < fl.dpl_pu / w_ss - 1e-9:
            return np.inf
    avail = instance.wind_available[:, t]
    # variables: p (G), w (C), r (C)
    n = G + 2 * C
    cost = np.zeros(n)
    lb, ub = np.zeros(n), np.zeros(n)
    for i, s in enumerate(fl.sgs):
        cost[i] = s.cost_marginal * instance.hours
        if on[i]:
            lb[i], ub[i] = s.p_min, s.p_max
    ub[G:G + C] = avail if reserve is None else avail - reserve
    a_ub, b_ub = [], []
    if mode == "ProposedLinear":
        cost[G + C:] = tie_break * instance.hours
        ub[G + C:] = avail
        for c in range(C):
            row = np.zeros(n)
            row[G + c] = row[G + C + c] = 1.0
            a_ub.append(row)
            b_ub.append(avail[c])
        y = {}
        for s, u in zip(fl.sgs, on):
            y[s.group] = y.get(s.group, 0.0) + (s.p_rating if u else 0.0)
        need = fl.p_base * (sum(k * y[g] for k, g in zip(curve.k, curve.groups)) + curve.k0)
        row = np.zeros(n)
        row[G + C:] = -1.0
        a_ub.append(row)
        b_ub.append(-need)
    a_eq = np.zeros((1, n))
    a_eq[0, :G + C] = 1.0
    r = linprog(cost, A_ub=np.array(a_ub) if a_ub else None, b_ub=b_ub or None, A_eq=a_eq,
                b_eq=[instance.demand[t]], bounds=list(zip(lb, ub)), method="highs")
    if r.status != 0:
        return np.inf
    return r.fun


def commitment_cost(instance, commitment):
    fl = instance.fleet
    cost = 0.0
    init = instance.initial_commitment
    for t in range(instance.periods):
        for i, s in enumerate(fl.sgs):
            on = commitment[i, t]
            cost += s.cost_noload * instance.hours * on
            if t > 0:
                cost += s.cost_startup * (on and not commitment[i, t - 1])
            elif init is not None:
                cost += s.cost_startup * (on and not init[i])
    return cost


def brute_force_uc(instance, curve=None, reserve=None):
    """Minimum objective over all 2^(G T) commitments."""
    G, T = len(instance.fleet.sgs), instance.periods
    # each period's dispatch depends only on that period's on/off pattern
    table = {(t, on): period_dispatch_lp(instance, t, np.array(on), curve, reserve)
             for t in range(T) for on in itertools.product((False, True), repeat=G)}
    best = np.inf
    for bits in itertools.product((False, True), repeat=G * T):
        u = np.array(bits, dtype=bool).reshape(G, T)
        disp = sum(table[t, tuple(u[:, t])] for t in range(T))
        if np.isfinite(disp):
            best = min(best, disp + commitment_cost(instance, u))
    return best
