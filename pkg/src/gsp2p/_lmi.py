"""Log-det barrier interior-point kernel for tiny dense LMI problems.

Solves ``min c.v  s.t.  F0[k] + sum_j v[j] F[k, j] >= 0`` for a handful of
equally sized blocks.  Everything is written with explicit loops so numba can
compile it; the blocks here are at most 4x4 and there are at most 8 variables.
"""
import math

import numpy as np
from numba import njit

OPTIMAL = 0
MAX_ITER = 1
NOT_INTERIOR = 2
STOPPED = 3


@njit(cache=True)
def _chol(a, n, out):
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s -= out[j, k] * out[j, k]
        if not s > 0.0:
            return False
        d = math.sqrt(s)
        out[j, j] = d
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s -= out[i, k] * out[j, k]
            out[i, j] = s / d
    return True


@njit(cache=True)
def _chol_inverse(lo, n, out):
    # inverse of L L^T from its Cholesky factor
    linv = np.zeros((n, n))
    for i in range(n):
        linv[i, i] = 1.0 / lo[i, i]
        for j in range(i):
            s = 0.0
            for k in range(j, i):
                s -= lo[i, k] * linv[k, j]
            linv[i, j] = s / lo[i, i]
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(max(i, j), n):
                s += linv[k, i] * linv[k, j]
            out[i, j] = s


@njit(cache=True)
def assemble(F0, F, v, k, out):
    n = F0.shape[1]
    for a in range(n):
        for b in range(n):
            s = F0[k, a, b]
            for j in range(v.shape[0]):
                s += v[j] * F[k, j, a, b]
            out[a, b] = s


@njit(cache=True)
def _barrier_value(F0, F, c, v, t, work, lo):
    nb, n = F0.shape[0], F0.shape[1]
    val = 0.0
    for j in range(v.shape[0]):
        val += t * c[j] * v[j]
    for k in range(nb):
        assemble(F0, F, v, k, work)
        if not _chol(work, n, lo):
            return np.inf
        for i in range(n):
            val -= 2.0 * math.log(lo[i, i])
    return val


@njit(cache=True)
def _solve_spd(h, g, nv):
    # Cholesky solve with diagonal jitter as a fallback
    lo = np.zeros((nv, nv))
    jitter = 0.0
    scale = 0.0
    for i in range(nv):
        scale = max(scale, abs(h[i, i]))
    hh = h.copy()
    for _ in range(12):
        for i in range(nv):
            hh[i, i] = h[i, i] + jitter
        if _chol(hh, nv, lo):
            break
        jitter = max(jitter * 100.0, 1e-14 * max(scale, 1e-300))
    y = np.zeros(nv)
    for i in range(nv):
        s = g[i]
        for k in range(i):
            s -= lo[i, k] * y[k]
        y[i] = s / lo[i, i]
    x = np.zeros(nv)
    for i in range(nv - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, nv):
            s -= lo[k, i] * x[k]
        x[i] = s / lo[i, i]
    return x


@njit(cache=True)
def _derivs(F0, F, c, v, t, work, lo, sinv, G, grad, H):
    """Gradient and Hessian of the barrier objective; leaves block inverses in sinv."""
    nb, nv, n = F.shape[0], F.shape[1], F.shape[2]
    for j in range(nv):
        grad[j] = t * c[j]
        for i in range(nv):
            H[j, i] = 0.0
    for k in range(nb):
        assemble(F0, F, v, k, work)
        _chol(work, n, lo)
        _chol_inverse(lo, n, sinv[k])
        for j in range(nv):
            for a in range(n):
                for b in range(n):
                    s = 0.0
                    for q in range(n):
                        s += sinv[k, a, q] * F[k, j, q, b]
                    G[j, a, b] = s
            tr = 0.0
            for a in range(n):
                tr += G[j, a, a]
            grad[j] -= tr
        for i in range(nv):
            for j in range(i, nv):
                s = 0.0
                for a in range(n):
                    for b in range(n):
                        s += G[i, a, b] * G[j, b, a]
                H[i, j] += s
    for i in range(nv):
        for j in range(i):
            H[i, j] = H[j, i]


@njit(cache=True)
def dual_certificate(F0, F, c, v, t):
    """Dual matrices W_k = (L^-1 - L^-1 dL L^-1)/t built from the Newton step.

    They satisfy the dual equality constraints exactly; they are positive
    semidefinite whenever the Newton decrement is below one.
    """
    nb, nv, n = F.shape[0], F.shape[1], F.shape[2]
    work = np.zeros((n, n))
    lo = np.zeros((n, n))
    sinv = np.zeros((nb, n, n))
    G = np.zeros((nv, n, n))
    grad = np.zeros(nv)
    H = np.zeros((nv, nv))
    _derivs(F0, F, c, v, t, work, lo, sinv, G, grad, H)
    dv = _solve_spd(H, -grad, nv)
    W = np.zeros((nb, n, n))
    dl = np.zeros((n, n))
    for k in range(nb):
        for a in range(n):
            for b in range(n):
                s = 0.0
                for j in range(nv):
                    s += dv[j] * F[k, j, a, b]
                dl[a, b] = s
        tmp = sinv[k] @ dl @ sinv[k]
        for a in range(n):
            for b in range(n):
                W[k, a, b] = (sinv[k, a, b] - tmp[a, b]) / t
    return W


@njit(cache=True)
def barrier_solve(F0, F, c, v0, t0, mu, gap_target, max_newton, stop_below):
    """Path-following barrier method.

    Returns (v, t, newton_steps, status).  ``stop_below`` ends the run as soon
    as the objective drops below it (used by phase I).
    """
    nb, nv, n = F.shape[0], F.shape[1], F.shape[2]
    m_total = nb * n
    v = v0.copy()
    work = np.zeros((n, n))
    lo = np.zeros((n, n))
    sinv = np.zeros((nb, n, n))
    G = np.zeros((nv, n, n))
    grad = np.zeros(nv)
    H = np.zeros((nv, nv))
    t = t0
    fv = _barrier_value(F0, F, c, v, t, work, lo)
    if not np.isfinite(fv):
        return v, t, 0, NOT_INTERIOR
    steps = 0
    while True:
        # centering
        while True:
            _derivs(F0, F, c, v, t, work, lo, sinv, G, grad, H)
            neg = -grad
            dv = _solve_spd(H, neg, nv)
            lam2 = 0.0
            for j in range(nv):
                lam2 -= grad[j] * dv[j]
            if lam2 * 0.5 <= 1e-9:
                break
            if steps >= max_newton:
                return v, t, steps, MAX_ITER
            steps += 1
            step = 1.0
            vn = v.copy()
            fn = np.inf
            while step > 1e-16:
                for j in range(nv):
                    vn[j] = v[j] + step * dv[j]
                fn = _barrier_value(F0, F, c, vn, t, work, lo)
                if fn <= fv - 0.01 * step * lam2:
                    break
                step *= 0.5
            if not fn < fv:
                # no progress possible in floating point; treat as centred
                break
            v[:] = vn
            fv = fn
            obj = 0.0
            for j in range(nv):
                obj += c[j] * v[j]
            if obj < stop_below:
                return v, t, steps, STOPPED
        if m_total / t <= gap_target:
            return v, t, steps, OPTIMAL
        t *= mu
        fv = _barrier_value(F0, F, c, v, t, work, lo)
