"""Dense Lyapunov solves, alpha line searches and the small SDPs of the
invariant-ellipsoid design.

Matrices are plain symmetric ``numpy`` arrays.  The SDPs are solved by the
barrier kernel in ``_lmi``; no external conic solver is involved.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from . import _lmi
from .errors import KernelError

log = logging.getLogger(__name__)

GOLDEN_TOL = 1e-6
GAP_TOL = 1e-9
EIG_SLACK = 1e-8
MAX_NEWTON = 200
# the path is followed past the acceptance gap so gains settle below 1e-6
BARRIER_GAP = 1e-11
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def is_psd(p, tol=EIG_SLACK) -> bool:
    return bool(np.linalg.eigvalsh(0.5 * (p + p.T)).min() >= -tol)


def spectral_abscissa(a) -> float:
    return float(np.linalg.eigvals(a).real.max())


def alpha_upper(a) -> float:
    """Upper end of the admissible decay-rate interval, -2 max Re of the spectrum of A."""
    return -2.0 * spectral_abscissa(a)


@functools.lru_cache(maxsize=None)
def _triu(n):
    return np.triu_indices(n)


@functools.lru_cache(maxsize=None)
def _sym_basis(n):
    basis = []
    for i in range(n):
        for j in range(i, n):
            s = np.zeros((n, n))
            s[i, j] = s[j, i] = 1.0
            s.flags.writeable = False
            basis.append(s)
    return tuple(basis)


def _sym_from_vec(x, n):
    p = np.zeros((n, n))
    iu = _triu(n)
    p[iu] = x
    p.T[iu] = x
    return p


def _lyap_sym(a_hat, q):
    """Solve a_hat P + P a_hat^T = -q for symmetric P."""
    n = a_hat.shape[0]
    if n == 2:
        # closed-form 3x3 system in (p11, p12, p22)
        a, b, c, d = a_hat[0, 0], a_hat[0, 1], a_hat[1, 0], a_hat[1, 1]
        m = np.array([[2 * a, 2 * b, 0.0], [c, a + d, b], [0.0, 2 * c, 2 * d]])
        rhs = -np.array([q[0, 0], q[0, 1], q[1, 1]])
    else:
        basis = _sym_basis(n)
        iu = _triu(n)
        m = np.column_stack([(a_hat @ s + s @ a_hat.T)[iu] for s in basis])
        rhs = -q[iu]
    scale = float(np.abs(m).max())
    if not scale > 0 or abs(np.linalg.det(m)) <= 1e-13 * scale ** m.shape[0]:
        raise KernelError("alpha out of range: Lyapunov operator is singular")
    return _sym_from_vec(np.linalg.solve(m, rhs), n)


def _lyap2(a, alpha, e):
    """Scalar closed form of the 2x2 case; returns (p11, p12, p22) or None."""
    h = 0.5 * alpha
    a11, a12, a21, a22 = a[0][0] + h, a[0][1], a[1][0], a[1][1] + h
    e1, e2 = e[0], e[1]
    q1, q2, q3 = e1 * e1 / alpha, e1 * e2 / alpha, e2 * e2 / alpha
    tr = a11 + a22
    det = a11 * a22 - a12 * a21
    if not (tr < 0 and det > 0):
        return None
    # Cramer on [[2a11, 2a12, 0], [a21, tr, a12], [0, 2a21, 2a22]] p = -q
    r1, r2, r3 = -q1, -q2, -q3
    dd = 4.0 * tr * det
    x = (r1 * (tr * 2 * a22 - 2 * a12 * a21) - 2 * a12 * (r2 * 2 * a22 - a12 * r3)) / dd
    y = (2 * a11 * (r2 * 2 * a22 - a12 * r3) - r1 * (a21 * 2 * a22)) / dd
    z = (2 * a11 * (tr * r3 - 2 * a21 * r2) - 2 * a12 * (a21 * r3) + r1 * 2 * a21 * a21) / dd
    return x, y, z


def solve_lyapunov(a, alpha: float, e):
    """P solving  A P + P A^T + alpha P + (1/alpha) E E^T = 0."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    e = np.asarray(e, dtype=float).reshape(a.shape[0], -1)
    if not alpha > 0:
        raise KernelError("alpha out of range: alpha must be positive")
    a_hat = a + 0.5 * alpha * np.eye(a.shape[0])
    if spectral_abscissa(a_hat) >= 0:
        raise KernelError("alpha out of range: A + alpha/2 I is not Hurwitz")
    return _lyap_sym(a_hat, e @ e.T / alpha)


def lyapunov_residual(a, alpha, e, p) -> float:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    e = np.asarray(e, dtype=float).reshape(a.shape[0], -1)
    r = a @ p + p @ a.T + alpha * p + e @ e.T / alpha
    return float(np.linalg.norm(r))


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float = GOLDEN_TOL):
    """Minimise a unimodal ``f`` on the open interval (lo, hi).

    Only interior points are evaluated.  Returns ``(x, f(x))`` for the best
    point seen.
    """
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    best = (c, fc) if fc <= fd else (d, fd)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
            if fc < best[1]:
                best = (c, fc)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
            if fd < best[1]:
                best = (d, fd)
    return best


@dataclass(frozen=True)
class AlphaSearch:
    alpha_star: float
    p_star: np.ndarray
    value: float


def min_trace_2x2(a, e, g, hi: float, tol: float = GOLDEN_TOL):
    """Scalar fast path of the alpha search for a 2x2 ``a`` given as nested lists.

    ``g = C' C`` so that tr(C P C') = sum(G * P).  Returns
    ``(alpha, (p11, p12, p22), value)``.
    """
    g11, g12, g22 = float(g[0][0]), float(g[0][1] + g[1][0]), float(g[1][1])

    def phi(alpha):
        sol = _lyap2(a, alpha, e)
        if sol is None:
            return math.inf
        return g11 * sol[0] + g12 * sol[1] + g22 * sol[2]

    alpha, val = golden_section(phi, 0.0, hi, tol)
    sol = _lyap2(a, alpha, e)
    if sol is None:
        raise KernelError("alpha out of range: no admissible decay rate")
    return alpha, sol, val


def min_trace_alpha_search(a, e, c_perf, tol: float = GOLDEN_TOL) -> AlphaSearch:
    """Minimal-trace invariant ellipsoid over the admissible decay rates.

    Minimises ``phi(alpha) = tr(C P(alpha) C^T)`` with ``P(alpha)`` the
    Lyapunov solution, by golden section on (0, -2 max Re of the spectrum of A).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    e = np.asarray(e, dtype=float).reshape(a.shape[0], -1)
    c_perf = np.atleast_2d(np.asarray(c_perf, dtype=float))
    hi = alpha_upper(a)
    if not hi > 0:
        raise KernelError("unstable open loop: A is not Hurwitz")

    if a.shape[0] == 2 and e.shape[1] == 1:
        alpha, (p11, p12, p22), val = min_trace_2x2(a.tolist(), e[:, 0].tolist(), c_perf.T @ c_perf, hi, tol)
        return AlphaSearch(alpha, np.array([[p11, p12], [p12, p22]]), val)
    else:
        def phi(alpha):
            try:
                p = solve_lyapunov(a, alpha, e)
            except KernelError:
                return math.inf
            return float(np.trace(c_perf @ p @ c_perf.T))

    alpha, val = golden_section(phi, 0.0, hi, tol)
    return AlphaSearch(alpha, solve_lyapunov(a, alpha, e), val)


# ---------------------------------------------------------------------------
# small SDPs


@dataclass(frozen=True)
class SdpProblem:
    """Data of the closed-loop peak-to-peak SDP at a fixed decay rate.

    minimise  tr(C P C' + C Y' B2' + B2 Y C' + B2 Z B2')
    s.t.      [[A P + P A' + alpha P + B1 Y + (B1 Y)',  E~], [E~', -alpha I]] <= 0
              [[Z, Y], [Y', P]] >= 0
              [[1, x0'], [x0, P]] >= 0          (only when x0 is given)

    ``Y`` is dropped when ``b1`` is zero, ``Z`` and the coupling block when
    ``b2`` is zero.  ``k_init`` seeds the strictly feasible starting point.
    """
    a: np.ndarray
    b1: np.ndarray
    e_tilde: np.ndarray
    alpha: float
    c: np.ndarray
    b2: np.ndarray
    x0: np.ndarray | None = None
    k_init: np.ndarray | None = None


@dataclass(frozen=True)
class SdpSolution:
    p: np.ndarray
    y: np.ndarray
    z: float
    objective: float
    dual_objective: float
    kkt_residuals: dict
    status: str  # "optimal" | "infeasible" | "max_iter"
    newton_steps: int = 0

    @property
    def gain(self) -> np.ndarray:
        return self.y @ np.linalg.inv(self.p)


@dataclass
class _Layout:
    F0: np.ndarray
    F: np.ndarray
    c: np.ndarray
    n: int
    has_y: bool
    has_z: bool

    def unpack(self, v):
        n = self.n
        k = n * (n + 1) // 2
        p = _sym_from_vec(v[:k], n)
        y = v[k:k + n].reshape(1, n) if self.has_y else np.zeros((1, n))
        z = float(v[-1]) if self.has_z else 0.0
        return p, y, z


def _layout(prob: SdpProblem) -> _Layout:
    a = np.atleast_2d(np.asarray(prob.a, dtype=float))
    n = a.shape[0]
    b1 = np.asarray(prob.b1, dtype=float).reshape(n, 1)
    et = np.asarray(prob.e_tilde, dtype=float).reshape(n, 1)
    cm = np.atleast_2d(np.asarray(prob.c, dtype=float))
    b2 = np.asarray(prob.b2, dtype=float).reshape(cm.shape[0], 1)
    alpha = float(prob.alpha)
    has_y = bool(np.any(b1 != 0))
    has_z = bool(np.any(b2 != 0))
    if has_y and not has_z:
        raise KernelError("control weight B2 = 0 leaves the gain unbounded")
    sb = _sym_basis(n)
    nv = len(sb) + (n if has_y else 0) + (1 if has_z else 0)
    nblk = n + 1
    blocks0 = []
    blocksF = []

    # invariance block, negated so that it reads ">= 0"
    f0 = np.zeros((nblk, nblk))
    f0[:n, n] = f0[n, :n] = -et[:, 0]
    f0[n, n] = alpha
    fj = np.zeros((nv, nblk, nblk))
    for j, s in enumerate(sb):
        fj[j, :n, :n] = -(a @ s + s @ a.T + alpha * s)
    if has_y:
        for i in range(n):
            yi = np.zeros((1, n))
            yi[0, i] = 1.0
            by = b1 @ yi
            fj[len(sb) + i, :n, :n] = -(by + by.T)
    blocks0.append(f0)
    blocksF.append(fj)

    if has_z:
        f0 = np.zeros((nblk, nblk))
        fj = np.zeros((nv, nblk, nblk))
        for j, s in enumerate(sb):
            fj[j, 1:, 1:] = s
        for i in range(n):
            fj[len(sb) + i, 0, 1 + i] = fj[len(sb) + i, 1 + i, 0] = 1.0
        fj[nv - 1, 0, 0] = 1.0
        blocks0.append(f0)
        blocksF.append(fj)

    if prob.x0 is not None:
        x0 = np.asarray(prob.x0, dtype=float).reshape(n)
        f0 = np.zeros((nblk, nblk))
        f0[0, 0] = 1.0
        f0[0, 1:] = f0[1:, 0] = x0
        fj = np.zeros((nv, nblk, nblk))
        for j, s in enumerate(sb):
            fj[j, 1:, 1:] = s
        blocks0.append(f0)
        blocksF.append(fj)

    c = np.zeros(nv)
    for j, s in enumerate(sb):
        c[j] = np.trace(cm @ s @ cm.T)
    if has_y:
        for i in range(n):
            c[len(sb) + i] = 2.0 * float(b2[:, 0] @ cm[:, i])
    if has_z:
        c[nv - 1] = float(b2[:, 0] @ b2[:, 0])
    return _Layout(np.array(blocks0), np.array(blocksF), c, n, has_y, has_z)


def _heuristic_start(prob: SdpProblem, lay: _Layout):
    """Strictly feasible point built from a Lyapunov solve at the seed gain."""
    n = lay.n
    a = np.atleast_2d(np.asarray(prob.a, dtype=float))
    b1 = np.asarray(prob.b1, dtype=float).reshape(n, 1)
    et = np.asarray(prob.e_tilde, dtype=float).reshape(n, 1)
    k0 = np.zeros((1, n)) if prob.k_init is None or not lay.has_y else np.asarray(prob.k_init, float).reshape(1, n)
    a_cl = a + b1 @ k0
    alpha = float(prob.alpha)
    a_hat = a_cl + 0.5 * alpha * np.eye(n)
    if spectral_abscissa(a_hat) >= 0:
        return None
    q = et @ et.T / alpha
    q = q + (0.1 * np.trace(q) + 1e-9) * np.eye(n)
    p = _lyap_sym(a_hat, q)
    if prob.x0 is not None:
        x0 = np.asarray(prob.x0, dtype=float).reshape(n)
        p = p * max(1.0, 2.0 * float(x0 @ np.linalg.solve(p, x0)))
    v = list(p[_triu(n)])
    if lay.has_y:
        v += list((k0 @ p).ravel())
    if lay.has_z:
        v.append(float((k0 @ p @ k0.T)[0, 0]) + 1.0)
    return np.array(v)


def _min_block_eig(lay: _Layout, v) -> float:
    out = math.inf
    work = np.zeros(lay.F0.shape[1:])
    for k in range(lay.F0.shape[0]):
        _lmi.assemble(lay.F0, lay.F, v, k, work)
        out = min(out, float(np.linalg.eigvalsh(work).min()))
    return out


def _phase_one(lay: _Layout, v0):
    """Find a strictly feasible point, or return None when there is none."""
    nb, nv, m = lay.F.shape[0], lay.F.shape[1], lay.F.shape[2]
    n = lay.n
    # the slack column, plus an extra block  R - tr(P) - Z >= 0  so the
    # auxiliary barrier stays bounded below as P and Z grow
    F = np.zeros((nb + 1, nv + 1, m, m))
    F[:nb, :nv] = lay.F
    for k in range(nb):
        F[k, nv] = np.eye(m)
    size = np.zeros(nv)
    for j, s in enumerate(_sym_basis(n)):
        size[j] = np.trace(s)
    if lay.has_z:
        size[nv - 1] = 1.0
    for j in range(nv):
        F[nb, j] = -size[j] * np.eye(m)
    c = np.zeros(nv + 1)
    c[nv] = 1.0
    s0 = max(0.0, -_min_block_eig(lay, v0)) + 1.0
    start = np.append(v0, s0)
    used = float(size @ v0)
    for factor in (1e2, 1e4, 1e6):
        radius = abs(used) + factor * (1.0 + abs(used))
        F0 = np.concatenate([lay.F0, radius * np.eye(m)[None]])
        v, _, _, status = _lmi.barrier_solve(F0, F, c, start, 1.0, 20.0, 1e-10, 400, -1e-7)
        if status == _lmi.STOPPED or v[nv] < -1e-9:
            return v[:nv]
    return None


def _finish(lay: _Layout, v, t, steps, status) -> SdpSolution:
    p, y, z = lay.unpack(v)
    obj = float(lay.c @ v)
    nb, m = lay.F0.shape[0], lay.F0.shape[1]
    work = np.zeros((m, m))
    dual_obj = 0.0
    dual_res = lay.c.copy()
    min_eig = math.inf
    w_min = math.inf
    W = _lmi.dual_certificate(lay.F0, lay.F, lay.c, v, t)
    for k in range(nb):
        _lmi.assemble(lay.F0, lay.F, v, k, work)
        min_eig = min(min_eig, float(np.linalg.eigvalsh(work).min()))
        w_min = min(w_min, float(np.linalg.eigvalsh(W[k]).min()))
        dual_obj -= float(np.sum(lay.F0[k] * W[k]))
        dual_res -= np.einsum("jab,ab->j", lay.F[k], W[k])
    gap = obj - dual_obj
    res = {"primal": max(0.0, -min_eig), "dual": max(float(np.abs(dual_res).max()), max(0.0, -w_min)),
           "gap": gap}
    if (status == _lmi.OPTIMAL and abs(gap) <= GAP_TOL * max(1.0, abs(obj))
            and min_eig >= -EIG_SLACK and w_min >= -EIG_SLACK):
        st = "optimal"
    else:
        st = "max_iter"
    return SdpSolution(p, y, z, obj, dual_obj, res, st, int(steps))


def _objective_only(lay: _Layout, v0) -> float:
    """Barrier run without the certificate; the line search only needs values."""
    if v0 is None or not _min_block_eig(lay, v0) > 0:
        sol = _solve_layout(lay, v0)
        return math.inf if sol.status == "infeasible" else sol.objective
    m_total = lay.F0.shape[0] * lay.F0.shape[1]
    t0 = m_total / max(abs(float(lay.c @ v0)), 1e-6)
    v, _, _, _ = _lmi.barrier_solve(
        lay.F0, lay.F, lay.c, np.asarray(v0, dtype=float), t0, 30.0, BARRIER_GAP, MAX_NEWTON, -math.inf)
    return float(lay.c @ v)


def _solve_layout(lay: _Layout, v0) -> SdpSolution:
    m_total = lay.F0.shape[0] * lay.F0.shape[1]
    if v0 is None or not _min_block_eig(lay, v0) > 0:
        guess = np.zeros(lay.c.shape[0]) if v0 is None else v0
        v0 = _phase_one(lay, guess)
        if v0 is None:
            n = lay.n
            nan = np.full((n, n), np.nan)
            return SdpSolution(nan, np.full((1, n), np.nan), math.nan, math.inf, math.nan,
                               {"primal": math.inf, "dual": math.nan, "gap": math.nan}, "infeasible")
    obj0 = abs(float(lay.c @ v0))
    t0 = m_total / max(obj0, 1e-6)
    v, t, steps, status = _lmi.barrier_solve(
        lay.F0, lay.F, lay.c, np.asarray(v0, dtype=float), t0, 30.0, BARRIER_GAP, MAX_NEWTON, -math.inf)
    return _finish(lay, v, t, steps, status)


def solve_p2p_sdp(prob: SdpProblem, start=None) -> SdpSolution:
    """Solve the closed-loop SDP at fixed alpha.

    ``start`` optionally supplies a strictly feasible packed variable vector
    ``[P upper triangle, Y, Z]``; by default one is constructed from
    ``prob.k_init`` and a phase-I search is the fallback.
    """
    if not prob.alpha > 0:
        raise KernelError("alpha must be positive")
    lay = _layout(prob)
    v0 = np.asarray(start, dtype=float) if start is not None else _heuristic_start(prob, lay)
    return _solve_layout(lay, v0)


def pack_start(p, y=None, z=None):
    """Pack (P, Y, Z) into the solver's variable vector."""
    p = np.asarray(p, dtype=float)
    v = list(p[_triu(p.shape[0])])
    if y is not None:
        v += list(np.ravel(y))
    if z is not None:
        v.append(float(z))
    return np.array(v)


def _objective_and_slope(lay: _Layout, v0):
    """Optimum and its derivative in alpha, or (inf, nan) when infeasible.

    Alpha enters only the invariance block, through ``alpha`` in the corner
    and ``-alpha P`` in the leading block, so by the envelope theorem the
    derivative is ``<W0[:n, :n], P> - W0[n, n]`` with ``W0`` the dual of
    that block.
    """
    if v0 is None or not _min_block_eig(lay, v0) > 0:
        v0 = _phase_one(lay, np.zeros(lay.c.shape[0]) if v0 is None else v0)
        if v0 is None:
            return math.inf, math.nan
    m_total = lay.F0.shape[0] * lay.F0.shape[1]
    t0 = m_total / max(abs(float(lay.c @ v0)), 1e-6)
    v, t, _, _ = _lmi.barrier_solve(
        lay.F0, lay.F, lay.c, np.asarray(v0, dtype=float), t0, 30.0, BARRIER_GAP, MAX_NEWTON, -math.inf)
    w0 = _lmi.dual_certificate(lay.F0, lay.F, lay.c, v, t)[0]
    n = lay.n
    p, _, _ = lay.unpack(v)
    return float(lay.c @ v), float(np.sum(w0[:n, :n] * p) - w0[n, n])


def sdp_alpha_line_search(prob_builder: Callable[[float], SdpProblem], alpha_range, tol: float = GOLDEN_TOL,
                          polish: bool = True):
    """Golden-section search of the SDP optimum over the decay rate.

    Returns ``(alpha_star, solution)``.  A degenerate range ``lo == hi``
    is a single solve at that alpha.  With ``polish`` the golden-section
    point is refined to the zero of the optimum's derivative in alpha
    (taken from the dual certificate).  The optimum is very flat near its
    minimiser while the gain is not, so this is what makes ``alpha_star``,
    and with it the gain, a smooth function of the problem data.
    """
    lo, hi = float(alpha_range[0]), float(alpha_range[1])
    if lo == hi:
        sol = solve_p2p_sdp(prob_builder(lo))
        if sol.status == "infeasible":
            raise KernelError(f"SDP infeasible at alpha = {lo:g}")
        return lo, sol

    def f(alpha):
        prob = prob_builder(alpha)
        lay = _layout(prob)
        return _objective_only(lay, _heuristic_start(prob, lay))

    alpha, val = golden_section(f, lo, hi, tol)
    if not math.isfinite(val):
        raise KernelError("SDP infeasible over the whole alpha interval")
    if polish:
        alpha = _polish_alpha(prob_builder, alpha, lo, hi, tol)
    return alpha, solve_p2p_sdp(prob_builder(alpha))


def _polish_alpha(prob_builder, alpha, lo, hi, tol):
    def slope(al):
        prob = prob_builder(al)
        lay = _layout(prob)
        return _objective_and_slope(lay, _heuristic_start(prob, lay))[1]

    # bracket the stationary point around the golden-section estimate
    step = 2.0 * tol
    a, b = alpha - step, alpha + step
    for _ in range(20):
        if lo < a and b < hi:
            ga, gb = slope(a), slope(b)
            if ga <= 0.0 <= gb:
                break
            if not (math.isfinite(ga) and math.isfinite(gb)):
                return alpha
            if ga > 0.0:
                a -= step
            if gb < 0.0:
                b += step
            step *= 4.0
        else:
            return alpha
    else:
        return alpha
    if ga == 0.0:
        return a
    if gb == 0.0:
        return b
    return float(brentq(slope, a, b, xtol=1e-13, rtol=4 * np.finfo(float).eps))


def alpha_profile(prob_builder, alpha_range, n: int = 20):
    """Objective sampled on ``n`` interior points; used for unimodality checks."""
    lo, hi = alpha_range
    alphas = lo + (hi - lo) * (np.arange(1, n + 1) / (n + 1))
    vals = np.array([solve_p2p_sdp(prob_builder(a)).objective for a in alphas])
    return alphas, vals


def is_unimodal(values, rtol: float = 1e-9) -> bool:
    v = np.asarray(values, dtype=float)
    k = int(np.argmin(v))
    scale = rtol * max(1.0, float(np.abs(v).max()))
    return bool(np.all(np.diff(v[:k + 1]) <= scale) and np.all(np.diff(v[k:]) >= -scale))


def solve_min_trace_with_initial(a, e, c_perf, x0, tol: float = GOLDEN_TOL) -> AlphaSearch:
    """Minimal-trace invariant ellipsoid that also contains ``x0``.

    Per alpha: minimise tr(C P C') subject to the Lyapunov LMI and the Schur
    form of x0' P^-1 x0 <= 1; golden section over alpha outside.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = a.shape[0]
    e = np.asarray(e, dtype=float).reshape(n, 1)
    c_perf = np.atleast_2d(np.asarray(c_perf, dtype=float))
    x0 = np.asarray(x0, dtype=float).reshape(n)
    if not np.all(np.isfinite(x0)):
        raise KernelError("initial state must be finite")
    hi = alpha_upper(a)
    if not hi > 0:
        raise KernelError("unstable open loop: A is not Hurwitz")

    def build(alpha):
        return SdpProblem(a, np.zeros((n, 1)), e, alpha, c_perf, np.zeros((c_perf.shape[0], 1)), x0=x0)

    try:
        alpha, sol = sdp_alpha_line_search(build, (0.0, hi), tol)
    except KernelError as exc:
        raise KernelError(f"initial-state ellipsoid infeasible: {exc}") from exc
    return AlphaSearch(alpha, sol.p, sol.objective)
