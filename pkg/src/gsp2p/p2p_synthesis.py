"""Peak-to-peak (invariant-ellipsoid) design of virtual inertia and damping.

The plant is the aggregate SFR model written in the state ``x = [omega,
omega_dot]`` and normalised by the disturbance size, so the disturbance
input is the constant ``eta = 1``.  Because the virtual inertia and damping
enter ``A``, ``B1`` and ``E`` themselves, the SDP is solved repeatedly with
the previous gain frozen inside the plant until the gain stops moving.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import sqrtm

from . import conic_kernel as ck
from .errors import FleetError, KernelError, SynthesisError
from .system_model import AggregateModel

log = logging.getLogger(__name__)

C_PERF = np.array([[1.0, 0.0], [0.0, 0.0]])
E1 = np.array([1.0, 0.0])


@dataclass(frozen=True)
class ControllerGain:
    k1: float = 0.0  # on omega, p.u.
    k2: float = 0.0  # on omega_dot, p.u. s

    @property
    def d_c(self) -> float:
        return -self.k1

    @property
    def m_c(self) -> float:
        return -self.k2

    @property
    def row(self) -> np.ndarray:
        return np.array([[self.k1, self.k2]])

    @classmethod
    def from_row(cls, k) -> "ControllerGain":
        k = np.ravel(k)
        return cls(float(k[0]), float(k[1]))


@dataclass(frozen=True)
class StateSpace:
    a: np.ndarray
    b1: np.ndarray
    e: np.ndarray
    normalized: bool = True

    def closed_loop(self, gain: ControllerGain) -> np.ndarray:
        return self.a + self.b1 @ gain.row


@dataclass(frozen=True)
class CoordinateShift:
    a_scale: float
    x_vec: np.ndarray  # shift per unit disturbance
    x0_shifted: np.ndarray


@dataclass
class SynthesisResult:
    gain: ControllerGain
    p: np.ndarray
    alpha_star: float
    a_star: float
    effort_bound: float
    nadir_bound: float
    iterations: int
    converged: bool
    dpl: float
    b1_weight: float
    shift: CoordinateShift
    history: list = field(default_factory=list)  # gains per iteration, K(0) first
    errors: list = field(default_factory=list)
    a_history: list = field(default_factory=list)
    alpha_history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def performance_matrices(b1_weight: float):
    return C_PERF.copy(), np.array([[0.0], [float(b1_weight)]])


def build_state_space(agg: AggregateModel, gain: ControllerGain = ControllerGain()) -> StateSpace:
    m = agg.m_g + gain.m_c
    if not m > 0:
        raise FleetError("nonphysical inertia: M <= 0")
    d = agg.d_g + gain.d_c
    mt = m * agg.t
    a = np.array([[0.0, 1.0],
                  [-(agg.d_g + agg.r_g) / mt, -(agg.m_g + agg.t * (d + agg.f_g)) / mt]])
    b = np.array([[0.0], [1.0 / mt]])
    return StateSpace(a, b, b.copy())


def initial_state(agg: AggregateModel, gain: ControllerGain) -> np.ndarray:
    """Normalised post-step state [0, omega_dot(0+)] with the total inertia."""
    return np.array([0.0, 1.0 / (agg.m_g + gain.m_c)])


def make_shift(agg: AggregateModel, gain: ControllerGain, a_scale: float) -> CoordinateShift:
    x_vec = np.array([0.0, a_scale / agg.m_g])
    return CoordinateShift(float(a_scale), x_vec, initial_state(agg, gain) - x_vec)


def shifted_disturbance_matrix(ss: StateSpace, gain: ControllerGain, shift: CoordinateShift) -> np.ndarray:
    x = shift.x_vec.reshape(2, 1)
    return ss.a @ x + ss.e + ss.b1 @ gain.row @ x


def find_optimal_scale(agg: AggregateModel, gain: ControllerGain = ControllerGain(), step: float = 0.02,
                       b1_weight: float = 0.0, refine: int = 40, a_tol: float = 1e-9) -> float:
    """Smallest shift scale whose minimal invariant ellipse still holds x~(0).

    Walks ``a`` down from 1 in ``step`` increments; the minimal-trace ellipse of
    the shifted closed loop is recomputed at each ``a``.  The crossing between
    the last two grid points is then bisected (at most ``refine`` halvings,
    down to ``a_tol``) so that ``a*`` varies continuously with the gain.
    ``refine=1`` gives a single bisection level.
    """
    ss = build_state_space(agg, gain)
    a_cl = ss.closed_loop(gain)
    if ck.spectral_abscissa(a_cl) >= 0:
        raise KernelError("unstable open loop: closed-loop A is not Hurwitz")
    c, b2 = performance_matrices(b1_weight)
    c_cl = c + b2 @ gain.row
    g = c_cl.T @ c_cl
    hi = ck.alpha_upper(a_cl)
    a_list = a_cl.tolist()

    def inside(a_scale):
        sh = make_shift(agg, gain, a_scale)
        e_t = shifted_disturbance_matrix(ss, gain, sh)
        _, (p11, p12, p22), _ = ck.min_trace_2x2(a_list, e_t[:, 0].tolist(), g, hi)
        x1, x2 = sh.x0_shifted
        det = p11 * p22 - p12 * p12
        if not det > 0:
            return False
        return (p22 * x1 * x1 - 2.0 * p12 * x1 * x2 + p11 * x2 * x2) / det <= 1.0

    if not inside(1.0):
        log.warning("initial state outside the ellipse already at a = 1; no shrinkage")
        return 1.0
    n = int(round(1.0 / step))
    prev = 1.0
    for i in range(1, n + 1):
        a_scale = max(0.0, 1.0 - i * step)
        if not inside(a_scale):
            out = a_scale
            for _ in range(refine):
                mid = 0.5 * (out + prev)
                if inside(mid):
                    prev = mid
                else:
                    out = mid
                if prev - out <= a_tol:
                    break
            return prev
        prev = a_scale
    return prev


def control_effort_bound(gain: ControllerGain, p, x0, dpl: float = 1.0) -> float:
    """Peak |dP_c| bound: ||K P^1/2|| + |K x0|, scaled back by the disturbance."""
    k = gain.row
    half = np.real(sqrtm(0.5 * (p + p.T)))
    return float((np.linalg.norm(k @ half, 2) + abs(float((k @ np.ravel(x0))[0]))) * dpl)


def nadir_bound(p, dpl: float = 1.0) -> float:
    return float(math.sqrt(max(0.0, float(E1 @ p @ E1))) * dpl)


def relaxed_effort_bound(gain: ControllerGain, p_setpoint: float, w_lim: float, rocof_lim: float) -> float:
    """Triangle-inequality reserve |P_c| + |K1 w_lim| + |K2 rocof_lim|."""
    if not (w_lim > 0 and rocof_lim > 0):
        raise ValueError("limits must be positive")
    return abs(p_setpoint) + abs(gain.k1 * w_lim) + abs(gain.k2 * rocof_lim)


def _iterate(agg, b1_weight, eps, max_iter, step, k_start):
    c, b2 = performance_matrices(b1_weight)
    gain = k_start
    res = dict(history=[gain], errors=[], a_history=[], alpha_history=[])
    converged = False
    sol = shift = None
    alpha = math.nan
    best = None
    k = 0
    for k in range(1, max_iter + 1):
        ss = build_state_space(agg, gain)
        hi = ck.alpha_upper(ss.closed_loop(gain))
        a_star = find_optimal_scale(agg, gain, step, b1_weight)
        shift = make_shift(agg, gain, a_star)
        e_t = shifted_disturbance_matrix(ss, gain, shift)
        k_row = gain.row

        def build(al, ss=ss, e_t=e_t, x0=shift.x0_shifted, k_row=k_row):
            return ck.SdpProblem(ss.a, ss.b1, e_t, al, c, b2, x0=x0, k_init=k_row)

        try:
            alpha, sol = ck.sdp_alpha_line_search(build, (0.0, hi))
        except KernelError as exc:
            raise SynthesisError(f"SDP infeasible at iterate {k}: {exc}") from exc
        if sol.status == "infeasible":
            raise SynthesisError(f"SDP infeasible at iterate {k}")
        new = ControllerGain.from_row(sol.gain)
        err = float(np.max(np.abs(new.row - gain.row)))
        res["history"].append(new)
        res["errors"].append(err)
        res["a_history"].append(a_star)
        res["alpha_history"].append(alpha)
        if best is None or err < best[0]:
            best = (err, new, sol, shift, alpha)
        gain = new
        if err <= eps:
            converged = True
            break
    if not converged:
        _, gain, sol, shift, alpha = best
        log.warning("Algorithm did not converge in %d iterations", max_iter)
    return gain, sol, shift, alpha, k, converged, res


def synthesize_gains(agg: AggregateModel, dPl: float, b1_weight: float, eps: float = 1e-6,
                     max_iter: int = 50, step: float = 0.02, sign_retries: int = 3,
                     k_start: ControllerGain | None = None) -> SynthesisResult:
    """Iterative optimal gain computation with the closed-loop SDP.

    Starts from the open loop, re-solves the SDP with the plant rebuilt at the
    previous gain and stops once the max-norm change is at most ``eps``.
    A gain implying negative virtual inertia or damping triggers a rerun with
    the effort weight doubled, up to ``sign_retries`` times.
    """
    if not b1_weight > 0:
        raise SynthesisError("b1_weight must be positive (zero leaves the gain unbounded)")
    if ck.spectral_abscissa(build_state_space(agg).a) >= 0:
        raise SynthesisError("open loop is not Hurwitz")
    weight = float(b1_weight)
    for attempt in range(sign_retries + 1):
        gain, sol, shift, alpha, k, converged, res = _iterate(agg, weight, eps, max_iter, step, k_start or ControllerGain())
        if gain.d_c >= -1e-9 and gain.m_c >= -1e-9:
            break
        log.warning("gain %s implies negative virtual inertia/damping; doubling b1", gain)
        if attempt == sign_retries:
            raise SynthesisError(f"no sign-admissible gain after {sign_retries} b1 doublings")
        weight *= 2.0
    p = sol.p
    return SynthesisResult(
        gain=gain, p=p, alpha_star=alpha, a_star=shift.a_scale,
        effort_bound=control_effort_bound(gain, p, shift.x_vec, dPl),
        nadir_bound=nadir_bound(p, dPl),
        iterations=k, converged=converged, dpl=dPl, b1_weight=weight, shift=shift,
        diagnostics={"m_total": agg.m_g + gain.m_c, "m_g": agg.m_g, "sdp_gap": sol.kkt_residuals["gap"],
                     "requested_b1": float(b1_weight)},
        **res)


def closed_loop_matrices(agg: AggregateModel, gain: ControllerGain):
    """(A_cl, E) of the true closed loop at ``gain`` (normalised)."""
    ss = build_state_space(agg, gain)
    return ss.closed_loop(gain), ss.e
