import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from gsp2p import conic_kernel as ck
from gsp2p import p2p_synthesis as ps
from gsp2p.errors import KernelError
from gsp2p.system_model import aggregate_fleet

# scipy solution for A = [[0, 1], [-1, -1]], alpha = 0.5, E = [0, 1]
LYAP_FROZEN = np.array([[2.4615384615384617, -0.6153846153846154], [-0.6153846153846155, 2.1538461538461537]])
A_REF = np.array([[0.0, 1.0], [-1.0, -1.0]])
E_REF = np.array([0.0, 1.0])


def hurwitz(draw_vals, n):
    m = np.array(draw_vals).reshape(n, n)
    return m - (max(0.0, ck.spectral_abscissa(m)) + 0.5) * np.eye(n)


mat2 = st.lists(st.floats(-3, 3), min_size=4, max_size=4)
mat3 = st.lists(st.floats(-3, 3), min_size=9, max_size=9)


def test_lyapunov_frozen_value():
    assert np.allclose(ck.solve_lyapunov(A_REF, 0.5, E_REF), LYAP_FROZEN, rtol=1e-12, atol=1e-14)


@given(mat2, st.floats(0.05, 0.95), st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_lyapunov_matches_scipy_2x2(vals, frac, e):
    a = hurwitz(vals, 2)
    if np.linalg.norm(e) < 1e-3:
        e = [1.0, 0.0]
    alpha = frac * ck.alpha_upper(a)
    p = ck.solve_lyapunov(a, alpha, e)
    ref = oracles.lyapunov(a, alpha, e)
    assert np.allclose(p, ref, rtol=1e-7, atol=1e-9 * max(1.0, np.abs(ref).max()))
    assert ck.lyapunov_residual(a, alpha, e, p) <= 1e-10 * max(1.0, np.abs(p).max() * np.abs(a).max())


@given(mat3, st.floats(0.05, 0.95))
def test_lyapunov_matches_scipy_3x3(vals, frac):
    a = hurwitz(vals, 3)
    e = [1.0, -0.5, 0.25]
    alpha = frac * ck.alpha_upper(a)
    p = ck.solve_lyapunov(a, alpha, e)
    ref = oracles.lyapunov(a, alpha, e)
    assert np.allclose(p, ref, rtol=1e-6, atol=1e-9 * max(1.0, np.abs(ref).max()))


@given(st.floats(0.1, 10.0))
def test_lyapunov_scales_with_square_of_disturbance(c):
    p1 = ck.solve_lyapunov(A_REF, 0.5, E_REF)
    pc = ck.solve_lyapunov(A_REF, 0.5, c * E_REF)
    assert np.allclose(pc, c * c * p1, rtol=1e-12)


@pytest.mark.parametrize("alpha", [0.0, -1.0, 1.0, 2.0])
def test_lyapunov_alpha_out_of_range(alpha):
    # alpha_upper(A_REF) = 1
    with pytest.raises(KernelError, match="alpha out of range"):
        ck.solve_lyapunov(A_REF, alpha, E_REF)


def test_alpha_upper_is_twice_decay_rate():
    assert ck.alpha_upper(A_REF) == pytest.approx(1.0, rel=1e-14)


def test_golden_section_on_parabola():
    x, fx = ck.golden_section(lambda v: (v - 0.3) ** 2, 0.0, 1.0, 1e-10)
    assert x == pytest.approx(0.3, abs=1e-9)
    assert fx <= 1e-18


def test_min_trace_beats_local_probes():
    res = ck.min_trace_alpha_search(A_REF, E_REF, ps.C_PERF)
    phi = lambda al: float(oracles.lyapunov(A_REF, al, E_REF)[0, 0])
    for d in (1e-3, 1e-2, 5e-2):
        for al in (res.alpha_star - d, res.alpha_star + d):
            assert res.value <= phi(al) + 1e-12
    assert res.value == pytest.approx(phi(res.alpha_star), rel=1e-10)


def test_min_trace_against_dense_scan():
    a = np.array([[-0.5, 2.0], [-1.0, -0.8]])
    res = ck.min_trace_alpha_search(a, [0.3, 1.0], ps.C_PERF)
    grid = np.linspace(1e-4, ck.alpha_upper(a) - 1e-4, 20001)
    vals = [oracles.lyapunov(a, al, [0.3, 1.0])[0, 0] for al in grid]
    assert res.value <= min(vals) + 1e-9
    assert res.alpha_star == pytest.approx(grid[int(np.argmin(vals))], abs=1e-3)


def test_min_trace_general_path_matches_fast_path():
    """The 3x3 block path with a decoupled third state reproduces the 2x2 answer."""
    a3 = np.zeros((3, 3))
    a3[:2, :2] = A_REF
    a3[2, 2] = -5.0
    c3 = np.zeros((2, 3))
    c3[:, :2] = ps.C_PERF
    r2 = ck.min_trace_alpha_search(A_REF, E_REF, ps.C_PERF, tol=1e-9)
    r3 = ck.min_trace_alpha_search(a3, [0.0, 1.0, 0.0], c3, tol=1e-9)
    assert r3.value == pytest.approx(r2.value, rel=1e-9)
    assert r3.alpha_star == pytest.approx(r2.alpha_star, abs=1e-6)


def test_min_trace_rejects_unstable():
    with pytest.raises(KernelError, match="unstable"):
        ck.min_trace_alpha_search(np.array([[0.1, 1.0], [-1.0, 0.0]]), E_REF, ps.C_PERF)


def test_initial_state_zero_reduces_to_plain_search():
    plain = ck.min_trace_alpha_search(A_REF, E_REF, ps.C_PERF)
    with_x0 = ck.solve_min_trace_with_initial(A_REF, E_REF, ps.C_PERF, [0.0, 0.0])
    assert with_x0.value == pytest.approx(plain.value, rel=1e-6)


def test_initial_state_is_contained():
    x0 = np.array([0.5, 2.0])
    res = ck.solve_min_trace_with_initial(A_REF, E_REF, ps.C_PERF, x0)
    assert float(x0 @ np.linalg.solve(res.p_star, x0)) <= 1.0 + 1e-7
    plain = ck.min_trace_alpha_search(A_REF, E_REF, ps.C_PERF)
    assert res.value >= plain.value - 1e-9


def test_initial_state_must_be_finite():
    with pytest.raises(KernelError):
        ck.solve_min_trace_with_initial(A_REF, E_REF, ps.C_PERF, [np.nan, 0.0])


@pytest.fixture(scope="module")
def fixture_sdp(fleet):
    agg = aggregate_fleet(fleet)
    g = ps.ControllerGain()
    ss = ps.build_state_space(agg, g)
    shift = ps.make_shift(agg, g, 0.6)
    e_t = ps.shifted_disturbance_matrix(ss, g, shift)
    c, b2 = ps.performance_matrices(0.5)
    hi = ck.alpha_upper(ss.a)

    def build(al):
        return ck.SdpProblem(ss.a, ss.b1, e_t, al, c, b2, x0=shift.x0_shifted, k_init=g.row)

    return build, hi


@pytest.mark.parametrize("frac", [0.2, 0.5, 0.8])
def test_sdp_matches_cvxpy(fixture_sdp, frac):
    build, hi = fixture_sdp
    prob = build(frac * hi)
    sol = ck.solve_p2p_sdp(prob)
    ref, p_ref, y_ref = oracles.p2p_sdp(prob.a, prob.b1, prob.e_tilde, prob.alpha, prob.c, prob.b2, prob.x0)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(ref, rel=1e-6)
    # the optimum is flat in the gain direction, so the gain agrees less tightly than the value
    assert np.allclose(sol.gain, y_ref @ np.linalg.inv(p_ref), rtol=1e-3)


def test_sdp_certificate(fixture_sdp):
    build, hi = fixture_sdp
    prob = build(0.5 * hi)
    sol = ck.solve_p2p_sdp(prob)
    n = 2
    lyap = prob.a @ sol.p + sol.p @ prob.a.T + prob.alpha * sol.p + prob.b1 @ sol.y + (prob.b1 @ sol.y).T
    blk = np.block([[lyap, prob.e_tilde.reshape(n, 1)], [prob.e_tilde.reshape(1, n), -prob.alpha * np.eye(1)]])
    assert np.linalg.eigvalsh(blk).max() <= ck.EIG_SLACK
    assert ck.is_psd(np.block([[np.array([[sol.z]]), sol.y], [sol.y.T, sol.p]]))
    x0 = prob.x0.reshape(n, 1)
    assert ck.is_psd(np.block([[np.eye(1), x0.T], [x0, sol.p]]))
    assert abs(sol.kkt_residuals["gap"]) <= ck.GAP_TOL * max(1.0, abs(sol.objective))
    assert sol.objective == pytest.approx(sol.dual_objective, rel=1e-9)


def test_sdp_is_deterministic_and_start_independent(fixture_sdp):
    build, hi = fixture_sdp
    prob = build(0.4 * hi)
    a, b = ck.solve_p2p_sdp(prob), ck.solve_p2p_sdp(prob)
    assert a.objective == b.objective and np.array_equal(a.p, b.p)
    # an infeasible start goes through phase one and reaches the same optimum
    p_big = 10 * a.p + np.eye(2)
    start = ck.pack_start(p_big, a.gain @ p_big, float((a.gain @ p_big @ a.gain.T)[0, 0]) + 5.0)
    c = ck.solve_p2p_sdp(prob, start=start)
    assert c.status == "optimal"
    assert c.objective == pytest.approx(a.objective, rel=1e-8)


def test_sdp_control_weight_required():
    prob = ck.SdpProblem(A_REF, np.array([[0.0], [1.0]]), E_REF, 0.5, ps.C_PERF, np.zeros((2, 1)))
    with pytest.raises(KernelError, match="unbounded"):
        ck.solve_p2p_sdp(prob)


def test_sdp_alpha_must_be_positive(fixture_sdp):
    build, _ = fixture_sdp
    with pytest.raises(KernelError):
        ck.solve_p2p_sdp(build(0.0))


def test_sdp_without_control_matches_lyapunov_search():
    """b1 = 0, no x0: the SDP optimum at each alpha is the Lyapunov solution."""
    prob = ck.SdpProblem(A_REF, np.zeros((2, 1)), E_REF, 0.5, ps.C_PERF, np.zeros((2, 1)))
    sol = ck.solve_p2p_sdp(prob)
    assert sol.objective == pytest.approx(LYAP_FROZEN[0, 0], rel=1e-8)


def test_line_search_beats_probes(fixture_sdp):
    build, hi = fixture_sdp
    alpha, sol = ck.sdp_alpha_line_search(build, (0.0, hi))
    for d in (1e-3, 1e-2):
        for al in (alpha - d * hi, alpha + d * hi):
            assert sol.objective <= ck.solve_p2p_sdp(build(al)).objective + 1e-10


def test_line_search_degenerate_range(fixture_sdp):
    build, hi = fixture_sdp
    alpha, sol = ck.sdp_alpha_line_search(build, (0.3 * hi, 0.3 * hi))
    assert alpha == 0.3 * hi
    assert sol.objective == ck.solve_p2p_sdp(build(0.3 * hi)).objective


def test_polish_agrees_with_golden_section(fixture_sdp):
    build, hi = fixture_sdp
    a1, s1 = ck.sdp_alpha_line_search(build, (0.0, hi), polish=False)
    a2, s2 = ck.sdp_alpha_line_search(build, (0.0, hi), polish=True)
    assert a2 == pytest.approx(a1, abs=1e-3 * hi)
    assert s2.objective <= s1.objective + 1e-10 * abs(s1.objective)


def test_alpha_profile_unimodal(fixture_sdp):
    build, hi = fixture_sdp
    _, vals = ck.alpha_profile(build, (0.0, hi), n=15)
    assert np.all(np.isfinite(vals))
    if not ck.is_unimodal(vals):
        warnings.warn("SDP optimum is not unimodal in alpha on the fixture")


def test_is_unimodal():
    assert ck.is_unimodal([3, 2, 1, 2, 5])
    assert ck.is_unimodal([1, 2, 3])
    assert not ck.is_unimodal([1, 3, 2, 4])


def test_is_psd():
    assert ck.is_psd(np.eye(2))
    assert not ck.is_psd(np.diag([1.0, -1e-3]))
    assert math.isclose(ck.spectral_abscissa(np.diag([-1.0, -3.0])), -1.0)
