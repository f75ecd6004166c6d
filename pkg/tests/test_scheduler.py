import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import sg
from gsp2p import cli_io as io
from gsp2p import headroom as hr
from gsp2p import scheduler as sch
from gsp2p.errors import SchedulingError
from gsp2p.p2p_synthesis import ControllerGain
from gsp2p.system_model import ConverterUnit, FleetDescription

DEMAND = [900.0, 1300.0, 1000.0]
WIND = [[200.0, 100.0, 300.0], [150.0, 250.0, 50.0]]


def small_fleet():
    sgs = [sg("a1", m=9.0, rating=800.0, group="a", cost_noload=100.0, cost_marginal=20.0, cost_startup=500.0),
           sg("a2", m=9.0, rating=800.0, group="a", cost_noload=120.0, cost_marginal=22.0, cost_startup=400.0),
           sg("b1", m=5.0, rating=400.0, group="b", t=7.0, cost_noload=50.0, cost_marginal=35.0,
              cost_startup=200.0)]
    return FleetDescription(sgs, [ConverterUnit("w0", 300.0), ConverterUnit("w1", 300.0)], p_base=2000.0,
                            f_base=50.0, disturbance=200.0)


def small_curve(k=(-2e-5, -3e-5), k0=0.06):
    return hr.HeadroomCurve(np.array(k), k0, 1.0, [], ("a", "b"), 2000.0)


def instance(mode, init=None, curve=None, gain=None, limits=sch.Limits()):
    kw = {}
    if mode is sch.Mode.PROPOSED:
        kw["curve"] = curve or small_curve()
    if mode is sch.Mode.RELAXED:
        kw["fixed_gain"] = gain or ControllerGain(-0.05, -0.05)
    return sch.UcInstance(small_fleet(), DEMAND, WIND, mode=mode, limits=limits, initial_commitment=init, **kw)


def oracle_value(inst):
    reserve = None
    if inst.mode is sch.Mode.RELAXED:
        reserve = sch.relaxed_reserve(inst.fixed_gain, inst.fleet, inst.limits)
    return oracles.brute_force_uc(inst, inst.curve, reserve)


@pytest.mark.parametrize("backend", ["highs", "bnb"])
@pytest.mark.parametrize("mode", list(sch.Mode))
@pytest.mark.parametrize("init", [None, [True, False, False]])
def test_matches_exhaustive_enumeration(mode, backend, init):
    inst = instance(mode, init)
    sol = sch.solve_uc(inst, gap_tol=1e-9, backend=backend)
    ref = oracle_value(inst)
    assert np.isfinite(ref)
    assert sol.objective == pytest.approx(ref, rel=1e-7)
    assert sol.balance_residual(inst.demand) <= 1e-6
    # the reported commitment achieves the reported objective
    assert oracles.uc_dispatch_lp(inst, sol.commitment, inst.curve, sch.relaxed_reserve(
        inst.fixed_gain, inst.fleet, inst.limits) if mode is sch.Mode.RELAXED else None) + \
        oracles.commitment_cost(inst, sol.commitment) == pytest.approx(sol.objective, rel=1e-7)


def test_frequency_modes_cost_more():
    base = sch.solve_uc(instance(sch.Mode.BASE))
    prop = sch.solve_uc(instance(sch.Mode.PROPOSED))
    assert prop.cost >= base.cost - 1e-6
    for t in range(3):
        assert prop.headroom_total[t] >= prop.required_headroom[t] - 1e-6


def test_single_unit_single_period():
    fl = FleetDescription([sg("g", rating=100.0, cost_marginal=10.0, cost_noload=5.0)], [], p_base=100.0,
                          disturbance=10.0)
    sol = sch.solve_uc(sch.UcInstance(fl, [50.0], np.zeros((0, 1))))
    assert sol.commitment[0, 0]
    assert sol.dispatch[0, 0] == pytest.approx(50.0)
    assert sol.cost == pytest.approx(505.0)


def rows(mode, init=None):
    return len(sch.build_uc(instance(mode, init)).rows)


def test_row_counts():
    G, C, T = 3, 2, 3
    base = T * (1 + 2 * G) + (T - 1) * G
    assert rows(sch.Mode.BASE) == base
    assert rows(sch.Mode.BASE, [True, True, False]) == base + G
    assert rows(sch.Mode.PROPOSED) == base + T * (C + 5)
    assert rows(sch.Mode.RELAXED) == base + 2 * T


def test_trivial_curve_reduces_to_base():
    loose = sch.Limits(0.8, 1e3, 1e3)
    base = sch.solve_uc(instance(sch.Mode.BASE, limits=loose), gap_tol=1e-9)
    prop = sch.solve_uc(instance(sch.Mode.PROPOSED, curve=small_curve((0.0, 0.0), 0.0), limits=loose), gap_tol=1e-9)
    assert prop.objective == pytest.approx(base.objective, rel=1e-9)
    assert np.allclose(prop.headroom, 0.0)


def test_instance_validation():
    fl = small_fleet()
    with pytest.raises(SchedulingError):
        sch.UcInstance(fl, DEMAND, WIND, mode=sch.Mode.PROPOSED)
    with pytest.raises(SchedulingError):
        sch.UcInstance(fl, DEMAND, WIND, curve=small_curve())
    with pytest.raises(SchedulingError):
        sch.UcInstance(fl, [0.0, 1.0, 1.0], WIND)
    with pytest.raises(SchedulingError):
        sch.UcInstance(fl, DEMAND, [[-1.0, 0, 0], [0, 0, 0]])
    with pytest.raises(SchedulingError):
        sch.UcInstance(fl, DEMAND, WIND[:1])
    with pytest.raises(SchedulingError):
        sch.Limits(w_lim_hz=0.0)


def test_presolve_errors():
    fl = small_fleet()
    with pytest.raises(SchedulingError, match="infeasible by construction"):
        sch.build_uc(sch.UcInstance(fl, [5000.0, 1.0, 1.0], WIND))
    with pytest.raises(SchedulingError, match="reserve"):
        sch.build_uc(instance(sch.Mode.RELAXED, gain=ControllerGain(-5.0, -5.0)))
    bad = hr.HeadroomCurve(np.array([0.0, 0.0]), 0.0, 1.0, [], ("x", "y"), 2000.0)
    with pytest.raises(SchedulingError, match="groups"):
        sch.build_uc(instance(sch.Mode.PROPOSED, curve=bad))


def test_infeasible_is_reported():
    # the RoCoF row cannot be met by the whole fleet
    inst = instance(sch.Mode.PROPOSED, limits=sch.Limits(0.8, 0.5, 0.01))
    with pytest.raises(SchedulingError, match="infeasible"):
        sch.solve_uc(inst)
    with pytest.raises(SchedulingError, match="backend"):
        sch.solve_milp(sch.build_uc(instance(sch.Mode.BASE)), backend="cplex")


def test_lp_round_trip_is_byte_stable():
    mdl = sch.build_uc(instance(sch.Mode.PROPOSED, [True, False, True]))
    text = sch.export_lp(mdl)
    back = sch.parse_lp(text)
    assert sch.export_lp(back) == text
    assert back.names == mdl.names and back.binary == mdl.binary
    a = sch.solve_milp(mdl, 1e-9)
    b = sch.solve_milp(back, 1e-9)
    assert a.objective == pytest.approx(b.objective, rel=1e-12)


def test_lp_empty_model(tmp_path):
    text = sch.export_lp(sch.MilpModel(), tmp_path / "e.lp")
    assert (tmp_path / "e.lp").read_text() == text
    assert sch.parse_lp(text).n_vars == 0
    assert sch.solve_milp(sch.MilpModel()).status == "optimal"
    with pytest.raises(SchedulingError, match="End"):
        sch.parse_lp(text.replace("End\n", ""))


def test_model_rejects_bad_bounds():
    mdl = sch.MilpModel()
    with pytest.raises(SchedulingError):
        mdl.add_var("x", 0.0, np.inf)
    with pytest.raises(SchedulingError):
        mdl.add_row("r", {}, "<", 0.0)


@given(st.floats(-2.0, 0.0), st.floats(-2.0, 0.0), st.lists(st.floats(0.0, 100.0), min_size=1, max_size=6))
def test_allocation_is_proportional_and_exact(k1, k2, head):
    if sum(head) <= 0:
        head = head + [1.0]
    gains = sch.allocate_gains(ControllerGain(k1, k2), head)
    assert sum(g.k1 for g in gains) == pytest.approx(k1, abs=1e-15)
    assert sum(g.k2 for g in gains) == pytest.approx(k2, abs=1e-15)
    total = sum(head)
    for g, h in zip(gains, head):
        assert g.k1 == pytest.approx(k1 * h / total, abs=1e-14)


def test_allocation_edge_cases():
    assert sch.allocate_gains(ControllerGain(), [0.0, 0.0]) == [ControllerGain(), ControllerGain()]
    with pytest.raises(SchedulingError):
        sch.allocate_gains(ControllerGain(-1.0, 0.0), [0.0, 0.0])
    with pytest.raises(SchedulingError):
        sch.allocate_gains(ControllerGain(-1.0, 0.0), [1.0, -1.0])


def test_redispatch_at_forecast_is_a_fixed_point():
    inst = instance(sch.Mode.PROPOSED)
    sol = sch.solve_uc(inst, gap_tol=1e-9)
    again = sch.redispatch(sol, inst.wind_available, inst)
    assert again.cost == pytest.approx(sol.cost, rel=1e-7)
    assert np.all(again.load_shed <= 1e-9)
    assert np.all(again.solve_stats["headroom_shortfall"] <= 1e-9)


@settings(max_examples=25)
@given(st.lists(st.floats(0.0, 1.5), min_size=6, max_size=6))
def test_redesigned_gains_never_cost_more(scale):
    inst = instance(sch.Mode.PROPOSED)
    sol = sch.solve_uc(inst, gap_tol=1e-9)
    real = inst.wind_available * np.array(scale).reshape(2, 3)
    case1 = sch.redispatch(sol, real, inst, frozen=False)
    case3 = sch.redispatch(sol, real, inst, frozen=True)
    assert case1.cost <= case3.cost + 1e-6 * max(1.0, case3.cost)
    assert case1.balance_residual(inst.demand) <= 1e-6
    assert case3.balance_residual(inst.demand) <= 1e-6


def test_frozen_shortfall_is_priced():
    inst = instance(sch.Mode.PROPOSED)
    sol = sch.solve_uc(inst, gap_tol=1e-9)
    res = sch.redispatch(sol, np.zeros((2, 3)), inst, frozen=True)
    short = res.solve_stats["headroom_shortfall"]
    assert np.allclose(short, sol.headroom.sum(axis=0))
    assert res.cost >= sch.VOLL * short.sum()


def test_redispatch_input_checks():
    inst = instance(sch.Mode.BASE)
    sol = sch.solve_uc(inst)
    with pytest.raises(SchedulingError):
        sch.redispatch(sol, np.zeros((2, 2)), inst)
    with pytest.raises(SchedulingError):
        sch.redispatch(sol, -np.ones((2, 3)), inst)


def test_solution_is_deterministic():
    a = sch.solve_uc(instance(sch.Mode.PROPOSED))
    b = sch.solve_uc(instance(sch.Mode.PROPOSED))
    assert np.array_equal(a.commitment, b.commitment) and np.array_equal(a.dispatch, b.dispatch)


def test_fixture_schedules_balance_and_order(schedules, study):
    for wmw in study:
        costs = {m: schedules[(wmw, m)][1].cost for m in sch.Mode}
        assert costs[sch.Mode.BASE] <= costs[sch.Mode.PROPOSED] + 1e-6
        assert costs[sch.Mode.PROPOSED] <= costs[sch.Mode.RELAXED] + 1e-6
        for m in sch.Mode:
            inst, sol = schedules[(wmw, m)]
            assert sol.balance_residual(inst.demand) <= 1e-6


def test_fixture_required_headroom_is_tight(schedules, study, synthesizer, fleet):
    """Scheduled headroom covers the synthesized minimum with at most 2% (or 1 MW) to spare."""
    for wmw in study:
        inst, sol = schedules[(wmw, sch.Mode.PROPOSED)]
        for t in range(inst.periods):
            m_mw = synthesizer.sample(sol.operating_point(inst.fleet, t)).m * fleet.p_base
            assert sol.headroom_total[t] >= m_mw - 1e-6
            assert sol.required_headroom[t] <= max(1.02 * m_mw, m_mw + 1.0)


def test_fixture_runtime(study, curve):
    fl, demand, avail = study[max(study)]
    t0 = time.perf_counter()
    sch.solve_uc(sch.UcInstance(fl, demand, avail, mode=sch.Mode.PROPOSED, curve=curve))
    assert time.perf_counter() - t0 <= 60.0


def test_relaxed_reserve_split_by_rating(fleet, limits_pu):
    g = ControllerGain(-1.0, -2.0)
    res = sch.relaxed_reserve(g, fleet, sch.Limits())
    w_lim, _, rocof = limits_pu
    assert res.sum() == pytest.approx((w_lim + 2 * rocof) * fleet.p_base, rel=1e-12)
    assert np.allclose(res / res.sum(), [0.1, 0.2, 0.3, 0.4])


def test_design_gain_is_worst_sample(curve):
    g = io.relaxed_design_gain(curve)
    worst = max(curve.samples, key=lambda s: s.m)
    assert g == worst.gain
