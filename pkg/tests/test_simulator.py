import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import sg
from gsp2p import p2p_synthesis as ps
from gsp2p.simulator import (SimulationConfig, Trace, check_invariance, initial_rocof_fd, simulate_aggregate,
                             simulate_full, trace_metrics, write_trace_csv)
from gsp2p.system_model import (ConverterUnit, FleetDescription, aggregate_fleet, analytic_nadir,
                                closed_loop_params, frequency_response, steady_state_deviation)

GAIN = ps.ControllerGain(-0.3, -0.5)


@pytest.fixture(scope="module")
def agg(fleet):
    return aggregate_fleet(fleet)


def test_zero_disturbance_gives_zero_trace(agg):
    tr = simulate_aggregate(agg, GAIN, 0.0)
    for arr in (tr.omega, tr.omega_dot, tr.dp_c):
        assert not np.any(arr)
    met = trace_metrics(tr)
    assert met.nadir == 0.0 and met.max_injection == 0.0


def test_open_loop_matches_closed_form(agg):
    tr = simulate_aggregate(agg, ps.ControllerGain(), 0.1)
    p = closed_loop_params(agg)
    exact = frequency_response(p, agg, 0.1, tr.t)
    assert np.max(np.abs(tr.omega - exact)) <= 1e-10


def test_supported_matches_matrix_exponential(agg):
    tr = simulate_aggregate(agg, GAIN, 0.1, SimulationConfig(1e-3, 20.0))
    a, b, m = oracles.sfr_matrices(agg.m_g, agg.d_g, agg.f_g, agg.r_g, agg.t, GAIN.d_c, GAIN.m_c)
    idx = np.arange(0, len(tr.t), 2000)
    ref = oracles.exact_states(a, b, np.array([0.0, 0.1 / m]), 0.1, tr.t[idx])
    assert np.allclose(tr.omega[idx], ref[:, 0], atol=1e-12)
    assert np.allclose(tr.omega_dot[idx], ref[:, 1], atol=1e-12)


def test_global_error_is_fourth_order(agg):
    p = closed_loop_params(agg)
    errs = []
    for dt in (0.2, 0.1, 0.05):
        tr = simulate_aggregate(agg, ps.ControllerGain(), 0.1, SimulationConfig(dt, 80.0))
        errs.append(np.max(np.abs(tr.omega - frequency_response(p, agg, 0.1, tr.t))))
    r1, r2 = errs[0] / errs[1], errs[1] / errs[2]
    assert 13.0 < r1 < 19.0 and 13.0 < r2 < 19.0


def test_halving_dt_changes_nadir_negligibly(agg):
    a = trace_metrics(simulate_aggregate(agg, GAIN, 0.1, SimulationConfig(2e-3)))
    b = trace_metrics(simulate_aggregate(agg, GAIN, 0.1, SimulationConfig(1e-3)))
    assert abs(a.nadir - b.nadir) <= 1e-8 * b.nadir


def test_injection_decomposition(agg):
    tr = simulate_aggregate(agg, GAIN, 0.1)
    assert np.allclose(tr.dp_c, tr.p_d + tr.p_m, rtol=0, atol=1e-16)
    assert np.allclose(tr.p_d, -GAIN.k1 * -tr.omega)
    assert np.allclose(tr.p_m, GAIN.m_c * -tr.omega_dot)


@given(st.floats(0.01, 0.3))
def test_response_is_linear_in_disturbance(dpl):
    from gsp2p.system_model import AggregateModel
    agg = AggregateModel(7.05, 0.795, 4.7475, 16.35, 8.0)
    cfg = SimulationConfig(1e-2, 20.0)
    unit = simulate_aggregate(agg, GAIN, 1.0, cfg)
    tr = simulate_aggregate(agg, GAIN, dpl, cfg)
    assert np.allclose(tr.omega, dpl * unit.omega, rtol=1e-12, atol=1e-16)


def test_full_model_reduces_to_aggregate(fleet, agg):
    """All governors share T and converters act instantly, so both models coincide."""
    n = len(fleet.converters)
    shares = [ps.ControllerGain(GAIN.k1 / n, GAIN.k2 / n)] * n
    full = simulate_full(fleet, None, shares, fleet.dpl_pu)
    agg_tr = simulate_aggregate(agg, GAIN, fleet.dpl_pu)
    assert np.allclose(full.omega, agg_tr.omega, atol=1e-13)
    assert np.allclose(full.dp_c, agg_tr.dp_c, atol=1e-13)


def test_full_model_with_mixed_governors_keeps_steady_state():
    sgs = [sg("a", t=4.0, rating=600.0), sg("b", t=12.0, rating=400.0)]
    fl = FleetDescription(sgs, [ConverterUnit("c", 100.0)], p_base=1000.0, disturbance=100.0)
    tr = simulate_full(fl, None, [GAIN], 0.1, SimulationConfig(1e-3, 150.0))
    ag = aggregate_fleet(fl)
    p = closed_loop_params(ag, GAIN.m_c, GAIN.d_c, allow_overdamped=True)
    assert tr.omega[-1] == pytest.approx(steady_state_deviation(p, ag, 0.1), rel=1e-6)
    # the aggregate with mean T is only an approximation here
    agg_nadir = trace_metrics(simulate_aggregate(ag, GAIN, 0.1)).nadir
    assert trace_metrics(tr).nadir == pytest.approx(agg_nadir, rel=0.1)
    assert trace_metrics(tr).nadir != pytest.approx(agg_nadir, rel=1e-6)


def test_converter_lag(fleet):
    slow = FleetDescription(fleet.sgs, [ConverterUnit(c.id, c.p_rating, t_c=0.05) for c in fleet.converters],
                            fleet.p_base, fleet.f_base, fleet.disturbance)
    n = len(fleet.converters)
    shares = [ps.ControllerGain(GAIN.k1 / n, GAIN.k2 / n)] * n
    fast = trace_metrics(simulate_full(fleet, None, shares, fleet.dpl_pu))
    tr = simulate_full(slow, None, shares, fleet.dpl_pu)
    lag = trace_metrics(tr)
    assert tr.dp_c[0] == 0.0
    assert lag.nadir == pytest.approx(fast.nadir, rel=0.02)


def test_full_model_gain_count(fleet):
    with pytest.raises(ValueError):
        simulate_full(fleet, None, [GAIN], 0.1)


def test_metrics_of_fixture(agg):
    tr = simulate_aggregate(agg, ps.ControllerGain(), 0.1)
    met = trace_metrics(tr)
    p = closed_loop_params(agg)
    assert met.nadir == pytest.approx(analytic_nadir(p, agg, 0.1), rel=1e-9)
    assert met.max_rocof == pytest.approx(0.1 / agg.m_g, rel=1e-12)
    assert initial_rocof_fd(tr) == pytest.approx(0.1 / agg.m_g, rel=1e-6)


def test_peak_interpolation_is_exact_for_parabola():
    t = np.linspace(0, 1, 11)
    y = 1.0 - (t - 0.43) ** 2
    tr = Trace(t, y, y, y, y, y)
    met = trace_metrics(tr)
    assert met.nadir == pytest.approx(1.0, abs=1e-14)
    assert met.t_m == pytest.approx(0.43, abs=1e-14)


def test_empty_trace():
    e = np.array([])
    with pytest.raises(ValueError):
        trace_metrics(Trace(e, e, e, e, e, e))


def test_config_validation_and_horizon():
    with pytest.raises(ValueError):
        SimulationConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimulationConfig(horizon=-1.0)
    assert SimulationConfig(0.01, 30.0).steps_for(8.0) == 8000
    assert SimulationConfig(0.01, 30.0).steps_for(2.0) == 3000


def test_invariance_holds_and_fails_for_a_shrunken_ellipse(fleet, agg):
    res = ps.synthesize_gains(agg, fleet.dpl_pu, 0.5)
    tr = simulate_aggregate(agg, res.gain, fleet.dpl_pu)
    assert check_invariance(tr, res.p, res.shift) <= 1.0 + 1e-6
    assert check_invariance(tr, 0.5 * res.p, res.shift) > 1.0
    zero = simulate_aggregate(agg, res.gain, 0.0)
    assert check_invariance(zero, res.p, res.shift) == 0.0


def test_trace_csv_is_si(tmp_path, agg):
    tr = simulate_aggregate(agg, GAIN, 0.1, SimulationConfig(0.01, 10.0))
    path = tmp_path / "trace.csv"
    write_trace_csv(tr, path, 8000.0, 50.0)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "omega_Hz", "rocof_Hz_s", "dp_c_MW", "p_d_MW", "p_m_MW"]
    assert len(rows) == len(tr.t) + 1
    k = 250
    assert float(rows[k + 1][1]) == pytest.approx(tr.omega[k] * 50.0, rel=1e-9)
    assert float(rows[k + 1][3]) == pytest.approx(tr.dp_c[k] * 8000.0, rel=1e-9)
