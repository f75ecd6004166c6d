import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gsp2p import cli_io as io
from gsp2p import headroom as hr
from gsp2p import scheduler as sch
from gsp2p.system_model import ConverterUnit, FleetDescription, SyncGenerator

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"ACCEPTANCE {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def sg(id_, m=6.0, d=1.0, k=1.0, f=0.3, r=0.05, t=8.0, rating=1000.0, group="", **kw):
    return SyncGenerator(id_, m, d, k, f, r, t, rating, group=group, **kw)


@pytest.fixture(scope="session")
def fixture_cfg():
    return io.bundled_fixture()


@pytest.fixture(scope="session")
def fleet(fixture_cfg):
    return io.load_fleet(fixture_cfg["fleet"])


@pytest.fixture(scope="session")
def limits_pu(fleet):
    return sch.Limits().pu(fleet.f_base)


@pytest.fixture(scope="session")
def sweep(fleet, limits_pu):
    """Headroom samples over every reachable operating point of the fixture."""
    w_lim, _, rocof = limits_pu
    pts = io.sweep_points(fleet, "units", rocof)
    out = io.headroom_sweep(fleet, pts, w_lim, fleet.dpl_pu)
    assert all(isinstance(s, hr.HeadroomSample) for s in out)
    return out


@pytest.fixture(scope="session")
def curve(sweep):
    return hr.fit_headroom_curve(sweep)


@pytest.fixture(scope="session")
def study(fixture_cfg, fleet):
    """(fleet at wind level, demand, available wind) for each fixture wind level."""
    demand = io.load_demand(fixture_cfg["demand"])
    out = {}
    for wmw in fixture_cfg["wind_capacity_mw"]:
        fl = io.scale_converters(fleet, wmw)
        cf = io.load_wind_cf(fixture_cfg["wind"], [c.id for c in fl.converters])
        out[wmw] = (fl, demand, cf * np.array([c.p_rating for c in fl.converters])[:, None])
    return out


@pytest.fixture(scope="session")
def synthesizer(fleet, sweep, limits_pu):
    syn = hr.PointSynthesizer(fleet, limits_pu[0], fleet.dpl_pu)
    for s in sweep:
        syn.cache[s.point.y] = s
    return syn


@pytest.fixture(scope="session")
def schedules(study, curve):
    """Solutions for every wind level and mode of the fixture study."""
    out = {}
    for wmw, (fl, demand, avail) in study.items():
        for mode in sch.Mode:
            kw = {}
            if mode is sch.Mode.PROPOSED:
                kw["curve"] = curve
            elif mode is sch.Mode.RELAXED:
                kw["fixed_gain"] = io.relaxed_design_gain(curve)
            inst = sch.UcInstance(fl, demand, avail, mode=mode, **kw)
            out[(wmw, mode)] = (inst, sch.solve_uc(inst))
    return out


def two_group_fleet(converters=2):
    sgs = [sg("a1", m=9.0, rating=800.0, group="a"), sg("a2", m=9.0, rating=800.0, group="a"),
           sg("b1", m=5.0, rating=400.0, group="b", t=7.0)]
    convs = [ConverterUnit(f"w{i}", 500.0) for i in range(converters)]
    return FleetDescription(sgs, convs, p_base=2000.0, disturbance=200.0)
