"""
Day-ahead scheduling with a headroom constraint
===============================================

Solve the 24-hour fixture with no frequency constraint, with the fitted
headroom curve, and with the fixed-gain relaxation, then replay every hour
of the headroom schedule as a loss event.  Run ``03_headroom_curve.py``
first to reuse its curve; otherwise the sweep is done here.
"""
from pathlib import Path

from gsp2p import cli_io as io
from gsp2p import headroom as hr
from gsp2p import scheduler as sch

cfg = io.bundled_fixture()
fleet = io.load_fleet(cfg["fleet"])
w_lim, _, rocof = cfg.limits.pu(fleet.f_base)

if Path("curve.json").is_file():
    curve = hr.load_curve("curve.json")
else:
    samples = io.headroom_sweep(fleet, io.sweep_points(fleet, "units", rocof), w_lim, fleet.dpl_pu)
    curve = hr.fit_headroom_curve(samples)

wind_mw = 3000.0
fl = io.scale_converters(fleet, wind_mw)
demand = io.load_demand(cfg["demand"])
cf = io.load_wind_cf(cfg["wind"], [c.id for c in fl.converters])
avail = cf * [[c.p_rating] for c in fl.converters]

sols = {}
for mode, kw in ((sch.Mode.BASE, {}), (sch.Mode.PROPOSED, {"curve": curve}),
                 (sch.Mode.RELAXED, {"fixed_gain": io.relaxed_design_gain(curve)})):
    inst = sch.UcInstance(fl, demand, avail, mode=mode, **kw)
    sols[mode] = (inst, sch.solve_uc(inst))
    sol = sols[mode][1]
    print(f"{mode.value:16s} cost {sol.cost:12.0f}, headroom {sol.headroom_total.sum():7.0f} MWh, "
          f"unit-hours {int(sol.commitment.sum())}")

# replay each hour: synthesize at the scheduled point and simulate the loss
inst, sol = sols[sch.Mode.PROPOSED]
syn = hr.PointSynthesizer(fl, w_lim, fleet.dpl_pu)
checks = sch.verify_schedule(sol, inst, syn)
worst = max(checks, key=lambda c: c.nadir_hz)
print(f"worst hour {worst.t}: nadir {worst.nadir_hz:.4f} Hz, injection {worst.injection_mw:.1f} MW "
      f"of {worst.headroom_mw:.1f} MW held; all hours ok: {all(c.ok for c in checks)}")
