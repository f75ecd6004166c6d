"""
Minimum headroom as a function of the online fleet
==================================================

Sweep every reachable operating point of the fixture, find the least
headroom that keeps the nadir at 0.8 Hz, and fit the linear curve the
scheduler uses.  The sweep takes about half a minute on one core.
"""
import numpy as np

from gsp2p import cli_io as io
from gsp2p import headroom as hr

cfg = io.bundled_fixture()
fleet = io.load_fleet(cfg["fleet"])
w_lim, _, rocof = cfg.limits.pu(fleet.f_base)

# points whose SGs alone break the RoCoF limit are never schedulable
points = io.sweep_points(fleet, "units", rocof)
samples = io.headroom_sweep(fleet, points, w_lim, fleet.dpl_pu)
print(f"{len(samples)} operating points")
for smp in sorted(samples, key=lambda x: -x.m)[:5]:
    print(f"  y = {smp.point.y} MW -> m = {smp.m * fleet.p_base:6.1f} MW")

curve = hr.fit_headroom_curve(samples)
k = np.asarray(curve.k) * fleet.p_base
print(f"m(y) = {k[0]:.4f} yA {k[1]:+.4f} yB {k[2]:+.4f} yC {curve.k0 * fleet.p_base:+.1f} MW, "
      f"R^2 {curve.r_squared:.5f}")
hr.save_curve(curve, "curve.json", fleet.f_base)
print("saved to curve.json")
