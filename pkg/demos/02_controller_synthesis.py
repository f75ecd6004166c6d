"""
Grid-forming gains from the peak-to-peak design
===============================================

Design virtual damping and inertia for the fixture at full commitment, then
check the two guarantees: the invariant ellipse holds the trajectory and the
effort bound holds the injected power.
"""
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from gsp2p import cli_io as io
from gsp2p import p2p_synthesis as ps
from gsp2p.simulator import check_invariance, simulate_aggregate, trace_metrics
from gsp2p.system_model import aggregate_fleet

cfg = io.bundled_fixture()
fleet = io.load_fleet(cfg["fleet"])
agg = aggregate_fleet(fleet)
s = fleet.p_base / fleet.f_base

res = ps.synthesize_gains(agg, fleet.dpl_pu, 0.5)
print(f"{res.iterations} iterations, D_c {res.gain.d_c * s:.1f} MW/Hz, M_c {res.gain.m_c * s:.1f} MWs/Hz")

tr = simulate_aggregate(agg, res.gain, fleet.dpl_pu)
met = trace_metrics(tr)
print(f"nadir:     bound {res.nadir_bound * fleet.f_base:.4f} Hz, simulated {met.nadir * fleet.f_base:.4f} Hz")
print(f"injection: bound {res.effort_bound * fleet.p_base:.2f} MW, simulated {met.max_injection * fleet.p_base:.2f} MW")
print(f"largest x'P^-1x along the trajectory: {check_invariance(tr, res.p, res.shift):.6f}")

# the weight b1 trades nadir against effort
for b1 in (0.25, 0.5, 1.0):
    r = ps.synthesize_gains(agg, fleet.dpl_pu, b1)
    print(f"b1 = {b1:4}: nadir bound {r.nadir_bound * fleet.f_base:.4f} Hz, "
          f"effort bound {r.effort_bound * fleet.p_base:.1f} MW")

# the ellipse in shifted coordinates with the trajectory inside it
th = np.linspace(0, 2 * np.pi, 361)
ell = np.linalg.cholesky(res.p) @ np.vstack([np.cos(th), np.sin(th)])
x = np.column_stack([tr.omega, tr.omega_dot]) / fleet.dpl_pu - res.shift.x_vec
fig, ax = plt.subplots(figsize=(4.5, 4))
ax.plot(ell[0], ell[1], label="invariant ellipse")
ax.plot(x[:, 0], x[:, 1], label="trajectory")
ax.set_xlabel("shifted omega")
ax.set_ylabel("shifted rocof")
ax.legend()
fig.tight_layout()
fig.savefig("02_ellipse.png", dpi=120)
