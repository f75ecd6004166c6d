"""
Frequency response of the fixture fleet
=======================================

Aggregate the bundled ten-unit fleet into the second-order frequency model,
compare the closed-form nadir with a simulation, and see what happens when
fewer units are online.
"""
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from gsp2p import cli_io as io
from gsp2p.p2p_synthesis import ControllerGain
from gsp2p.simulator import simulate_aggregate, trace_metrics
from gsp2p.system_model import aggregate_fleet, analytic_nadir, closed_loop_params, nadir_time

cfg = io.bundled_fixture()
fleet = io.load_fleet(cfg["fleet"])
f0 = fleet.f_base

# everything on: the loss of 800 MW stays inside the 0.8 Hz limit
agg = aggregate_fleet(fleet)
p = closed_loop_params(agg)
print(f"all units: omega_n {p.omega_n:.3f} rad/s, zeta {p.zeta:.3f}")
print(f"  closed-form nadir {analytic_nadir(p, agg, fleet.dpl_pu) * f0:.4f} Hz "
      f"at t = {nadir_time(p, agg.t):.3f} s")
tr_all = simulate_aggregate(agg, ControllerGain(), fleet.dpl_pu)
print(f"  simulated nadir   {trace_metrics(tr_all).nadir * f0:.4f} Hz")

# a light commitment: six units, less inertia, deeper nadir
on = [sg.id in ("A1", "A2", "A3", "B1", "B2", "C1") for sg in fleet.sgs]
low = aggregate_fleet(fleet, on)
p_low = closed_loop_params(low)
tr_low = simulate_aggregate(low, ControllerGain(), fleet.dpl_pu)
print(f"six units: nadir {analytic_nadir(p_low, low, fleet.dpl_pu) * f0:.4f} Hz, "
      f"limit {cfg.limits.w_lim_hz} Hz")

fig, ax = plt.subplots(figsize=(6, 3.5))
ax.plot(tr_all.t, -tr_all.omega * f0, label="all units")
ax.plot(tr_low.t, -tr_low.omega * f0, label="six units")
ax.axhline(-cfg.limits.w_lim_hz, color="k", ls="--", lw=0.8)
ax.set_xlabel("time (s)")
ax.set_ylabel("frequency deviation (Hz)")
ax.legend()
fig.tight_layout()
fig.savefig("01_frequency_response.png", dpi=120)
