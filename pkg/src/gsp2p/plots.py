"""SVG figures drawn only from the CSV tables in a results directory.

Each figure is produced when its source tables exist; ``render_all``
returns the figures it wrote together with the tables behind them.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({"svg.hashsalt": "gsp2p", "figure.figsize": (6.4, 4.0), "axes.grid": True})


def read_table(path) -> dict:
    """Column name -> numpy array when numeric, list of strings otherwise."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for k in (rows[0].keys() if rows else []):
        col = [r[k] for r in rows]
        try:
            out[k] = np.array([float(v) if v != "" else np.nan for v in col])
        except ValueError:
            out[k] = col
    return out


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_ellipse(out: Path):
    e = read_table(out / "synthesize_ellipse.csv")
    tr = read_table(out / "synthesize_trace.csv")
    fig, ax = plt.subplots()
    ax.plot(e["omega_Hz"], e["rocof_Hz_s"], label="invariant ellipse")
    ax.plot(tr["omega_Hz"], tr["rocof_Hz_s"], label="closed-loop trajectory")
    ax.set_xlabel("frequency deviation (Hz)")
    ax.set_ylabel("RoCoF (Hz/s)")
    ax.legend()
    _save(fig, out / "ellipse.svg")


def plot_convergence(out: Path):
    it = read_table(out / "synthesize_iterations.csv")
    fig, (a1, a2) = plt.subplots(2, 1, sharex=True)
    a1.plot(it["iteration"], it["d_c_MW_per_Hz"], "o-", label="D_c")
    a1.plot(it["iteration"], it["m_c_MWs_per_Hz"], "s-", label="M_c")
    a1.set_ylabel("gain (MW/Hz, MWs/Hz)")
    a1.legend()
    err = it["error_MW_per_Hz"]
    ok = np.isfinite(err) & (err > 0)
    a2.semilogy(it["iteration"][ok], err[ok], "o-")
    a2.set_xlabel("iteration")
    a2.set_ylabel("max gain change (MW/Hz)")
    _save(fig, out / "convergence.svg")


def plot_traces(out: Path, limit_hz: float):
    fig, (a1, a2) = plt.subplots(2, 1, sharex=True)
    for name, label in (("open", "no support"), ("supported", "virtual inertia and damping")):
        tr = read_table(out / f"trace_{name}.csv")
        a1.plot(tr["t"], -tr["omega_Hz"], label=label)
        a2.plot(tr["t"], tr["dp_c_MW"], label=label)
    a1.axhline(-limit_hz, color="k", ls="--", lw=1, label="nadir limit")
    a1.set_ylabel("frequency deviation (Hz)")
    a1.legend()
    a2.set_xlabel("time (s)")
    a2.set_ylabel("IBR injection (MW)")
    _save(fig, out / "frequency_traces.svg")


def plot_tradeoff(out: Path):
    t = read_table(out / "tradeoff.csv")
    fig, ax = plt.subplots()
    ax.plot(t["effort_bound_MW"], t["nadir_bound_Hz"], "o-", label="bounds")
    ax.plot(t["sim_injection_MW"], t["sim_nadir_Hz"], "s--", label="simulated")
    ax.set_xlabel("peak injection (MW)")
    ax.set_ylabel("frequency nadir (Hz)")
    ax.legend()
    _save(fig, out / "tradeoff.svg")


def plot_headroom(out: Path):
    t = read_table(out / "headroom_sweep.csv")
    ycols = [k for k in t if k.startswith("y_")]
    fig, axes = plt.subplots(1, len(ycols), sharey=True, figsize=(3.2 * len(ycols), 3.6), squeeze=False)
    for ax, k in zip(axes[0], ycols):
        ax.plot(t[k], t["m_MW"], "o", ms=4)
        ax.set_xlabel(k.replace("_", " "))
    axes[0][0].set_ylabel("minimum headroom (MW)")
    _save(fig, out / "headroom_vs_y.svg")


def plot_costs(out: Path):
    t = read_table(out / "schedule_costs.csv")
    levels = sorted(set(t["wind_capacity_MW"]))
    modes = list(dict.fromkeys(t["mode"]))
    fig, ax = plt.subplots()
    w = 0.8 / max(1, len(modes))
    for j, m in enumerate(modes):
        vals = [t["cost"][i] for i in range(len(t["mode"])) if t["mode"][i] == m]
        ax.bar(np.arange(len(levels)) + j * w, np.array(vals) / 1e3, w, label=m)
    ax.set_xticks(np.arange(len(levels)) + w * (len(modes) - 1) / 2)
    ax.set_xticklabels([f"{v:g} MW" for v in levels])
    ax.set_ylabel("operating cost (thousands)")
    ax.legend()
    _save(fig, out / "costs.svg")


def plot_period_headroom(out: Path):
    t = read_table(out / "schedule_periods.csv")
    levels = sorted(set(t["wind_capacity_MW"]))
    fig, axes = plt.subplots(len(levels), 1, sharex=True, figsize=(6.4, 2.4 * len(levels)), squeeze=False)
    for ax, lv in zip(axes[:, 0], levels):
        for m in dict.fromkeys(t["mode"]):
            sel = [i for i in range(len(t["mode"])) if t["mode"][i] == m and t["wind_capacity_MW"][i] == lv]
            if m == "Base":
                continue
            ax.step(t["t"][sel], t["headroom_MW"][sel], where="post", label=m)
        ax.set_ylabel(f"headroom (MW)\n{lv:g} MW wind")
        ax.legend(fontsize="small")
    axes[-1, 0].set_xlabel("hour")
    _save(fig, out / "headroom_periods.svg")


def plot_redispatch(out: Path):
    t = read_table(out / "redispatch.csv")
    sig = sorted(set(t["sigma_ratio"]))
    fig, ax = plt.subplots()
    data = [t["gap"][t["sigma_ratio"] == s] / 1e3 for s in sig]
    ax.boxplot(data, labels=[f"{s:g}" for s in sig])
    ax.plot(range(1, len(sig) + 1), [d.mean() for d in data], "o-", label="mean")
    ax.set_xlabel("wind forecast sigma / mean")
    ax.set_ylabel("frozen minus re-synthesised cost (thousands)")
    ax.legend()
    _save(fig, out / "redispatch_gap.svg")


FIGURES = [
    ("ellipse.svg", ("synthesize_ellipse.csv", "synthesize_trace.csv"), plot_ellipse),
    ("convergence.svg", ("synthesize_iterations.csv",), plot_convergence),
    ("frequency_traces.svg", ("trace_open.csv", "trace_supported.csv"), None),
    ("tradeoff.svg", ("tradeoff.csv",), plot_tradeoff),
    ("headroom_vs_y.svg", ("headroom_sweep.csv",), plot_headroom),
    ("costs.svg", ("schedule_costs.csv",), plot_costs),
    ("headroom_periods.svg", ("schedule_periods.csv",), plot_period_headroom),
    ("redispatch_gap.svg", ("redispatch.csv",), plot_redispatch),
]


def render_all(out_dir, limit_hz: float = 0.8) -> dict:
    """Draw every figure whose tables are present; maps SVG name to source tables."""
    out = Path(out_dir)
    made = {}
    for name, sources, fn in FIGURES:
        if all((out / s).is_file() for s in sources):
            if fn is None:
                plot_traces(out, limit_hz)
            else:
                fn(out)
            made[name] = list(sources)
    return made
