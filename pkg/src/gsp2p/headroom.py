"""Minimum IBR headroom as a function of the online SG capacity.

For an operating point ``y`` (online MW per SG group) the effort weight
``b1`` is tuned until the synthesized nadir bound sits on the frequency
limit; the effort bound at that weight is the least headroom ``m(y)`` that
still guarantees the limit.  A linear surrogate ``m ~ k . y + k0`` is then
fitted by ordinary least squares.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import HeadroomError, SynthesisError
from .p2p_synthesis import ControllerGain, SynthesisResult, synthesize_gains
from .system_model import AggregateModel, FleetDescription

log = logging.getLogger(__name__)

BISECT_RTOL = 1e-4
BISECT_MAX = 40
PROBE_FACTOR = math.sqrt(10.0)


@dataclass(frozen=True)
class GroupDynamics:
    """Capacity-weighted per-unit dynamics of one SG group."""
    label: str
    m: float
    d: float
    kr: float  # k_i / r_i
    kfr: float  # k_i f_i / r_i
    t: float
    capacity: float  # MW, all units of the group


def group_dynamics(fleet: FleetDescription) -> list[GroupDynamics]:
    out = []
    for label, idx in fleet.groups().items():
        sgs = [fleet.sgs[i] for i in idx]
        w = np.array([sg.p_rating for sg in sgs])
        cap = float(w.sum())
        w = w / cap
        out.append(GroupDynamics(
            label,
            float(w @ [sg.m_i for sg in sgs]),
            float(w @ [sg.d_i for sg in sgs]),
            float(w @ [sg.k_i / sg.r_i for sg in sgs]),
            float(w @ [sg.k_i * sg.f_i / sg.r_i for sg in sgs]),
            float(w @ [sg.t_i for sg in sgs]),
            cap))
    return out


@dataclass(frozen=True)
class OperatingPoint:
    """Online capacity per SG group, MW, in the fleet's group order.

    Units inside a group are taken as dynamically identical, so the aggregate
    model depends on the commitment only through these totals.
    """
    y: tuple[float, ...]
    groups: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        object.__setattr__(self, "groups", tuple(self.groups))
        if any(v < 0 for v in self.y):
            raise HeadroomError("online capacity must be non-negative")
        if not any(v > 0 for v in self.y):
            raise HeadroomError("at least one SG group must be online")
        if self.groups and len(self.groups) != len(self.y):
            raise HeadroomError("one label per group expected")


def point_aggregate(fleet: FleetDescription, point: OperatingPoint,
                    dyn: Sequence[GroupDynamics] | None = None) -> AggregateModel:
    dyn = dyn or group_dynamics(fleet)
    if len(dyn) != len(point.y):
        raise HeadroomError("operating point does not match the fleet's groups")
    w = np.array(point.y) / fleet.p_base
    tw = float(np.sum(np.array(point.y) * [g.t for g in dyn]) / np.sum(point.y))
    return AggregateModel(
        m_g=float(w @ [g.m for g in dyn]), d_g=float(w @ [g.d for g in dyn]),
        f_g=float(w @ [g.kfr for g in dyn]), r_g=float(w @ [g.kr for g in dyn]), t=tw)


def point_of_commitment(fleet: FleetDescription, commitment: Sequence[bool]) -> OperatingPoint:
    groups = fleet.groups()
    y = [sum(fleet.sgs[i].p_rating for i in idx if commitment[i]) for idx in groups.values()]
    return OperatingPoint(tuple(y), tuple(groups))


@dataclass
class HeadroomSample:
    point: OperatingPoint
    m: float  # p.u. on the fleet base
    b1_at_limit: float
    nadir_bound: float
    synthesis: SynthesisResult | None = field(default=None, repr=False)
    gain: ControllerGain | None = None  # filled from ``synthesis`` when absent

    def __post_init__(self):
        if self.gain is None and self.synthesis is not None:
            self.gain = self.synthesis.gain


@dataclass
class HeadroomCurve:
    k: np.ndarray  # p.u. per MW, one per group
    k0: float  # p.u.
    r_squared: float
    samples: list = field(default_factory=list)
    groups: tuple = ()
    p_base: float = 8000.0
    metadata: dict = field(default_factory=dict)

    def predict(self, y) -> float:
        return float(np.dot(self.k, np.asarray(y, dtype=float)) + self.k0)


def headroom_for_point(point: OperatingPoint, w_lim: float, dPl: float, fleet: FleetDescription,
                       b1_range=(1e-3, 1e3), eps: float = 1e-6, max_iter: int = 80) -> HeadroomSample:
    """Least headroom keeping the nadir bound at ``w_lim`` (all p.u.).

    Probes ``b1`` downward from the top of ``b1_range`` in half-decade steps
    until the nadir bound drops below the limit, then bisects on ``log b1``.
    The returned sample is always the feasible end of the final bracket.
    Each synthesis is warm-started from the gain of the closer bracket end.
    """
    agg = point_aggregate(fleet, point)
    lo, hi = float(b1_range[0]), float(b1_range[1])
    if not 0 < lo < hi:
        raise HeadroomError("b1_range must satisfy 0 < lo < hi")
    cache: dict[float, SynthesisResult] = {}

    def run(b1, start=None):
        if b1 not in cache:
            try:
                res = synthesize_gains(agg, dPl, b1, eps=eps, max_iter=max_iter, k_start=start)
            except SynthesisError as exc:
                raise HeadroomError(f"synthesis failed at b1 = {b1:.4g}: {exc}") from exc
            if not res.converged:
                log.warning("synthesis at b1 = %.4g did not converge", b1)
            cache[b1] = res
        return cache[b1]

    top = run(hi)
    if top.nadir_bound <= w_lim:
        return HeadroomSample(point, 0.0, hi, top.nadir_bound, top)

    upper = top  # nadir bound above the limit
    b_up, b_dn, lower = hi, None, None
    b = hi
    while b > lo:
        b = max(lo, b / PROBE_FACTOR)
        res = run(b, upper.gain)
        if res.nadir_bound <= w_lim and res.converged:
            b_dn, lower = b, res
            break
        b_up, upper = b, res
    if lower is None:
        raise HeadroomError(f"infeasible operating point: nadir bound {upper.nadir_bound:.5g} "
                            f"> limit {w_lim:.5g} even at b1 = {lo:g}")

    ok = True
    for _ in range(BISECT_MAX):
        if w_lim - lower.nadir_bound <= BISECT_RTOL * w_lim:
            break
        mid = math.sqrt(b_up * b_dn)
        res = run(mid, lower.gain)
        slack = 0.1 * BISECT_RTOL * w_lim
        if not (lower.nadir_bound - slack <= res.nadir_bound <= upper.nadir_bound + slack):
            ok = False
            break
        if res.nadir_bound <= w_lim and res.converged:
            b_dn, lower = mid, res
        else:
            b_up, upper = mid, res
    best = lower
    if not ok:
        log.warning("non-monotone nadir bound in b1 at y = %s; scanning b1_range", point.y)
        best = _grid_scan(run, lo, hi, w_lim)
    return HeadroomSample(point, best.effort_bound, best.b1_weight, best.nadir_bound, best)


def _grid_scan(run, lo, hi, w_lim, n=41):
    feas = []
    for b in np.geomspace(hi, lo, n):
        res = run(float(b))
        if res.converged and res.nadir_bound <= w_lim:
            feas.append(res)
    if not feas:
        raise HeadroomError("infeasible operating point: no b1 on the scan meets the limit")
    return min(feas, key=lambda r: r.effort_bound)


def generate_grid(fleet: FleetDescription, groups: Sequence[str] | None = None,
                  levels_per_group: int | Sequence[int] | str = 5, lower: Sequence[float] | None = None
                  ) -> list[OperatingPoint]:
    """Cartesian grid of online capacities per group.

    With an integer (or one integer per group) the levels are evenly spaced
    from ``lower[g]`` (default: one unit's rating) to the full group rating.
    ``levels_per_group="units"`` instead uses every total a commitment can
    produce, zero included, so the grid holds exactly the operating points
    a schedule can reach.  Points that cannot serve demand or violate other
    limits are left for the caller to drop.
    """
    dyn = group_dynamics(fleet)
    labels = [g.label for g in dyn]
    if groups is not None and list(groups) != labels:
        raise HeadroomError("groups must list the fleet's groups in order")
    gidx = fleet.groups()
    if isinstance(levels_per_group, str):
        if levels_per_group != "units":
            raise HeadroomError(f"unknown level rule {levels_per_group!r}")
        axes = []
        for g in labels:
            sums = {0.0}
            for i in gidx[g]:
                sums |= {v + fleet.sgs[i].p_rating for v in sums}
            axes.append(sorted(sums))
    else:
        levels = [levels_per_group] * len(dyn) if isinstance(levels_per_group, int) else list(levels_per_group)
        if len(levels) != len(dyn) or min(levels) < 2:
            raise HeadroomError("need at least two levels for every group")
        if lower is None:
            lower = [min(fleet.sgs[i].p_rating for i in gidx[g]) for g in labels]
        axes = [np.linspace(lo_, g.capacity, n) for lo_, g, n in zip(lower, dyn, levels)]
    pts = [OperatingPoint(tuple(float(v) for v in y), tuple(labels))
           for y in itertools.product(*axes) if any(v > 0 for v in y)]
    if not pts:
        raise HeadroomError("empty grid")
    return pts


def fit_headroom_curve(samples: Sequence[HeadroomSample], min_r2: float = 0.95,
                       active_only: bool = True, conservative: bool = True) -> HeadroomCurve:
    """OLS fit of ``m = k . y + k0``; samples are sorted first so order is irrelevant.

    Points that meet the nadir limit with no headroom at all sit on the flat
    part of ``max(0, k . y + k0)``.  With ``active_only`` they are kept in
    the curve (for the sampled box) but left out of the regression, since
    the scheduling constraint ``u >= k . y + k0`` with ``u >= 0`` already
    reproduces that flat part.

    With ``conservative`` the intercept is raised by the largest positive
    residual so the plane never under-predicts a fitted sample; ``r_squared``
    refers to the plain least-squares plane.
    """
    samples = sorted(samples, key=lambda s: s.point.y)
    if not samples:
        raise HeadroomError("degenerate sampling: no samples")
    ys = [s.point.y for s in samples]
    if len(set(ys)) != len(ys):
        raise HeadroomError("duplicate operating points in the sample set")
    used = [s for s in samples if s.m > 0] if active_only else samples
    ng = len(samples[0].point.y)
    if len(used) < ng + 1:
        raise HeadroomError(f"degenerate sampling: need at least {ng + 1} samples with positive headroom")
    x = np.column_stack([np.array([s.point.y for s in used]), np.ones(len(used))])
    m = np.array([s.m for s in used])
    if np.linalg.matrix_rank(x) < ng + 1:
        raise HeadroomError("degenerate sampling: design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(x, m, rcond=None)
    resid = m - x @ coef
    sst = float(np.sum((m - m.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else 1.0
    r2 = min(1.0, max(0.0, r2))
    if r2 < min_r2:
        raise HeadroomError(f"linear headroom fit too poor: R^2 = {r2:.4f} < {min_r2}")
    lift = max(0.0, float(resid.max())) if conservative else 0.0
    meta = {"max_abs_residual": float(np.abs(resid).max()), "n_samples": len(samples), "n_fitted": len(used),
            "intercept_lift": lift}
    return HeadroomCurve(coef[:-1].copy(), float(coef[-1]) + lift, r2, list(samples), samples[0].point.groups,
                         metadata=meta)


def is_monotone_nonincreasing(samples: Sequence[HeadroomSample], tol: float = 1e-9) -> bool:
    """True when m never rises as one group's capacity grows with the others fixed."""
    by_y = {s.point.y: s.m for s in samples}
    for y, m in by_y.items():
        for g in range(len(y)):
            larger = [(z[g], mz) for z, mz in by_y.items()
                      if z[g] > y[g] and all(z[j] == y[j] for j in range(len(y)) if j != g)]
            if any(mz > m + tol for _, mz in larger):
                return False
    return True


class PointSynthesizer:
    """Cached ``headroom_for_point`` keyed by the online capacities."""

    def __init__(self, fleet: FleetDescription, w_lim: float, dPl: float, **kwargs):
        self.fleet, self.w_lim, self.dPl, self.kwargs = fleet, w_lim, dPl, kwargs
        self.cache: dict[tuple, HeadroomSample] = {}

    def sample(self, point: OperatingPoint) -> HeadroomSample:
        if point.y not in self.cache:
            self.cache[point.y] = headroom_for_point(point, self.w_lim, self.dPl, self.fleet, **self.kwargs)
        return self.cache[point.y]

    def __call__(self, t: int, point: OperatingPoint) -> SynthesisResult:
        return self.sample(point).synthesis


def predict_min_headroom(curve: HeadroomCurve, point: OperatingPoint) -> float:
    """Clamped linear prediction, p.u.; warns outside the sampled box."""
    y = np.asarray(point.y, dtype=float)
    if curve.samples:
        ys = np.array([s.point.y for s in curve.samples])
        if np.any(y < ys.min(axis=0) - 1e-9) or np.any(y > ys.max(axis=0) + 1e-9):
            log.warning("operating point %s lies outside the sampled range", point.y)
    return max(0.0, curve.predict(y))


def curve_to_dict(curve: HeadroomCurve, f_base: float = 50.0) -> dict:
    """SI form of the curve: headroom in MW, nadir bound in Hz, gains in MW/Hz."""
    pb = curve.p_base

    def gain_si(g):
        if g is None:
            return None
        return {"d_c_mw_per_hz": -g.k1 * pb / f_base, "m_c_mws_per_hz": -g.k2 * pb / f_base}

    return {
        "groups": list(curve.groups),
        "k_mw_per_mw": [float(v) * pb for v in curve.k],
        "k0_mw": float(curve.k0) * pb,
        "r_squared": float(curve.r_squared),
        "p_base_mw": float(pb),
        "f_base_hz": float(f_base),
        "metadata": {k: (v * pb if k in ("max_abs_residual", "intercept_lift") else v)
                     for k, v in curve.metadata.items()},
        "samples": [{"y_mw": list(s.point.y), "m_mw": float(s.m) * pb, "b1": float(s.b1_at_limit),
                     "nadir_bound_hz": float(s.nadir_bound) * f_base, "gain": gain_si(s.gain)}
                    for s in curve.samples],
    }


def curve_from_dict(doc: dict) -> HeadroomCurve:
    pb = float(doc.get("p_base_mw", 8000.0))
    fb = float(doc.get("f_base_hz", 50.0))
    groups = tuple(doc.get("groups", ()))

    def gain_pu(g):
        if g is None:
            return None
        return ControllerGain(-g["d_c_mw_per_hz"] * fb / pb, -g["m_c_mws_per_hz"] * fb / pb)

    samples = [HeadroomSample(OperatingPoint(tuple(s["y_mw"]), groups), s["m_mw"] / pb, s["b1"],
                              s["nadir_bound_hz"] / fb, gain=gain_pu(s.get("gain")))
               for s in doc.get("samples", [])]
    meta = {k: (v / pb if k in ("max_abs_residual", "intercept_lift") else v)
            for k, v in dict(doc.get("metadata", {})).items()}
    return HeadroomCurve(np.array(doc["k_mw_per_mw"], dtype=float) / pb, float(doc["k0_mw"]) / pb,
                         float(doc["r_squared"]), samples, groups, pb, meta)


def save_curve(curve: HeadroomCurve, path, f_base: float = 50.0) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(curve_to_dict(curve, f_base), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_curve(path) -> HeadroomCurve:
    with open(path, encoding="utf-8") as fh:
        return curve_from_dict(json.load(fh))


def write_sweep_csv(samples: Sequence[HeadroomSample], path, p_base: float, f_base: float = 50.0) -> None:
    """One row per sample: capacities and headroom in MW, nadir bound in Hz, gain in MW/Hz."""
    samples = sorted(samples, key=lambda s: s.point.y)
    groups = samples[0].point.groups if samples else ()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"y_{g}_MW" for g in groups]
                    + ["m_MW", "b1", "nadir_bound_Hz", "d_c_MW_per_Hz", "m_c_MWs_per_Hz"])
        for s in samples:
            k = s.gain if s.gain is not None else ControllerGain(math.nan, math.nan)
            wr.writerow([f"{v:.10g}" for v in s.point.y]
                        + [f"{s.m * p_base:.10g}", f"{s.b1_at_limit:.10g}", f"{s.nadir_bound * f_base:.10g}",
                           f"{-k.k1 * p_base / f_base:.10g}", f"{-k.k2 * p_base / f_base:.10g}"])
