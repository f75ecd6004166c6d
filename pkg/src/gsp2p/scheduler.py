"""Frequency-constrained unit commitment and the second-stage redispatch.

The day-ahead problem is a MILP over hourly periods.  Binaries are the SG
on/off states; everything else is continuous.  Three variants share the same
core rows:

* ``Base``: energy balance, unit limits and start-up logic only.
* ``ProposedLinear``: adds per-IBR headroom ``u_c`` with ``P_c + u_c <= Pbar_c``
  and the linear headroom curve ``sum_c u_c >= k . y + k0``.
* ``AnalyticRelaxed``: a frozen system gain, split across IBRs, whose
  triangle-inequality reserve must fit under every IBR's available power.

Both frequency-aware variants also carry SG-only RoCoF and steady-state rows.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .errors import SchedulingError
from .headroom import HeadroomCurve, OperatingPoint, point_of_commitment, predict_min_headroom
from .p2p_synthesis import ControllerGain
from .system_model import FleetDescription

log = logging.getLogger(__name__)

# tie-break cost per MW of reserved headroom, so idle wind is not reported as reserve
RESERVE_TIE_BREAK = 1e-3
# penalty per MWh of unserved energy in the redispatch stage
VOLL = 10_000.0


class Mode(str, Enum):
    BASE = "Base"
    PROPOSED = "ProposedLinear"
    RELAXED = "AnalyticRelaxed"


@dataclass(frozen=True)
class Limits:
    w_lim_hz: float = 0.8
    w_ss_lim_hz: float = 0.5
    rocof_lim_hz_s: float = 1.0

    def __post_init__(self):
        for name in ("w_lim_hz", "w_ss_lim_hz", "rocof_lim_hz_s"):
            if not getattr(self, name) > 0:
                raise SchedulingError(f"limit {name} must be positive")

    def pu(self, f_base: float):
        """(w_lim, w_ss_lim, rocof_lim) in p.u. of the nominal frequency."""
        return self.w_lim_hz / f_base, self.w_ss_lim_hz / f_base, self.rocof_lim_hz_s / f_base


@dataclass
class UcInstance:
    fleet: FleetDescription
    demand: np.ndarray  # MW, per period
    wind_available: np.ndarray  # MW, converters x periods
    mode: Mode = Mode.BASE
    limits: Limits = field(default_factory=Limits)
    curve: HeadroomCurve | None = None
    fixed_gain: ControllerGain | None = None
    hours: float = 1.0  # period duration
    initial_commitment: Sequence[bool] | None = None

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.demand = np.asarray(self.demand, dtype=float).ravel()
        self.wind_available = np.atleast_2d(np.asarray(self.wind_available, dtype=float))
        nc = len(self.fleet.converters)
        if nc == 0:
            self.wind_available = np.zeros((0, self.demand.size))
        if self.wind_available.shape != (nc, self.demand.size):
            raise SchedulingError(f"wind_available must be {nc} x {self.demand.size}")
        if not np.all(self.demand > 0):
            raise SchedulingError("demand must be positive in every period")
        if np.any(self.wind_available < 0):
            raise SchedulingError("available wind must be non-negative")
        if (self.mode is Mode.PROPOSED) != (self.curve is not None):
            raise SchedulingError("a headroom curve is required for, and only for, ProposedLinear")
        if (self.mode is Mode.RELAXED) != (self.fixed_gain is not None):
            raise SchedulingError("a fixed gain is required for, and only for, AnalyticRelaxed")
        if self.initial_commitment is not None and len(self.initial_commitment) != len(self.fleet.sgs):
            raise SchedulingError("initial_commitment needs one flag per SG")
        if not self.hours > 0:
            raise SchedulingError("period duration must be positive")

    @property
    def periods(self) -> int:
        return int(self.demand.size)


@dataclass
class MilpModel:
    """Minimise ``c . x`` subject to sparse rows ``a x (<=, >=, =) rhs`` and finite bounds."""
    names: list = field(default_factory=list)
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    cost: list = field(default_factory=list)
    binary: list = field(default_factory=list)
    rows: list = field(default_factory=list)  # (name, {var: coef}, sense, rhs)
    layout: dict = field(default_factory=dict, repr=False)
    instance: UcInstance | None = field(default=None, repr=False)

    def add_var(self, name: str, lb: float, ub: float, cost: float = 0.0, binary: bool = False) -> int:
        if not (math.isfinite(lb) and math.isfinite(ub)) or lb > ub:
            raise SchedulingError(f"variable {name}: bounds must be finite with lb <= ub")
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.cost.append(float(cost))
        self.binary.append(bool(binary))
        return len(self.names) - 1

    def add_row(self, name: str, coefs: dict, sense: str, rhs: float) -> None:
        if sense not in ("<=", ">=", "="):
            raise SchedulingError(f"row {name}: unknown sense {sense!r}")
        if not all(math.isfinite(v) for v in coefs.values()) or not math.isfinite(rhs):
            raise SchedulingError(f"row {name}: coefficients must be finite")
        self.rows.append((name, dict(coefs), sense, float(rhs)))

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def matrices(self):
        """(c, A, row_lo, row_hi, lb, ub, integrality) for the scipy solvers."""
        n = self.n_vars
        data, ri, ci = [], [], []
        lo = np.empty(len(self.rows))
        hi = np.empty(len(self.rows))
        for r, (_, coefs, sense, rhs) in enumerate(self.rows):
            for j, v in coefs.items():
                ri.append(r)
                ci.append(j)
                data.append(v)
            lo[r] = rhs if sense in (">=", "=") else -np.inf
            hi[r] = rhs if sense in ("<=", "=") else np.inf
        a = sparse.csr_matrix((data, (ri, ci)), shape=(len(self.rows), n))
        return (np.array(self.cost), a, lo, hi, np.array(self.lb), np.array(self.ub),
                np.array(self.binary, dtype=int))


@dataclass
class MilpResult:
    x: np.ndarray
    objective: float
    status: str  # "optimal" | "infeasible" | "time_limit" | "error"
    stats: dict


@dataclass
class UcSolution:
    mode: Mode
    commitment: np.ndarray  # bool, SGs x periods
    dispatch: np.ndarray  # MW, SGs x periods
    wind_used: np.ndarray  # MW, converters x periods
    wind_curtailed: np.ndarray
    headroom: np.ndarray  # MW, converters x periods
    headroom_total: np.ndarray  # MW per period
    cost: float  # generation cost, tie-break and penalties excluded
    objective: float
    solve_stats: dict
    required_headroom: np.ndarray | None = None  # MW per period, from the curve
    load_shed: np.ndarray | None = None  # MW per period (redispatch only)
    gains: list | None = None  # per period, list of per-IBR ControllerGain
    checks: list | None = None  # per period ex-post verification records

    def balance_residual(self, demand) -> float:
        shed = 0.0 if self.load_shed is None else self.load_shed
        r = self.dispatch.sum(axis=0) + self.wind_used.sum(axis=0) + shed - np.asarray(demand, dtype=float)
        return float(np.abs(r).max())

    def operating_point(self, fleet: FleetDescription, t: int) -> OperatingPoint:
        return point_of_commitment(fleet, self.commitment[:, t])


# ---------------------------------------------------------------------------
# model building


def relaxed_reserve(gain: ControllerGain, fleet: FleetDescription, limits: Limits) -> np.ndarray:
    """Per-IBR reserve in MW implied by a frozen gain split by IBR rating."""
    w_lim, _, rocof_lim = limits.pu(fleet.f_base)
    share = converter_shares(fleet)
    per_unit = abs(gain.k1) * w_lim + abs(gain.k2) * rocof_lim
    return share * per_unit * fleet.p_base


def converter_shares(fleet: FleetDescription) -> np.ndarray:
    r = np.array([c.p_rating for c in fleet.converters], dtype=float)
    return r / r.sum() if r.size else r


def frequency_rows_rhs(fleet: FleetDescription, limits: Limits):
    """Right-hand sides of the SG-only RoCoF and steady-state rows, in p.u."""
    _, w_ss, rocof = limits.pu(fleet.f_base)
    dpl = fleet.dpl_pu
    return dpl / rocof, dpl / w_ss


def build_uc(instance: UcInstance) -> MilpModel:
    """Assemble the commitment MILP of ``instance``.

    Rows per period, with ``G`` SGs and ``C`` IBRs: one balance row, ``2G``
    unit-limit rows and ``G`` start-up rows (absent in the first period when
    no initial commitment is given).  ``ProposedLinear`` adds ``C`` headroom
    rows, a headroom-sum row, their aggregate, one curve row and the RoCoF
    and steady-state rows, i.e. ``C + 5`` more; ``AnalyticRelaxed`` adds the
    RoCoF and steady-state rows only, its reserve being folded into the
    wind bounds.
    """
    fl = instance.fleet
    T = instance.periods
    G, C = len(fl.sgs), len(fl.converters)
    avail = instance.wind_available
    sg_cap = sum(sg.p_max for sg in fl.sgs)
    for t in range(T):
        if instance.demand[t] > sg_cap + avail[:, t].sum() + 1e-9:
            raise SchedulingError(f"infeasible by construction: demand exceeds total capacity in period {t}")

    reserve = None
    if instance.mode is Mode.RELAXED:
        reserve = relaxed_reserve(instance.fixed_gain, fl, instance.limits)
        short = avail - reserve[:, None]
        if np.any(short < -1e-9):
            c, t = np.argwhere(short < -1e-9)[0]
            raise SchedulingError(f"infeasible by construction: fixed-gain reserve of IBR "
                                  f"{fl.converters[c].id} exceeds its available power in period {t}")

    mdl = MilpModel(instance=instance)
    h = instance.hours
    u = np.empty((G, T), dtype=int)
    p = np.empty((G, T), dtype=int)
    v = np.full((G, T), -1, dtype=int)
    w = np.empty((C, T), dtype=int)
    r = np.full((C, T), -1, dtype=int)
    ubar = np.full(T, -1, dtype=int)
    init = instance.initial_commitment
    for t in range(T):
        for i, sg in enumerate(fl.sgs):
            u[i, t] = mdl.add_var(f"u_{sg.id}_{t}", 0, 1, sg.cost_noload * h, binary=True)
            p[i, t] = mdl.add_var(f"p_{sg.id}_{t}", 0, sg.p_max, sg.cost_marginal * h)
            if t > 0 or init is not None:
                v[i, t] = mdl.add_var(f"v_{sg.id}_{t}", 0, 1, sg.cost_startup)
        for c, cu in enumerate(fl.converters):
            top = avail[c, t] - (reserve[c] if reserve is not None else 0.0)
            w[c, t] = mdl.add_var(f"w_{cu.id}_{t}", 0, max(0.0, top))
            if instance.mode is Mode.PROPOSED:
                r[c, t] = mdl.add_var(f"r_{cu.id}_{t}", 0, avail[c, t], RESERVE_TIE_BREAK * h)
        if instance.mode is Mode.PROPOSED:
            ubar[t] = mdl.add_var(f"ubar_{t}", 0, max(float(avail[:, t].sum()), 0.0))

    if instance.mode is not Mode.BASE:
        m_rhs, ss_rhs = frequency_rows_rhs(fl, instance.limits)
        m_coef = [sg.m_i * sg.p_rating / fl.p_base for sg in fl.sgs]
        ss_coef = [(sg.d_i + sg.k_i / sg.r_i) * sg.p_rating / fl.p_base for sg in fl.sgs]
    if instance.mode is Mode.PROPOSED:
        curve = instance.curve
        labels = list(fl.groups())
        if tuple(labels) != tuple(curve.groups):
            raise SchedulingError("headroom curve groups do not match the fleet")
        gidx = {i: labels.index(sg.group or sg.id) for i, sg in enumerate(fl.sgs)}

    for t in range(T):
        bal = {int(p[i, t]): 1.0 for i in range(G)}
        bal.update({int(w[c, t]): 1.0 for c in range(C)})
        mdl.add_row(f"balance_{t}", bal, "=", instance.demand[t])
        for i, sg in enumerate(fl.sgs):
            mdl.add_row(f"pmin_{sg.id}_{t}", {int(p[i, t]): 1.0, int(u[i, t]): -sg.p_min}, ">=", 0.0)
            mdl.add_row(f"pmax_{sg.id}_{t}", {int(p[i, t]): 1.0, int(u[i, t]): -sg.p_max}, "<=", 0.0)
            if v[i, t] >= 0:
                if t > 0:
                    mdl.add_row(f"start_{sg.id}_{t}", {int(v[i, t]): 1.0, int(u[i, t]): -1.0,
                                                       int(u[i, t - 1]): 1.0}, ">=", 0.0)
                else:
                    mdl.add_row(f"start_{sg.id}_{t}", {int(v[i, t]): 1.0, int(u[i, t]): -1.0},
                                ">=", -float(bool(init[i])))
        if instance.mode is Mode.PROPOSED:
            for c, cu in enumerate(fl.converters):
                mdl.add_row(f"head_{cu.id}_{t}", {int(w[c, t]): 1.0, int(r[c, t]): 1.0}, "<=", avail[c, t])
            row = {int(r[c, t]): 1.0 for c in range(C)}
            row[int(ubar[t])] = -1.0
            mdl.add_row(f"headsum_{t}", row, "=", 0.0)
            # sum of the head rows; redundant, but it tightens the root relaxation
            row = {int(w[c, t]): 1.0 for c in range(C)}
            row[int(ubar[t])] = 1.0
            mdl.add_row(f"headagg_{t}", row, "<=", float(avail[:, t].sum()))
            # ubar >= p_base (k . y + k0), y_g = sum of online ratings in group g
            row = {int(ubar[t]): 1.0}
            for i, sg in enumerate(fl.sgs):
                coef = -fl.p_base * float(curve.k[gidx[i]]) * sg.p_rating
                if coef != 0.0:
                    row[int(u[i, t])] = coef
            mdl.add_row(f"curve_{t}", row, ">=", fl.p_base * curve.k0)
        if instance.mode is not Mode.BASE:
            mdl.add_row(f"rocof_{t}", {int(u[i, t]): m_coef[i] for i in range(G)}, ">=", m_rhs)
            mdl.add_row(f"ss_{t}", {int(u[i, t]): ss_coef[i] for i in range(G)}, ">=", ss_rhs)

    mdl.layout = dict(u=u, p=p, v=v, w=w, r=r, ubar=ubar, reserve=reserve)
    return mdl


# ---------------------------------------------------------------------------
# solving


def solve_milp(model: MilpModel, gap_tol: float = 1e-6, backend: str = "highs",
               time_limit: float | None = None) -> MilpResult:
    """Solve ``model`` to a relative gap of ``gap_tol``.

    ``backend="highs"`` hands the model to scipy's HiGHS MILP interface.
    ``backend="bnb"`` runs the package's own best-bound branch and bound on
    the binaries with HiGHS LP relaxations; node order is deterministic
    (best bound, ties by creation order, branching on the lowest-index
    fractional binary).
    """
    if model.n_vars == 0:
        return MilpResult(np.zeros(0), 0.0, "optimal", {"nodes": 0, "lp_iterations": 0, "wall_time": 0.0})
    t0 = time.perf_counter()
    if backend == "highs":
        res = _solve_highs(model, gap_tol, time_limit)
    elif backend == "bnb":
        res = _solve_bnb(model, gap_tol, time_limit)
    else:
        raise SchedulingError(f"unknown MILP backend {backend!r}")
    res.stats["wall_time"] = time.perf_counter() - t0
    res.stats["backend"] = backend
    return res


def _solve_highs(model, gap_tol, time_limit):
    c, a, lo, hi, lb, ub, integ = model.matrices()
    cons = [LinearConstraint(a, lo, hi)] if a.shape[0] else []
    opts = {"mip_rel_gap": gap_tol, "presolve": True}
    if time_limit is not None:
        opts["time_limit"] = time_limit
    r = milp(c, constraints=cons, integrality=integ, bounds=Bounds(lb, ub), options=opts)
    stats = {"nodes": int(getattr(r, "mip_node_count", 0) or 0), "lp_iterations": None,
             "mip_gap": float(getattr(r, "mip_gap", math.nan) or 0.0)}
    if r.status == 0:
        return MilpResult(np.asarray(r.x), float(r.fun), "optimal", stats)
    if r.status == 2:
        return MilpResult(np.full(len(c), np.nan), math.inf, "infeasible", stats)
    if r.status == 1 and r.x is not None:
        return MilpResult(np.asarray(r.x), float(r.fun), "time_limit", stats)
    if r.status == 3:
        raise SchedulingError("MILP is unbounded; all variables should have finite bounds")
    return MilpResult(np.full(len(c), np.nan), math.inf, "error", stats)


def _lp(c, a_ub, b_ub, a_eq, b_eq, lb, ub):
    r = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=np.column_stack([lb, ub]),
                method="highs")
    return r


def _split_rows(a, lo, hi):
    eq = np.isfinite(lo) & np.isfinite(hi) & (lo == hi)
    le = np.isfinite(hi) & ~eq
    ge = np.isfinite(lo) & ~eq
    a_ub = sparse.vstack([a[le], -a[ge]]).tocsr()
    b_ub = np.concatenate([hi[le], -lo[ge]])
    return a_ub, b_ub, a[eq], lo[eq]


def _solve_bnb(model, gap_tol, time_limit, int_tol=1e-6):
    c, a, lo, hi, lb0, ub0, integ = model.matrices()
    a_ub, b_ub, a_eq, b_eq = _split_rows(a, lo, hi)
    if a_ub.shape[0] == 0:
        a_ub = b_ub = None
    if a_eq.shape[0] == 0:
        a_eq = b_eq = None
    bins = np.flatnonzero(integ)
    stats = {"nodes": 0, "lp_iterations": 0}
    t_start = time.perf_counter()
    best_x, best_obj = None, math.inf
    counter = itertools.count()
    heap = []

    def relax(lb, ub):
        stats["nodes"] += 1
        r = _lp(c, a_ub, b_ub, a_eq, b_eq, lb, ub)
        stats["lp_iterations"] += int(getattr(r, "nit", 0) or 0)
        if r.status == 2:
            return None
        if r.status != 0:
            raise SchedulingError(f"LP relaxation failed: {r.message}")
        return r

    root = relax(lb0, ub0)
    if root is None:
        return MilpResult(np.full(len(c), np.nan), math.inf, "infeasible", stats)
    heapq.heappush(heap, (root.fun, next(counter), lb0, ub0, root))
    status = "optimal"
    while heap:
        bound, _, lb, ub, r = heapq.heappop(heap)
        if best_x is not None and bound >= best_obj - gap_tol * max(1.0, abs(best_obj)):
            break
        if time_limit is not None and time.perf_counter() - t_start > time_limit:
            status = "time_limit"
            break
        x = r.x
        frac = [j for j in bins if abs(x[j] - round(x[j])) > int_tol]
        if not frac:
            if r.fun < best_obj:
                best_obj, best_x = float(r.fun), x.copy()
            continue
        j = frac[0]
        for side in (0, 1):
            lb2, ub2 = lb.copy(), ub.copy()
            if side == 0:
                ub2[j] = math.floor(x[j])
            else:
                lb2[j] = math.ceil(x[j])
            child = relax(lb2, ub2)
            if child is not None and (best_x is None or child.fun < best_obj):
                heapq.heappush(heap, (child.fun, next(counter), lb2, ub2, child))
    if best_x is None:
        return MilpResult(np.full(len(c), np.nan), math.inf, "infeasible" if status == "optimal" else status, stats)
    best_x[bins] = np.round(best_x[bins])
    return MilpResult(best_x, best_obj, status, stats)


def extract_solution(model: MilpModel, res: MilpResult) -> UcSolution:
    inst = model.instance
    if inst is None:
        raise SchedulingError("model carries no UC instance")
    if res.status not in ("optimal", "time_limit"):
        raise SchedulingError(f"unit commitment {res.status}")
    lay = model.layout
    x = res.x
    fl = inst.fleet
    h = inst.hours
    commit = np.round(x[lay["u"]]).astype(bool)
    # HiGHS may return values a hair below a zero bound
    disp = np.maximum(x[lay["p"]], 0.0) * commit
    wind = np.maximum(x[lay["w"]], 0.0) if lay["w"].size else np.zeros((0, inst.periods))
    if inst.mode is Mode.PROPOSED:
        head = np.maximum(x[lay["r"]], 0.0)
    elif inst.mode is Mode.RELAXED:
        head = np.repeat(lay["reserve"][:, None], inst.periods, axis=1)
    else:
        head = np.zeros_like(wind)
    starts = np.where(lay["v"] >= 0, x[np.maximum(lay["v"], 0)], 0.0)
    cost = 0.0
    for i, sg in enumerate(fl.sgs):
        cost += float(np.sum(commit[i]) * sg.cost_noload * h + np.sum(disp[i]) * sg.cost_marginal * h
                      + np.sum(np.round(starts[i])) * sg.cost_startup)
    req = None
    if inst.mode is Mode.PROPOSED:
        req = np.array([predict_min_headroom_mw(inst.curve, fl, commit[:, t]) for t in range(inst.periods)])
    return UcSolution(inst.mode, commit, disp, wind, inst.wind_available - wind, head, head.sum(axis=0),
                      cost, res.objective, dict(res.stats, status=res.status), required_headroom=req)


def predict_min_headroom_mw(curve: HeadroomCurve, fleet: FleetDescription, commitment) -> float:
    point = point_of_commitment(fleet, commitment)
    return predict_min_headroom(curve, point) * fleet.p_base


def solve_uc(instance: UcInstance, gap_tol: float = 1e-6, backend: str = "highs",
             time_limit: float | None = None) -> UcSolution:
    model = build_uc(instance)
    return extract_solution(model, solve_milp(model, gap_tol, backend, time_limit))


# ---------------------------------------------------------------------------
# LP text format


def _fmt(v: float) -> str:
    return repr(float(v))


def _expr(coefs: dict, names) -> str:
    parts = []
    for j in sorted(coefs):
        v = coefs[j]
        sign = "-" if v < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(v))} {names[j]}")
    if not parts:
        return "0"
    s = " ".join(parts)
    return s[2:] if s.startswith("+ ") else s


def export_lp(model: MilpModel, destination=None) -> str:
    """Model in CPLEX LP text format; written to ``destination`` when given."""
    names = model.names
    obj = {j: cst for j, cst in enumerate(model.cost) if cst != 0.0}
    lines = ["\\ gsp2p unit commitment model", "Minimize", f" obj: {_expr(obj, names)}", "Subject To"]
    for name, coefs, sense, rhs in model.rows:
        lines.append(f" {name}: {_expr(coefs, names)} {sense} {_fmt(rhs)}")
    lines.append("Bounds")
    for j, n in enumerate(names):
        lines.append(f" {_fmt(model.lb[j])} <= {n} <= {_fmt(model.ub[j])}")
    bins = [n for n, b in zip(names, model.binary) if b]
    if bins:
        lines.append("Binaries")
        lines.extend(f" {n}" for n in bins)
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if destination is not None:
        with open(destination, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def _parse_expr(tokens, index):
    coefs = {}
    sign = 1.0
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok in ("+", "-"):
            sign = -1.0 if tok == "-" else 1.0
            i += 1
            continue
        try:
            val = float(tok)
        except ValueError:
            val, name = 1.0, tok
            i += 1
        else:
            if i + 1 == len(tokens):
                # a bare constant; export writes "0" for an empty expression
                if val != 0.0:
                    raise SchedulingError("constant terms are not supported in LP expressions")
                i += 1
                continue
            name = tokens[i + 1]
            i += 2
        j = index.setdefault(name, len(index))
        coefs[j] = coefs.get(j, 0.0) + sign * val
        sign = 1.0
    return coefs


def parse_lp(text: str) -> MilpModel:
    """Read the subset of the LP format written by :func:`export_lp`."""
    section = None
    index: dict[str, int] = {}
    obj_line = None
    rows = []
    bounds = {}
    bins = set()
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        key = line.lower()
        if key in ("minimize", "subject to", "bounds", "binaries", "end"):
            section = key
            continue
        if section == "minimize":
            obj_line = line.split(":", 1)[1].split()
        elif section == "subject to":
            name, body = line.split(":", 1)
            toks = body.split()
            sense, rhs = toks[-2], float(toks[-1])
            rows.append((name.strip(), toks[:-2], sense, rhs))
        elif section == "bounds":
            lo, _, name, _, hi = line.split()
            bounds[name] = (float(lo), float(hi))
        elif section == "binaries":
            bins.add(line)
    if section != "end":
        raise SchedulingError("LP text has no End marker")
    # variables are numbered in bound-section order, which is the export order
    for name in bounds:
        index.setdefault(name, len(index))
    obj = _parse_expr(obj_line or [], index)
    mdl = MilpModel()
    for name in index:
        lo, hi = bounds.get(name, (0.0, math.inf))
        mdl.add_var(name, lo, hi, 0.0, name in bins)
    for j, v in obj.items():
        mdl.cost[j] = v
    for name, toks, sense, rhs in rows:
        mdl.add_row(name, _parse_expr(toks, index), sense, rhs)
    if len(index) != mdl.n_vars:
        raise SchedulingError("LP text uses variables missing from the Bounds section")
    return mdl


# ---------------------------------------------------------------------------
# gains and second stage


def allocate_gains(system_gain: ControllerGain, headroom: Sequence[float]) -> list[ControllerGain]:
    """Split the system gain across IBRs in proportion to their headroom."""
    h = np.asarray(headroom, dtype=float)
    if np.any(h < 0):
        raise SchedulingError("headroom must be non-negative")
    total = float(h.sum())
    if not total > 0:
        if system_gain.k1 == 0.0 and system_gain.k2 == 0.0:
            return [ControllerGain() for _ in h]
        raise SchedulingError("no headroom to allocate")
    share = h / total
    gains = [ControllerGain(system_gain.k1 * s, system_gain.k2 * s) for s in share]
    # put the rounding remainder on the largest share so the sums are exact
    k = int(np.argmax(share))
    rest1 = system_gain.k1 - math.fsum(g.k1 for i, g in enumerate(gains) if i != k)
    rest2 = system_gain.k2 - math.fsum(g.k2 for i, g in enumerate(gains) if i != k)
    gains[k] = ControllerGain(rest1, rest2)
    return gains


def redispatch(solution: UcSolution, realized_wind, instance: UcInstance,
               synthesizer: Callable | None = None, frozen: bool = False,
               verify: Callable | None = None) -> UcSolution:
    """Second-stage economic dispatch with the first-stage commitment fixed.

    With ``frozen=False`` (gains redesigned) each period only needs the total
    headroom ``sum_c u_c >= m(y)``, re-evaluated from the curve at the
    unchanged commitment, and any surplus goes back to energy.  With
    ``frozen=True`` every IBR keeps the headroom it was scheduled with, since
    its gain share was computed from it.  Unserved energy and headroom that
    cannot be held are both priced at ``VOLL`` rather than reported as
    infeasibility.

    ``synthesizer(t, point)`` returns a SynthesisResult for the period's
    operating point; its gain is allocated over the dispatched headroom.
    ``verify(t, per_ibr_gains, headroom_mw)`` records an ex-post check.
    """
    fl = instance.fleet
    real = np.atleast_2d(np.asarray(realized_wind, dtype=float))
    T, G, C = instance.periods, len(fl.sgs), len(fl.converters)
    if real.shape != (C, T):
        raise SchedulingError(f"realized wind must be {C} x {T}")
    if np.any(real < 0):
        raise SchedulingError("realized wind must be non-negative")
    h = instance.hours
    disp = np.zeros((G, T))
    wind = np.zeros((C, T))
    head = np.zeros((C, T))
    shed = np.zeros(T)
    short = np.zeros(T)
    objective = 0.0
    gains, checks = [], []
    req = solution.required_headroom
    for t in range(T):
        on = solution.commitment[:, t]
        need = 0.0
        fixed = None
        if frozen or instance.mode is Mode.RELAXED:
            fixed = solution.headroom[:, t]
        elif instance.mode is Mode.PROPOSED:
            need = req[t] if req is not None else predict_min_headroom_mw(instance.curve, fl, on)
        per = _dispatch_period(fl, on, instance.demand[t], real[:, t], need, fixed, h)
        disp[:, t], wind[:, t], head[:, t], shed[t], short[t], obj = per
        objective += obj
        if synthesizer is not None and head[:, t].sum() > 0:
            res = synthesizer(t, point_of_commitment(fl, on))
            alloc = allocate_gains(res.gain, head[:, t])
            gains.append(alloc)
            if verify is not None:
                checks.append(verify(t, alloc, head[:, t]))
        else:
            gains.append(None)
    cost = _commitment_cost(fl, solution.commitment, instance) + float(
        sum(disp[i].sum() * sg.cost_marginal for i, sg in enumerate(fl.sgs)) * h)
    cost += float((shed.sum() + short.sum()) * VOLL * h)
    return UcSolution(instance.mode, solution.commitment.copy(), disp, wind, real - wind, head,
                      head.sum(axis=0), cost, objective,
                      {"stage": "redispatch", "frozen": bool(frozen), "headroom_shortfall": short},
                      required_headroom=req, load_shed=shed, gains=gains, checks=checks or None)


def _commitment_cost(fl, commitment, instance) -> float:
    """No-load and start-up cost of a fixed commitment."""
    h = instance.hours
    init = instance.initial_commitment
    prev = np.asarray(init, dtype=bool) if init is not None else commitment[:, 0]
    cost = 0.0
    for t in range(commitment.shape[1]):
        on = commitment[:, t]
        for i, sg in enumerate(fl.sgs):
            cost += sg.cost_noload * h * on[i] + sg.cost_startup * (on[i] and not prev[i])
        prev = on
    return float(cost)


def _dispatch_period(fl, on, demand, avail, need, fixed, h):
    """One-period LP over p (G), w (C), r (C), load shed and headroom shortfall.

    Returns (p, w, headroom, shed, shortfall, objective).  With ``fixed``
    each IBR must hold its own headroom; whatever its available power cannot
    cover is a shortfall.  Otherwise the headroom is free to move between
    IBRs and only the total ``need`` is enforced.
    """
    G, C = len(fl.sgs), len(fl.converters)
    n = G + 2 * C + 2
    ir, ish, isr = G + C, G + 2 * C, G + 2 * C + 1
    c = np.zeros(n)
    lb = np.zeros(n)
    ub = np.zeros(n)
    for i, sg in enumerate(fl.sgs):
        c[i] = sg.cost_marginal * h
        if on[i]:
            lb[i], ub[i] = sg.p_min, sg.p_max
    c[ir:ir + C] = RESERVE_TIE_BREAK * h
    c[ish] = c[isr] = VOLL * h
    ub[ish] = demand
    a_ub, b_ub = [], []
    if fixed is not None:
        fixed = np.asarray(fixed, dtype=float)
        ub[G:G + C] = np.maximum(0.0, avail - fixed)
        gap = np.maximum(0.0, fixed - avail)
        # the shortfall is data here; pin the slack to it
        lb[isr] = ub[isr] = float(gap.sum())
    else:
        ub[G:G + C] = avail
        ub[ir:ir + C] = avail
        ub[isr] = max(0.0, need)
        for k in range(C):
            row = np.zeros(n)
            row[G + k] = row[ir + k] = 1.0
            a_ub.append(row)
            b_ub.append(avail[k])
        if need > 0:
            row = np.zeros(n)
            row[ir:ir + C] = -1.0
            row[isr] = -1.0
            a_ub.append(row)
            b_ub.append(-need)
    a_eq = np.zeros((1, n))
    a_eq[0, :G + C] = 1.0
    a_eq[0, ish] = 1.0
    r = linprog(c, A_ub=np.array(a_ub) if a_ub else None, b_ub=np.array(b_ub) if b_ub else None,
                A_eq=a_eq, b_eq=[demand], bounds=np.column_stack([lb, ub]), method="highs")
    if r.status != 0:
        raise SchedulingError(f"period dispatch failed: {r.message}")
    x = r.x
    if x[isr] > 1e-9:
        log.warning("headroom shortfall of %.3g MW in redispatch", x[isr])
    if fixed is not None:
        head = np.minimum(fixed, avail)
    else:
        head = np.maximum(x[ir:ir + C], 0.0)
    return (np.maximum(x[:G], 0.0), np.maximum(x[G:G + C], 0.0), head, float(x[ish]), float(x[isr]),
            float(r.fun))


# ---------------------------------------------------------------------------
# ex-post verification


@dataclass(frozen=True)
class PeriodCheck:
    t: int
    y: tuple
    nadir_hz: float
    injection_mw: float  # peak total IBR injection in the simulated event
    ibr_injection_mw: tuple  # peak per IBR
    headroom_mw: float  # scheduled total
    ibr_headroom_mw: tuple
    synthesized_m_mw: float
    ok: bool


def verify_period(fleet: FleetDescription, commitment, headroom_mw, sample, limits: Limits,
                  t: int = 0, sim_cfg=None, tol_mw: float = 1e-6) -> PeriodCheck:
    """Simulate the loss event with the synthesized gain split over ``headroom_mw``.

    ``sample`` is the HeadroomSample of the period's operating point.  The
    check passes when the nadir stays within the limit and no IBR injects
    more than the headroom it was scheduled to hold.
    """
    from .simulator import SimulationConfig, simulate_full, trace_metrics

    cfg = sim_cfg or SimulationConfig()
    head = np.asarray(headroom_mw, dtype=float)
    if sample.m > 0 and head.sum() > 0:
        gains = allocate_gains(sample.synthesis.gain, head)
    else:
        gains = [ControllerGain() for _ in fleet.converters]
    tr = simulate_full(fleet, commitment, gains, fleet.dpl_pu, cfg)
    met = trace_metrics(tr)
    per = []
    for c, g in zip(fleet.converters, gains):
        if c.t_c == 0:
            per.append(float(np.max(np.abs(g.k1 * tr.omega + g.k2 * tr.omega_dot))) * fleet.p_base)
        else:
            share = g.k1 / sample.synthesis.gain.k1 if sample.synthesis.gain.k1 else 0.0
            per.append(met.max_injection * share * fleet.p_base)
    nadir_hz = met.nadir * fleet.f_base
    inj = met.max_injection * fleet.p_base
    ok = (nadir_hz <= limits.w_lim_hz and inj <= head.sum() + tol_mw
          and all(p <= h + tol_mw for p, h in zip(per, head)))
    y = point_of_commitment(fleet, commitment).y
    return PeriodCheck(t, y, nadir_hz, inj, tuple(per), float(head.sum()), tuple(float(h) for h in head),
                       sample.m * fleet.p_base, bool(ok))


def verify_schedule(solution: UcSolution, instance: UcInstance, synthesizer, sim_cfg=None) -> list[PeriodCheck]:
    """Ex-post synthesis and simulation for every period of ``solution``.

    ``synthesizer`` is a :class:`~gsp2p.headroom.PointSynthesizer` (anything
    with a ``sample(point)`` method).
    """
    fl = instance.fleet
    out = []
    for t in range(instance.periods):
        on = solution.commitment[:, t]
        sample = synthesizer.sample(point_of_commitment(fl, on))
        out.append(verify_period(fl, on, solution.headroom[:, t], sample, instance.limits, t, sim_cfg))
    return out
