"""Study configuration, data loading, result files and the pipeline commands.

Every file written here is in SI units (MW, Hz, s); per-unit values stay
inside the library.  Result JSON is written with sorted keys and no timing
data, so a given configuration always produces the same bytes.  Wall times
and versions go to a separate ``meta_<command>.json``.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata, resources
from pathlib import Path
from typing import Callable, Sequence

import jsonschema
import numpy as np

from . import headroom as hr
from . import scheduler as sch
from .errors import ConfigError, Gsp2pError, HeadroomError, PipelineError, ReportError
from .p2p_synthesis import ControllerGain, relaxed_effort_bound, synthesize_gains
from .simulator import (SimulationConfig, check_invariance, simulate_aggregate, simulate_full,
                        trace_metrics, write_trace_csv)
from .system_model import (ConverterUnit, FleetDescription, SyncGenerator, aggregate_fleet, analytic_nadir,
                           closed_loop_params, max_rocof, nadir_time, steady_state_deviation)

log = logging.getLogger(__name__)

COMMANDS = ("aggregate", "synthesize", "bounds", "headroom-curve", "schedule", "redispatch", "simulate", "report")
PATH_KEYS = ("fleet", "demand", "wind")
CURVE_FILE = "curve.json"  # fitted curve kept next to the results for reuse

_pos = {"type": "number", "exclusiveMinimum": 0}
_pos_list = {"type": "array", "items": _pos, "minItems": 1}
_ids = {"type": ["array", "null"], "items": {"type": "string"}, "default": None}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "gsp2p study configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["fleet"],
    "properties": {
        "fleet": {"type": "string", "description": "fleet JSON, relative to the config file"},
        "demand": {"type": ["string", "null"], "default": None, "description": "hourly demand CSV (hour, demand_mw)"},
        "wind": {"type": ["string", "null"], "default": None,
                 "description": "hourly capacity factors CSV, one column per IBR id"},
        "output_dir": {"type": "string", "default": "results"},
        "mode": {"enum": ["Base", "ProposedLinear", "AnalyticRelaxed", "all"], "default": "all"},
        "disturbance_mw": {"type": ["number", "null"], "exclusiveMinimum": 0, "default": None,
                           "description": "overrides the fleet's largest loss"},
        "wind_capacity_mw": dict(_pos_list, default=[3000.0],
                                 description="installed wind levels; IBR ratings are scaled to each"),
        "limits": {
            "type": "object", "additionalProperties": False, "default": {},
            "properties": {
                "delta_f_lim_hz": dict(_pos, default=0.8),
                "delta_f_ss_lim_hz": dict(_pos, default=0.5),
                "rocof_lim_hz_s": dict(_pos, default=1.0),
            },
        },
        "synthesis": {
            "type": "object", "additionalProperties": False, "default": {},
            "properties": {
                "b1_weight": dict(_pos, default=0.5),
                "eps": dict(_pos, default=1e-6),
                "max_iter": {"type": "integer", "minimum": 1, "default": 50},
                "commitment": _ids,
            },
        },
        "bounds": {
            "type": "object", "additionalProperties": False, "default": {},
            "properties": {"b1_values": dict(_pos_list, default=[0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0])},
        },
        "headroom": {
            "type": "object", "additionalProperties": False, "default": {},
            "properties": {
                "levels": {"oneOf": [{"const": "units"}, {"type": "integer", "minimum": 2},
                                     {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1}],
                           "default": "units"},
                "b1_min": dict(_pos, default=1e-3),
                "b1_max": dict(_pos, default=1e3),
                "eps": dict(_pos, default=1e-6),
                "max_iter": {"type": "integer", "minimum": 1, "default": 80},
                "min_r2": {"type": "number", "minimum": 0, "maximum": 1, "default": 0.95},
                "active_only": {"type": "boolean", "default": True},
                "conservative": {"type": "boolean", "default": True},
                "rocof_filter": {"type": "boolean", "default": True},
                "curve": {"type": ["string", "null"], "default": None,
                          "description": "precomputed curve JSON; skips the sweep"},
            },
        },
        "schedule": {
            "type": "object", "additionalProperties": False, "default": {},
            "properties": {
                "gap_tol": {"type": "number", "minimum": 0, "default": 1e-6},
                "backend": {"enum": ["highs", "bnb"], "default": "highs"},
                "time_limit_s": {"type": ["number", "null"], "exclusiveMinimum": 0, "default": None},
                "verify": {"type": "boolean", "default": True},
                "export_lp": {"type": "boolean", "default": False},
            },
        },
        "redispatch": {
            "type": "object", "additionalProperties": False, "default": {},
            "properties": {
                "sigma_ratios": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1,
                                 "default": [0.05, 0.10, 0.15]},
                "scenarios": {"type": "integer", "minimum": 1, "default": 20},
                "seed": {"type": "integer", "minimum": 0, "default": 7},
                "wind_capacity_mw": {"type": ["number", "null"], "exclusiveMinimum": 0, "default": None},
            },
        },
        "simulation": {
            "type": "object", "additionalProperties": False, "default": {},
            "properties": {
                "dt_s": dict(_pos, default=1e-3),
                "horizon_s": dict(_pos, default=30.0),
                "commitment": _ids,
            },
        },
    },
}

FLEET_SCHEMA = {
    "type": "object",
    "required": ["sgs"],
    "properties": {
        "p_base_mw": _pos, "f_base_hz": _pos,
        "disturbance_mw": {"type": "number", "minimum": 0},
        "provenance": {"type": "string"},
        "sgs": {"type": "array", "items": {
            "type": "object",
            "required": ["id", "m_i", "d_i", "k_i", "f_i", "r_i", "t_i", "p_rating_mw"],
            "properties": {"id": {"type": "string"}, "group": {"type": "string"},
                           "m_i": _pos, "d_i": {"type": "number", "minimum": 0}, "k_i": _pos,
                           "f_i": {"type": "number", "minimum": 0, "maximum": 1}, "r_i": _pos, "t_i": _pos,
                           "p_rating_mw": _pos, "p_min_mw": _pos, "p_max_mw": _pos,
                           "cost_noload_per_h": {"type": "number", "minimum": 0},
                           "cost_marginal_per_mwh": {"type": "number", "minimum": 0},
                           "cost_startup": {"type": "number", "minimum": 0}},
        }},
        "converters": {"type": "array", "items": {
            "type": "object",
            "required": ["id", "p_rating_mw"],
            "properties": {"id": {"type": "string"}, "bus": {"type": "integer"}, "p_rating_mw": _pos,
                           "t_c_s": {"type": "number", "minimum": 0}},
        }},
    },
}


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if len(path) else ""


def _validate(doc, schema, where: str = "") -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        raise ConfigError(f"{where}{e.message}", _pointer(e.absolute_path))


def _fill_defaults(schema: dict, doc: dict) -> dict:
    for key, sub in schema.get("properties", {}).items():
        if key not in doc and "default" in sub:
            doc[key] = copy.deepcopy(sub["default"])
        if sub.get("type") == "object" and isinstance(doc.get(key), dict):
            _fill_defaults(sub, doc[key])
    return doc


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass(frozen=True)
class StudyConfig:
    """Validated study document with defaults applied and input paths made absolute."""
    doc: dict

    def __getitem__(self, key):
        return self.doc[key]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.doc)

    def path(self, key: str) -> Path | None:
        v = self.doc.get(key)
        return Path(v) if v else None

    @property
    def limits(self) -> sch.Limits:
        lim = self.doc["limits"]
        return sch.Limits(lim["delta_f_lim_hz"], lim["delta_f_ss_lim_hz"], lim["rocof_lim_hz_s"])

    @property
    def sim_config(self) -> SimulationConfig:
        s = self.doc["simulation"]
        return SimulationConfig(s["dt_s"], s["horizon_s"])

    @property
    def modes(self) -> list[sch.Mode]:
        m = self.doc["mode"]
        return list(sch.Mode) if m == "all" else [sch.Mode(m)]

    def with_overrides(self, **sections) -> "StudyConfig":
        """Copy with ``section={key: value}`` merged in, re-validated."""
        doc = self.to_dict()
        for sec, vals in sections.items():
            if isinstance(vals, dict):
                doc[sec].update(vals)
            else:
                doc[sec] = vals
        _validate(doc, CONFIG_SCHEMA)
        return StudyConfig(doc)

    def hash(self) -> str:
        """Digest of everything that can change a result.

        Input files enter by content, not location; the output directory is
        left out.
        """
        doc = self.to_dict()
        doc.pop("output_dir", None)
        for key in PATH_KEYS:
            if doc.get(key):
                doc[key] = _file_digest(doc[key])
        if doc["headroom"].get("curve"):
            doc["headroom"]["curve"] = _file_digest(doc["headroom"]["curve"])
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def config_from_dict(raw: dict, base_dir=".") -> StudyConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    doc = copy.deepcopy(raw)
    _validate(doc, CONFIG_SCHEMA)
    _fill_defaults(CONFIG_SCHEMA, doc)
    base = Path(base_dir)
    doc["output_dir"] = str((base / doc["output_dir"]).resolve())
    for key in PATH_KEYS:
        if doc.get(key):
            doc[key] = str((base / doc[key]).resolve())
            if not Path(doc[key]).is_file():
                raise ConfigError(f"file not found: {doc[key]}", f"/{key}")
    if doc["headroom"]["curve"]:
        p = (base / doc["headroom"]["curve"]).resolve()
        if not p.is_file():
            raise ConfigError(f"file not found: {p}", "/headroom/curve")
        doc["headroom"]["curve"] = str(p)
    if doc["headroom"]["b1_min"] >= doc["headroom"]["b1_max"]:
        raise ConfigError("b1_min must be below b1_max", "/headroom/b1_min")
    return StudyConfig(doc)


def load_config(path) -> StudyConfig:
    """Read, validate and complete a study config.

    Relative paths, the output directory included, follow the config file.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return config_from_dict(raw, path.parent)


def save_config(cfg: StudyConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def data_dir() -> Path:
    return Path(str(resources.files("gsp2p") / "data"))


def bundled_fixture() -> StudyConfig:
    """The shipped desk-scale study: ten SGs in three groups, four wind IBRs, 24 hours.

    Its output directory is ``results`` under the working directory.
    """
    cfg = load_config(data_dir() / "fixture_study.json")
    cfg.doc["output_dir"] = str(Path("results").resolve())
    return cfg


# ---------------------------------------------------------------------------
# input files


def load_fleet(path, disturbance_mw: float | None = None) -> FleetDescription:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read fleet file {path}: {exc}") from exc
    _validate(doc, FLEET_SCHEMA, f"fleet file {path.name}: ")
    sgs = [SyncGenerator(s["id"], s["m_i"], s["d_i"], s["k_i"], s["f_i"], s["r_i"], s["t_i"], s["p_rating_mw"],
                         s.get("cost_noload_per_h", 0.0), s.get("cost_marginal_per_mwh", 0.0),
                         s.get("cost_startup", 0.0), s.get("p_min_mw"), s.get("p_max_mw"), group=s.get("group", ""))
           for s in doc["sgs"]]
    convs = [ConverterUnit(c["id"], c["p_rating_mw"], c.get("t_c_s", 0.0)) for c in doc.get("converters", [])]
    dist = disturbance_mw if disturbance_mw is not None else doc.get("disturbance_mw", 800.0)
    return FleetDescription(sgs, convs, doc.get("p_base_mw", 8000.0), doc.get("f_base_hz", 50.0), dist)


def scale_converters(fleet: FleetDescription, total_mw: float) -> FleetDescription:
    """Same fleet with IBR ratings rescaled to sum to ``total_mw``, proportions kept."""
    r = np.array([c.p_rating for c in fleet.converters], dtype=float)
    if r.size == 0:
        return fleet
    f = total_mw / r.sum()
    convs = [ConverterUnit(c.id, c.p_rating * f, c.t_c) for c in fleet.converters]
    return FleetDescription(fleet.sgs, convs, fleet.p_base, fleet.f_base, fleet.disturbance)


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    return rows


def _hours(rows, path):
    h = [int(r["hour"]) for r in rows]
    if h != list(range(len(h))):
        raise ConfigError(f"{path}: hours must run 0, 1, 2, ... without gaps")


def load_demand(path) -> np.ndarray:
    rows = _read_rows(path)
    try:
        _hours(rows, path)
        d = np.array([float(r["demand_mw"]) for r in rows])
    except KeyError as exc:
        raise ConfigError(f"{path}: missing column {exc}") from exc
    if np.any(d <= 0):
        raise ConfigError(f"{path}: demand must be positive")
    return d


def load_wind_cf(path, ids: Sequence[str]) -> np.ndarray:
    """Capacity factors, one row per IBR id in ``ids`` order."""
    rows = _read_rows(path)
    try:
        _hours(rows, path)
        cf = np.array([[float(r[k]) for r in rows] for k in ids])
    except KeyError as exc:
        raise ConfigError(f"{path}: missing column {exc}") from exc
    if np.any(cf < 0) or np.any(cf > 1):
        raise ConfigError(f"{path}: capacity factors must lie in [0, 1]")
    return cf


def commitment_from_ids(fleet: FleetDescription, ids, pointer: str = "") -> list[bool]:
    if ids is None:
        return [True] * len(fleet.sgs)
    known = {sg.id for sg in fleet.sgs}
    bad = [i for i in ids if i not in known]
    if bad:
        raise ConfigError(f"unknown SG ids {bad}", pointer)
    on = set(ids)
    return [sg.id in on for sg in fleet.sgs]


# ---------------------------------------------------------------------------
# output helpers


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _g(v) -> str:
    return f"{float(v):.12g}"


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_g(v) if isinstance(v, (float, np.floating)) else v for v in row])


def gain_si(gain: ControllerGain, fleet: FleetDescription) -> dict:
    s = fleet.p_base / fleet.f_base
    return {"d_c_mw_per_hz": gain.d_c * s, "m_c_mws_per_hz": gain.m_c * s}


@dataclass
class ReportBundle:
    command: str
    config_hash: str
    results: dict
    out_dir: Path
    tables: list = field(default_factory=list)  # CSV file names in out_dir
    plots: list = field(default_factory=list)  # SVG file names in out_dir
    meta: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return bool(self.results.get("ok", True))

    def document(self) -> dict:
        return {"command": self.command, "config_hash": self.config_hash, "results": self.results,
                "tables": sorted(self.tables), "plots": sorted(self.plots)}

    def to_json(self) -> str:
        return dumps(self.document())


class _Run:
    """State shared by the steps of one pipeline invocation."""

    def __init__(self, cfg: StudyConfig, out: Path, jobs: int):
        self.cfg, self.out, self.jobs = cfg, out, max(1, int(jobs))
        self.fleet = load_fleet(cfg["fleet"], cfg["disturbance_mw"])
        self.dpl = self.fleet.dpl_pu
        self.w_lim, _, self.rocof_lim = cfg.limits.pu(self.fleet.f_base)
        self.tables: list[str] = []
        self.times: dict[str, float] = {}
        self.samples: list[hr.HeadroomSample] | None = None

    def table(self, name, header, rows):
        write_csv(self.out / name, header, rows)
        self.tables.append(name)

    def timed(self, key, fn, *args, **kw):
        t0 = time.perf_counter()
        out = fn(*args, **kw)
        self.times[key] = self.times.get(key, 0.0) + time.perf_counter() - t0
        return out

    def commitment(self, section):
        ids = self.cfg[section]["commitment"]
        if section == "simulation" and ids is None:
            ids = self.cfg["synthesis"]["commitment"]
        return commitment_from_ids(self.fleet, ids, f"/{section}/commitment")

    def hr_kwargs(self):
        h = self.cfg["headroom"]
        return dict(b1_range=(h["b1_min"], h["b1_max"]), eps=h["eps"], max_iter=h["max_iter"])

    def sweep_key(self) -> str:
        """Digest of the inputs the headroom curve depends on."""
        doc = {"fleet": _file_digest(self.cfg["fleet"]), "limits": self.cfg["limits"],
               "disturbance_mw": self.cfg["disturbance_mw"],
               "headroom": {k: v for k, v in self.cfg["headroom"].items() if k != "curve"}}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# commands


def _cmd_aggregate(run: _Run) -> dict:
    fl = run.fleet
    commit = run.commitment("synthesis")
    agg = aggregate_fleet(fl, commit)
    s = fl.p_base / fl.f_base
    res = {
        "online_sgs": [sg.id for sg, c in zip(fl.sgs, commit) if c],
        "online_capacity_mw": sum(sg.p_rating for sg, c in zip(fl.sgs, commit) if c),
        "aggregate": {"m_g_mws_per_hz": agg.m_g * s, "d_g_mw_per_hz": agg.d_g * s, "f_g_mw_per_hz": agg.f_g * s,
                      "r_g_mw_per_hz": agg.r_g * s, "t_s": agg.t},
        "disturbance_mw": fl.disturbance,
    }
    p = closed_loop_params(agg, allow_overdamped=True)
    res["open_loop"] = {"omega_n_rad_s": p.omega_n, "zeta": p.zeta, "underdamped": p.underdamped,
                        "max_rocof_hz_s": max_rocof(p, run.dpl) * fl.f_base,
                        "steady_state_hz": steady_state_deviation(p, agg, run.dpl) * fl.f_base}
    if p.underdamped:
        res["open_loop"].update(nadir_hz=analytic_nadir(p, agg, run.dpl) * fl.f_base,
                                nadir_time_s=nadir_time(p, agg.t))
    lim = run.cfg.limits
    ol = res["open_loop"]
    res["within_limits"] = {"nadir": ol.get("nadir_hz", math.inf) <= lim.w_lim_hz,
                            "rocof": ol["max_rocof_hz_s"] <= lim.rocof_lim_hz_s,
                            "steady_state": ol["steady_state_hz"] <= lim.w_ss_lim_hz}
    return res


def _synthesis(run: _Run, b1=None, k_start=None):
    syn_cfg = run.cfg["synthesis"]
    agg = aggregate_fleet(run.fleet, run.commitment("synthesis"))
    res = synthesize_gains(agg, run.dpl, b1 if b1 is not None else syn_cfg["b1_weight"], syn_cfg["eps"],
                           syn_cfg["max_iter"], k_start=k_start)
    return agg, res


def _ellipse_points(p, x_vec, n=361):
    """Boundary of {x : (x - X)' P^-1 (x - X) <= 1}, per unit of disturbance."""
    l = np.linalg.cholesky(0.5 * (p + p.T))
    th = np.linspace(0.0, 2.0 * math.pi, n)
    return (x_vec[:, None] + l @ np.vstack([np.cos(th), np.sin(th)])).T


def _cmd_synthesize(run: _Run) -> dict:
    fl = run.fleet
    agg, res = run.timed("synthesis", _synthesis, run)
    s = fl.p_base / fl.f_base
    run.table("synthesize_iterations.csv",
              ["iteration", "d_c_MW_per_Hz", "m_c_MWs_per_Hz", "error_MW_per_Hz", "a_star", "alpha"],
              [[0, 0.0, 0.0, "", "", ""]]
              + [[i + 1, g.d_c * s, g.m_c * s, e * s, a, al] for i, (g, e, a, al) in
                 enumerate(zip(res.history[1:], res.errors, res.a_history, res.alpha_history))])
    scale = run.dpl * fl.f_base
    pts = _ellipse_points(res.p, res.shift.x_vec) * scale
    run.table("synthesize_ellipse.csv", ["omega_Hz", "rocof_Hz_s"], pts.tolist())
    tr = simulate_aggregate(agg, res.gain, run.dpl, run.cfg.sim_config)
    write_trace_csv(tr, run.out / "synthesize_trace.csv", fl.p_base, fl.f_base)
    run.tables.append("synthesize_trace.csv")
    return {
        "gain": gain_si(res.gain, fl),
        "b1_weight": res.b1_weight,
        "iterations": res.iterations,
        "converged": res.converged,
        "alpha_star": res.alpha_star,
        "a_star": res.a_star,
        "effort_bound_mw": res.effort_bound * fl.p_base,
        "nadir_bound_hz": res.nadir_bound * fl.f_base,
        "ellipse_matrix_hz": (res.p * scale ** 2).tolist(),
        "ellipse_center_hz": (res.shift.x_vec * scale).tolist(),
        "sign_admissible": bool(res.gain.d_c >= 0 and res.gain.m_c >= 0),
        "ok": bool(res.converged),
    }


def _cmd_bounds(run: _Run) -> dict:
    fl = run.fleet
    cfg = run.cfg.sim_config
    agg, res = run.timed("synthesis", _synthesis, run)
    tr = simulate_aggregate(agg, res.gain, run.dpl, cfg)
    met = trace_metrics(tr)
    relaxed = relaxed_effort_bound(res.gain, 0.0, run.w_lim, run.rocof_lim)
    inside = check_invariance(tr, res.p, res.shift)
    rows = []
    prev = None
    for b1 in sorted(run.cfg["bounds"]["b1_values"]):
        _, r = run.timed("tradeoff", _synthesis, run, b1, prev)
        prev = r.gain
        m = trace_metrics(simulate_aggregate(agg, r.gain, run.dpl, cfg))
        rows.append([b1, r.nadir_bound * fl.f_base, r.effort_bound * fl.p_base, m.nadir * fl.f_base,
                     m.max_injection * fl.p_base, r.gain.d_c * fl.p_base / fl.f_base,
                     r.gain.m_c * fl.p_base / fl.f_base, r.iterations, int(r.converged)])
    run.table("tradeoff.csv", ["b1", "nadir_bound_Hz", "effort_bound_MW", "sim_nadir_Hz", "sim_injection_MW",
                               "d_c_MW_per_Hz", "m_c_MWs_per_Hz", "iterations", "converged"], rows)
    sound = (met.nadir <= res.nadir_bound * (1 + 1e-9) and met.max_injection <= res.effort_bound * (1 + 1e-9)
             and inside <= 1 + 1e-6)
    return {
        "gain": gain_si(res.gain, fl),
        "effort_bound_mw": res.effort_bound * fl.p_base,
        "simulated_injection_mw": met.max_injection * fl.p_base,
        "effort_ratio": res.effort_bound / met.max_injection if met.max_injection > 0 else None,
        "relaxed_bound_mw": relaxed * fl.p_base,
        "relaxed_over_effort": relaxed / res.effort_bound if res.effort_bound > 0 else None,
        "nadir_bound_hz": res.nadir_bound * fl.f_base,
        "simulated_nadir_hz": met.nadir * fl.f_base,
        "containment_max": inside,
        "sound": sound,
        "ok": bool(sound and res.converged),
    }


def _sweep_one(args):
    point, w_lim, dpl, fleet, kw = args
    try:
        return hr.headroom_for_point(point, w_lim, dpl, fleet, **kw)
    except HeadroomError as exc:
        return exc


def headroom_sweep(fleet: FleetDescription, points, w_lim: float, dpl: float, jobs: int = 1, **kw):
    """``headroom_for_point`` over ``points``; failures come back as exceptions in place."""
    args = [(p, w_lim, dpl, fleet, kw) for p in points]
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(points))) as ex:
            return list(ex.map(_sweep_one, args))
    return [_sweep_one(a) for a in args]


def sweep_points(fleet: FleetDescription, levels="units", rocof_lim_pu: float | None = None):
    """Sweep grid, without points the SG-only RoCoF row would reject anyway."""
    pts = hr.generate_grid(fleet, None, levels)
    if rocof_lim_pu is not None:
        need = fleet.dpl_pu / rocof_lim_pu
        pts = [p for p in pts if hr.point_aggregate(fleet, p).m_g >= need - 1e-9]
    if not pts:
        raise HeadroomError("no grid point satisfies the RoCoF limit")
    return pts


def _cmd_headroom(run: _Run) -> dict:
    fl = run.fleet
    h = run.cfg["headroom"]
    pts = sweep_points(fl, h["levels"], run.rocof_lim if h["rocof_filter"] else None)
    out = run.timed("sweep", headroom_sweep, fl, pts, run.w_lim, run.dpl, run.jobs, **run.hr_kwargs())
    samples = [s for s in out if isinstance(s, hr.HeadroomSample)]
    failed = [{"y_mw": list(p.y), "error": str(s)} for p, s in zip(pts, out) if not isinstance(s, hr.HeadroomSample)]
    curve = run.timed("fit", hr.fit_headroom_curve, samples, h["min_r2"], h["active_only"], h["conservative"])
    run.samples = samples
    doc = hr.curve_to_dict(curve, fl.f_base)
    doc["sweep_key"] = run.sweep_key()
    (run.out / CURVE_FILE).write_text(dumps(doc), encoding="utf-8")
    hr.write_sweep_csv(samples, run.out / "headroom_sweep.csv", fl.p_base, fl.f_base)
    run.tables.append("headroom_sweep.csv")
    mono = hr.is_monotone_nonincreasing(samples, tol=1e-6 / fl.p_base)
    worst = max(samples, key=lambda s: s.m)
    return {
        "groups": list(curve.groups),
        "k_mw_per_mw": doc["k_mw_per_mw"],
        "k0_mw": doc["k0_mw"],
        "r_squared": curve.r_squared,
        "n_points": len(pts),
        "n_fitted": curve.metadata["n_fitted"],
        "failed_points": failed,
        "monotone_nonincreasing": mono,
        "worst_point": {"y_mw": list(worst.point.y), "m_mw": worst.m * fl.p_base,
                        "gain": gain_si(worst.gain, fl)},
        "ok": bool(mono and not failed),
    }


def _obtain_curve(run: _Run) -> hr.HeadroomCurve:
    path = run.cfg["headroom"]["curve"]
    if path:
        return hr.load_curve(path)
    stored = run.out / CURVE_FILE
    if stored.is_file():
        doc = json.loads(stored.read_text(encoding="utf-8"))
        if doc.get("sweep_key") == run.sweep_key():
            return hr.curve_from_dict(doc)
    _cmd_headroom(run)
    return hr.load_curve(stored)


def relaxed_design_gain(curve: hr.HeadroomCurve) -> ControllerGain:
    """Gain of the sample needing the most headroom, used as the frozen gain of the relaxed mode."""
    worst = max(curve.samples, key=lambda s: s.m)
    if worst.gain is None:
        raise HeadroomError("curve samples carry no gains")
    return worst.gain


def _study_data(run: _Run, wind_mw: float):
    if run.cfg["demand"] is None or run.cfg["wind"] is None:
        raise ConfigError("demand and wind profiles are required for scheduling", "/demand")
    fl = scale_converters(run.fleet, wind_mw)
    demand = load_demand(run.cfg["demand"])
    cf = load_wind_cf(run.cfg["wind"], [c.id for c in fl.converters])
    if cf.shape[1] != demand.size:
        raise ConfigError("demand and wind profiles differ in length", "/wind")
    avail = cf * np.array([c.p_rating for c in fl.converters])[:, None]
    return fl, demand, avail


def _instance(run, fl, demand, avail, mode, curve):
    kw = {}
    if mode is sch.Mode.PROPOSED:
        kw["curve"] = curve
    elif mode is sch.Mode.RELAXED:
        kw["fixed_gain"] = relaxed_design_gain(curve)
    return sch.UcInstance(fl, demand, avail, mode=mode, limits=run.cfg.limits, **kw)


def _solve(run, inst):
    s = run.cfg["schedule"]
    return sch.solve_uc(inst, s["gap_tol"], s["backend"], s["time_limit_s"])


def _synthesizer(run: _Run, fleet) -> hr.PointSynthesizer:
    syn = hr.PointSynthesizer(fleet, run.w_lim, run.dpl, **run.hr_kwargs())
    for s in run.samples or []:
        if s.synthesis is not None:
            syn.cache[s.point.y] = s
    return syn


def _cmd_schedule(run: _Run) -> dict:
    cfg = run.cfg
    curve = _obtain_curve(run)
    modes = cfg.modes
    levels = [float(v) for v in cfg["wind_capacity_mw"]]
    periods, costs, commits, checks = [], [], [], []
    summary = []
    syn = None
    for wmw in levels:
        fl, demand, avail = _study_data(run, wmw)
        sols = {}
        for mode in modes:
            inst = _instance(run, fl, demand, avail, mode, curve)
            if cfg["schedule"]["export_lp"]:
                name = f"uc_{int(round(wmw))}_{mode.value}.lp"
                sch.export_lp(sch.build_uc(inst), run.out / name)
            sol = run.timed(f"milp_{mode.value}", _solve, run, inst)
            sols[mode] = sol
            reserve = (sch.relaxed_reserve(inst.fixed_gain, fl, inst.limits).sum()
                       if mode is sch.Mode.RELAXED else 0.0)
            for t in range(inst.periods):
                y = sol.operating_point(fl, t).y
                req = sol.required_headroom[t] if sol.required_headroom is not None else 0.0
                periods.append([wmw, mode.value, t, demand[t], int(sol.commitment[:, t].sum()), *y,
                                avail[:, t].sum(), sol.wind_used[:, t].sum(), sol.wind_curtailed[:, t].sum(),
                                sol.dispatch[:, t].sum(), sol.headroom_total[t], req, reserve])
                commits.append([wmw, mode.value, t, *[int(v) for v in sol.commitment[:, t]]])
            costs.append([wmw, mode.value, sol.cost, sol.objective, float(sol.headroom_total.sum()),
                          float(sol.headroom_total.max()), int(sol.commitment.sum()),
                          sol.balance_residual(demand), sol.solve_stats.get("status", "")])
            entry = {"wind_capacity_mw": wmw, "mode": mode.value, "cost": sol.cost,
                     "headroom_mwh": float(sol.headroom_total.sum()),
                     "max_headroom_mw": float(sol.headroom_total.max()),
                     "unit_hours_on": int(sol.commitment.sum()), "balance_residual_mw": sol.balance_residual(demand),
                     "status": sol.solve_stats.get("status", "")}
            if mode is sch.Mode.PROPOSED and cfg["schedule"]["verify"]:
                if syn is None:
                    syn = _synthesizer(run, fl)
                syn.fleet = fl
                ch = run.timed("verification", sch.verify_schedule, sol, inst, syn, cfg.sim_config)
                for c in ch:
                    checks.append([wmw, c.t, *c.y, c.nadir_hz, c.injection_mw, c.headroom_mw,
                                   c.synthesized_m_mw, int(c.ok)])
                entry["verified"] = all(c.ok for c in ch)
                entry["max_nadir_hz"] = max(c.nadir_hz for c in ch)
            summary.append(entry)
        if len(sols) == len(sch.Mode):
            b, p, r = (sols[m] for m in sch.Mode)
            tol = 1e-6 * max(1.0, abs(r.cost))
            summary.append({"wind_capacity_mw": wmw, "mode": "orderings",
                            "cost_order": bool(b.cost <= p.cost + tol and p.cost <= r.cost + tol),
                            "headroom_order": bool(np.all(p.headroom_total <= r.headroom_total + 1e-6))})
    groups = [f"y_{g}_MW" for g in run.fleet.groups()]
    run.table("schedule_periods.csv", ["wind_capacity_MW", "mode", "t", "demand_MW", "units_on", *groups,
                                       "wind_available_MW", "wind_used_MW", "wind_curtailed_MW", "sg_output_MW",
                                       "headroom_MW", "required_headroom_MW", "relaxed_reserve_MW"], periods)
    run.table("schedule_costs.csv", ["wind_capacity_MW", "mode", "cost", "objective", "headroom_MWh",
                                     "max_headroom_MW", "unit_hours_on", "balance_residual_MW", "status"], costs)
    run.table("schedule_commitment.csv", ["wind_capacity_MW", "mode", "t", *[sg.id for sg in run.fleet.sgs]],
              commits)
    if checks:
        run.table("verification.csv", ["wind_capacity_MW", "t", *groups, "nadir_Hz", "injection_MW",
                                       "headroom_MW", "synthesized_m_MW", "ok"], checks)
    ok = all(e.get("verified", True) and e.get("cost_order", True) and e.get("headroom_order", True)
             for e in summary)
    return {"curve": {"k_mw_per_mw": [v * run.fleet.p_base for v in curve.k], "k0_mw": curve.k0 * run.fleet.p_base,
                      "r_squared": curve.r_squared},
            "relaxed_gain": gain_si(relaxed_design_gain(curve), run.fleet),
            "instances": summary, "ok": bool(ok)}


def wind_scenarios(avail: np.ndarray, ratings: np.ndarray, sigmas: Sequence[float], n: int, seed: int):
    """Realised wind per sigma ratio from one shared set of standard normal draws.

    Common random numbers keep scenario ``k`` comparable across sigma.
    """
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((n,) + avail.shape)
    cap = np.asarray(ratings, dtype=float)[:, None]
    return {float(s): [np.clip(avail * (1.0 + s * xi[k]), 0.0, cap) for k in range(n)] for s in sigmas}


def _cmd_redispatch(run: _Run) -> dict:
    cfg = run.cfg["redispatch"]
    curve = _obtain_curve(run)
    wmw = float(cfg["wind_capacity_mw"] or max(run.cfg["wind_capacity_mw"]))
    fl, demand, avail = _study_data(run, wmw)
    inst = _instance(run, fl, demand, avail, sch.Mode.PROPOSED, curve)
    sol = run.timed("milp", _solve, run, inst)
    ratings = np.array([c.p_rating for c in fl.converters])
    scen = wind_scenarios(avail, ratings, cfg["sigma_ratios"], cfg["scenarios"], cfg["seed"])
    rows, summary = [], []
    per_scenario_ok = True
    for sig, reals in scen.items():
        gaps = []
        for k, real in enumerate(reals):
            a = run.timed("redispatch", sch.redispatch, sol, real, inst, frozen=False)
            b = run.timed("redispatch", sch.redispatch, sol, real, inst, frozen=True)
            gap = b.cost - a.cost
            per_scenario_ok &= gap >= -1e-6 * max(1.0, abs(b.cost))
            gaps.append(gap)
            rows.append([sig, k, a.cost, b.cost, gap, float(a.load_shed.sum()), float(b.load_shed.sum()),
                         float(b.solve_stats["headroom_shortfall"].sum())])
        summary.append({"sigma_ratio": sig, "mean_gap": float(np.mean(gaps)), "max_gap": float(np.max(gaps)),
                        "min_gap": float(np.min(gaps))})
    run.table("redispatch.csv", ["sigma_ratio", "scenario", "cost_resynthesis", "cost_frozen", "gap",
                                 "shed_resynthesis_MW", "shed_frozen_MW", "shortfall_frozen_MW"], rows)
    means = [s["mean_gap"] for s in summary]
    mono = all(b >= a - 1e-6 * max(1.0, abs(a)) for a, b in zip(means, means[1:]))
    return {"wind_capacity_mw": wmw, "day_ahead_cost": sol.cost, "seed": cfg["seed"],
            "scenarios": cfg["scenarios"], "by_sigma": summary, "per_scenario_ok": bool(per_scenario_ok),
            "mean_gap_nondecreasing": bool(mono), "ok": bool(per_scenario_ok and mono)}


def _cmd_simulate(run: _Run) -> dict:
    fl = run.fleet
    commit = run.commitment("simulation")
    point = hr.point_of_commitment(fl, commit)
    sample = run.timed("synthesis", hr.headroom_for_point, point, run.w_lim, run.dpl, fl, **run.hr_kwargs())
    cfg = run.cfg.sim_config
    zero = [ControllerGain() for _ in fl.converters]
    ratings = [c.p_rating for c in fl.converters]
    gains = sch.allocate_gains(sample.gain, ratings) if sample.m > 0 else zero
    res = {"online_sgs": [sg.id for sg, c in zip(fl.sgs, commit) if c], "y_mw": list(point.y),
           "limit_hz": run.cfg.limits.w_lim_hz, "headroom_mw": sample.m * fl.p_base,
           "gain": gain_si(sample.gain, fl)}
    for name, g in (("open", zero), ("supported", gains)):
        tr = run.timed("simulation", simulate_full, fl, commit, g, run.dpl, cfg)
        met = trace_metrics(tr)
        write_trace_csv(tr, run.out / f"trace_{name}.csv", fl.p_base, fl.f_base)
        run.tables.append(f"trace_{name}.csv")
        res[name] = {"nadir_hz": met.nadir * fl.f_base, "nadir_time_s": met.t_m,
                     "max_rocof_hz_s": met.max_rocof * fl.f_base, "max_injection_mw": met.max_injection * fl.p_base,
                     "final_deviation_hz": met.ss_deviation * fl.f_base}
    res["ok"] = bool(res["supported"]["nadir_hz"] <= res["limit_hz"])
    return res


def _cmd_report(run: _Run) -> dict:
    from . import plots

    made = plots.render_all(run.out, run.cfg.limits.w_lim_hz)
    if not made:
        raise ReportError(f"nothing to report: no result tables in {run.out}")
    run.report_plots = sorted(made)
    return {"plots": {k: sorted(v) for k, v in sorted(made.items())}}


_DISPATCH: dict[str, Callable[[_Run], dict]] = {
    "aggregate": _cmd_aggregate, "synthesize": _cmd_synthesize, "bounds": _cmd_bounds,
    "headroom-curve": _cmd_headroom, "schedule": _cmd_schedule, "redispatch": _cmd_redispatch,
    "simulate": _cmd_simulate, "report": _cmd_report,
}


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "numba", "jsonschema", "matplotlib"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def run_pipeline(cfg: StudyConfig, command: str, out_dir=None, jobs: int = 1, seed: int | None = None,
                 write: bool = True) -> ReportBundle:
    """Run one command and write ``<command>.json`` plus its tables to the output directory."""
    if command not in _DISPATCH:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    if seed is not None:
        cfg = cfg.with_overrides(redispatch={"seed": int(seed)})
    out = Path(out_dir if out_dir is not None else cfg["output_dir"])
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        run = _Run(cfg, out, jobs)
        run.report_plots = []
        results = _DISPATCH[command](run)
    except PipelineError:
        raise
    except (Gsp2pError, OSError) as exc:
        raise PipelineError(command, exc) from exc
    bundle = ReportBundle(command, cfg.hash(), results, out, sorted(set(run.tables)), run.report_plots)
    bundle.meta = {"config_hash": bundle.config_hash, "command": command, "jobs": run.jobs,
                   "versions": _versions(), "wall_times_s": dict(run.times, total=time.perf_counter() - t0)}
    if write:
        name = command.replace("-", "_")
        (out / f"{name}.json").write_text(bundle.to_json(), encoding="utf-8")
        (out / f"meta_{name}.json").write_text(dumps(bundle.meta), encoding="utf-8")
    return bundle
