"""Generator fleet description, SFR aggregation and closed-form frequency metrics.

Everything here is per-unit on the fleet base power ``p_base`` and nominal
frequency ``f_base``.  The frequency deviation ``omega`` is counted positive
for the post-disturbance excursion, so a loss of generation ``dPl > 0``
produces ``omega(t) >= 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import FleetError, RegimeError


@dataclass(frozen=True)
class SyncGenerator:
    id: str
    m_i: float  # inertia constant 2H, s
    d_i: float  # load damping, p.u.
    k_i: float  # governor gain
    f_i: float  # turbine fraction (HP share)
    r_i: float  # droop, p.u.
    t_i: float  # governor time constant, s
    p_rating: float  # MW
    cost_noload: float = 0.0  # per h
    cost_marginal: float = 0.0  # per MWh
    cost_startup: float = 0.0
    p_min: float | None = None
    p_max: float | None = None
    group: str = ""

    def __post_init__(self):
        if self.p_max is None:
            object.__setattr__(self, "p_max", self.p_rating)
        if self.p_min is None:
            object.__setattr__(self, "p_min", 0.3 * self.p_max)
        if not self.m_i > 0:
            raise FleetError(f"SG {self.id}: m_i must be positive")
        if not self.t_i > 0:
            raise FleetError(f"SG {self.id}: t_i must be positive")
        if not self.r_i > 0:
            raise FleetError(f"SG {self.id}: r_i must be positive")
        if not 0.0 <= self.f_i <= 1.0:
            raise FleetError(f"SG {self.id}: f_i must lie in [0, 1]")
        if not 0.0 < self.p_min <= self.p_max <= self.p_rating:
            raise FleetError(f"SG {self.id}: need 0 < p_min <= p_max <= p_rating")


@dataclass(frozen=True)
class ConverterUnit:
    id: str
    p_rating: float  # MW
    t_c: float = 0.0  # s, full simulator only
    p_limit: float | None = None  # MW, max injectable power
    p_setpoint: float = 0.0  # MW

    def __post_init__(self):
        if self.p_limit is None:
            object.__setattr__(self, "p_limit", self.p_rating)
        if not self.p_rating > 0:
            raise FleetError(f"IBR {self.id}: p_rating must be positive")
        if self.t_c < 0:
            raise FleetError(f"IBR {self.id}: t_c must be non-negative")
        if not 0.0 <= self.p_setpoint <= self.p_limit <= self.p_rating:
            raise FleetError(f"IBR {self.id}: need 0 <= p_setpoint <= p_limit <= p_rating")


@dataclass(frozen=True)
class FleetDescription:
    sgs: tuple[SyncGenerator, ...]
    converters: tuple[ConverterUnit, ...] = ()
    p_base: float = 8000.0  # MW
    f_base: float = 50.0  # Hz
    disturbance: float = 800.0  # MW

    def __post_init__(self):
        object.__setattr__(self, "sgs", tuple(self.sgs))
        object.__setattr__(self, "converters", tuple(self.converters))
        if not self.p_base > 0:
            raise FleetError("p_base must be positive")
        if self.disturbance < 0:
            raise FleetError("disturbance must be non-negative")
        if not self.sgs and not self.converters:
            raise FleetError("fleet needs at least one SG or converter")

    @property
    def dpl_pu(self) -> float:
        return self.disturbance / self.p_base

    def groups(self) -> dict[str, list[int]]:
        """SG indices keyed by group label, in first-appearance order."""
        out: dict[str, list[int]] = {}
        for i, sg in enumerate(self.sgs):
            out.setdefault(sg.group or sg.id, []).append(i)
        return out


@dataclass(frozen=True)
class AggregateModel:
    m_g: float
    d_g: float
    f_g: float
    r_g: float
    t: float

    def __post_init__(self):
        for name in ("m_g", "d_g", "f_g", "r_g"):
            if getattr(self, name) < 0:
                raise FleetError(f"aggregate {name} must be non-negative")
        if not self.t > 0:
            raise FleetError("aggregate governor time constant must be positive")
        if not self.r_g > self.f_g:
            raise FleetError("invalid governor aggregate: need r_g > f_g")


@dataclass(frozen=True)
class ClosedLoopParams:
    m: float
    d: float
    omega_n: float
    zeta: float
    omega_d: float = field(default=math.nan)
    phi: float = field(default=math.nan)

    @property
    def underdamped(self) -> bool:
        return 0.0 < self.zeta < 1.0


def aggregate_fleet(fleet: FleetDescription, commitment: Sequence[bool] | None = None) -> AggregateModel:
    """Capacity-weighted SFR aggregate of the committed synchronous generators.

    ``commitment`` defaults to all units on.  The common governor time constant
    is the capacity-weighted mean of the committed ``t_i``.
    """
    if commitment is None:
        commitment = [True] * len(fleet.sgs)
    if len(commitment) != len(fleet.sgs):
        raise FleetError("commitment length does not match the SG list")
    on = [sg for sg, c in zip(fleet.sgs, commitment) if c]
    if not on:
        raise FleetError("empty fleet: no committed SG")
    w = np.array([sg.p_rating for sg in on]) / fleet.p_base
    m = np.array([sg.m_i for sg in on])
    d = np.array([sg.d_i for sg in on])
    kr = np.array([sg.k_i / sg.r_i for sg in on])
    f = np.array([sg.f_i for sg in on])
    t = np.array([sg.t_i for sg in on])
    return AggregateModel(
        m_g=float(w @ m),
        d_g=float(w @ d),
        f_g=float(w @ (kr * f)),
        r_g=float(w @ kr),
        t=float(w @ t / w.sum()),
    )


def closed_loop_params(agg: AggregateModel, m_c: float = 0.0, d_c: float = 0.0,
                       allow_overdamped: bool = False) -> ClosedLoopParams:
    """Natural frequency, damping ratio and damped frequency with virtual support.

    Raises ``RegimeError`` for ``zeta >= 1`` unless ``allow_overdamped`` is set,
    in which case ``omega_d`` and ``phi`` are NaN.
    """
    m = agg.m_g + m_c
    d = agg.d_g + d_c
    if not m > 0:
        raise FleetError("nonphysical inertia: M <= 0")
    if not d + agg.r_g > 0:
        raise FleetError("zero total damping and droop (D + R_g <= 0)")
    t = agg.t
    omega_n = math.sqrt((d + agg.r_g) / (m * t))
    zeta = (m + t * (d + agg.f_g)) / (2.0 * math.sqrt(m * t * (d + agg.r_g)))
    if zeta >= 1.0:
        if not allow_overdamped:
            raise RegimeError(f"overdamped regime (zeta = {zeta:.4f})")
        return ClosedLoopParams(m, d, omega_n, zeta)
    s = math.sqrt(1.0 - zeta * zeta)
    return ClosedLoopParams(m, d, omega_n, zeta, omega_n * s, math.asin(s))


def _require_underdamped(p: ClosedLoopParams):
    if not p.underdamped:
        raise RegimeError(f"closed form needs 0 < zeta < 1, got {p.zeta:.4f}")


def nadir_time(p: ClosedLoopParams, t_gov: float) -> float:
    """Time of the first frequency extremum after the step.

    atan2 picks the branch in (0, pi), i.e. the first positive stationary point,
    and is continuous where ``zeta*omega_n`` crosses ``1/T``.
    """
    _require_underdamped(p)
    return math.atan2(p.omega_d, p.zeta * p.omega_n - 1.0 / t_gov) / p.omega_d


def analytic_nadir(p: ClosedLoopParams, agg: AggregateModel, dPl: float) -> float:
    _require_underdamped(p)
    if not agg.r_g > agg.f_g:
        raise FleetError("invalid governor aggregate: need r_g > f_g")
    if dPl == 0:
        return 0.0
    t_m = nadir_time(p, agg.t)
    return dPl / (p.d + agg.r_g) * (
        1.0 + math.sqrt(agg.t * (agg.r_g - agg.f_g) / p.m) * math.exp(-p.zeta * p.omega_n * t_m))


def max_rocof(p: ClosedLoopParams, dPl: float) -> float:
    return dPl / p.m


def steady_state_deviation(p: ClosedLoopParams, agg: AggregateModel, dPl: float) -> float:
    den = p.d + agg.r_g
    if not den > 0:
        raise FleetError("zero total damping and droop (D + R_g <= 0)")
    return dPl / den


def frequency_response(p: ClosedLoopParams, agg: AggregateModel, dPl: float, t):
    """Closed-form step response omega(t); accepts scalar or array ``t``."""
    _require_underdamped(p)
    t = np.asarray(t, dtype=float)
    T = agg.t
    out = dPl / (p.m * T * p.omega_n ** 2) + dPl / (p.m * p.omega_d) * np.exp(-p.zeta * p.omega_n * t) * (
        np.sin(p.omega_d * t) - np.sin(p.omega_d * t + p.phi) / (p.omega_n * T))
    return out if out.ndim else float(out)
