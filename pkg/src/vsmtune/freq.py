"""Closed-form frequency-response metrics of the aggregate system.

The aggregate model is the standard center-of-inertia response: a swing
mass ``M`` with damping ``D`` plus one lead-lag governor path
``(R_g + F_g*T*s)/(1 + T*s)``, hit by a step power deficit ``dP``.  Its
step response admits closed forms for the maximum rate of change of
frequency, the frequency nadir and the nadir time:

    rocof  = -f0 * dP / M
    nadir  = -f0 * dP / (D + R_g) * (1 + sqrt(T*(R_g - F_g)/M) * exp(-zeta_s*omega_n*t_m))
    t_m    = atan2(omega_d, zeta_s*omega_n - 1/T) / omega_d

with

    zeta_s  = (M + T*(D + F_g)) / (2*sqrt(M*T*(D + R_g)))
    omega_n = sqrt((D + R_g) / (M*T)),   omega_d = omega_n*sqrt(1 - zeta_s^2).

The nadir expression is the exact extremum of the model's step response
(cross-checked against time-domain integration in the test suite).  It
requires an underdamped response (``zeta_s < 1``, which provably implies
``R_g > F_g``) and a valid nadir time (``M/T - F_g < D``); the
overdamped and invalid cases raise typed errors and callers fall back to
the steady-state deviation ``-f0*dP/(D + R_g)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import NadirTimeInvalidError, OverdampedError, VsmtuneError
from .grid import SG, LinearModel

DEFAULT_T_GOV = 1.0  # placeholder turbine constant for SG-free cases


@dataclass(frozen=True)
class AggregateParams:
    """Aggregate swing/governor parameters on the total-generation base."""

    m: float  # s
    d: float  # p.u.
    r_g: float  # p.u. (average inverse droop)
    f_g: float  # dimensionless
    t_gov: float  # s
    f0: float  # Hz
    dp: float  # p.u. step disturbance magnitude

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError(f"M must be > 0, got {self.m}")
        if self.d < 0 or self.r_g < 0:
            raise ValueError("D and R_g must be >= 0")
        if not 0.0 <= self.f_g <= 1.0:
            raise ValueError(f"F_g must be in [0, 1], got {self.f_g}")
        if self.t_gov <= 0:
            raise ValueError(f"T must be > 0, got {self.t_gov}")
        if self.f0 <= 0:
            raise ValueError(f"f0 must be > 0, got {self.f0}")


class NadirResult(NamedTuple):
    nadir: float  # Hz, negative for a generation deficit
    t_m: float  # s
    zeta_s: float
    omega_n: float  # rad/s


@dataclass(frozen=True)
class FreqMetrics:
    rocof_max: float  # Hz/s
    nadir: float  # Hz
    t_m: float  # s
    zeta_s: float
    omega_n: float
    dnadir_dm: float
    dnadir_dd: float


def rocof(p: AggregateParams) -> float:
    """Maximum rate of change of frequency, -f0*dP/M (Hz/s)."""
    return -p.f0 * p.dp / p.m


def steady_state_deviation(p: AggregateParams) -> float:
    """Asymptotic frequency deviation -f0*dP/(D+R_g) (Hz)."""
    if p.d + p.r_g <= 0:
        raise VsmtuneError("steady-state deviation undefined for D + R_g = 0")
    return -p.f0 * p.dp / (p.d + p.r_g)


def swing_damping(p: AggregateParams) -> float:
    """zeta_s of the aggregate response."""
    if p.d + p.r_g <= 0:
        raise VsmtuneError("aggregate response undefined for D + R_g = 0")
    return (p.m + p.t_gov * (p.d + p.f_g)) / (
        2.0 * math.sqrt(p.m * p.t_gov * (p.d + p.r_g))
    )


def nadir(p: AggregateParams) -> NadirResult:
    """Frequency nadir, nadir time and the response shape parameters."""
    zeta_s = swing_damping(p)
    if zeta_s >= 1.0:
        raise OverdampedError(
            f"aggregate response overdamped (zeta_s = {zeta_s:.4f} >= 1); "
            "nadir equals the steady-state deviation"
        )
    if p.m / p.t_gov - p.f_g >= p.d:
        raise NadirTimeInvalidError(
            f"nadir time invalid: M/T - F_g = {p.m / p.t_gov - p.f_g:.4f} "
            f">= D = {p.d:.4f}"
        )
    omega_n = math.sqrt((p.d + p.r_g) / (p.m * p.t_gov))
    omega_d = omega_n * math.sqrt(1.0 - zeta_s**2)
    t_m = math.atan2(omega_d, zeta_s * omega_n - 1.0 / p.t_gov) / omega_d
    if t_m <= 0.0:  # atan2 with positive first argument keeps t_m > 0
        t_m += math.pi / omega_d
    # zeta_s < 1 implies R_g > F_g (AM-GM), so the radicand is positive.
    overshoot = math.sqrt(p.t_gov * (p.r_g - p.f_g) / p.m)
    value = steady_state_deviation(p) * (
        1.0 + overshoot * math.exp(-zeta_s * omega_n * t_m)
    )
    return NadirResult(nadir=value, t_m=t_m, zeta_s=zeta_s, omega_n=omega_n)


def nadir_gradient(p: AggregateParams, rel_step: float = 1e-6) -> tuple[float, float]:
    """(d nadir / dM, d nadir / dD) by central differences on the closed form."""
    h_m = rel_step * max(abs(p.m), 1.0)
    h_d = rel_step * max(abs(p.d), 1.0)
    f_m_hi = nadir(replace(p, m=p.m + h_m)).nadir
    f_m_lo = nadir(replace(p, m=p.m - h_m)).nadir
    f_d_hi = nadir(replace(p, d=p.d + h_d)).nadir
    f_d_lo = nadir(replace(p, d=p.d - h_d)).nadir
    return (f_m_hi - f_m_lo) / (2.0 * h_m), (f_d_hi - f_d_lo) / (2.0 * h_d)


def metrics(p: AggregateParams) -> FreqMetrics:
    """Bundle rocof, nadir and the nadir gradient at one parameter point."""
    res = nadir(p)
    g_m, g_d = nadir_gradient(p)
    return FreqMetrics(
        rocof_max=rocof(p),
        nadir=res.nadir,
        t_m=res.t_m,
        zeta_s=res.zeta_s,
        omega_n=res.omega_n,
        dnadir_dm=g_m,
        dnadir_dd=g_d,
    )


def aggregate(case, alloc, dp_mw: float = 0.0) -> AggregateParams:
    """Generation-weighted aggregate parameters of a case + allocation.

    Inertia and damping average every unit's gain by its dispatch;
    governor parameters average SG units only, over total generation.
    ``dp_mw`` converts to p.u. on the same total-generation base.
    """
    total = case.total_generation()
    if total <= 0:
        raise VsmtuneError("total generation must be positive")
    p_g = np.array([u.p_g for u in case.units])
    m_agg = float(p_g @ alloc.m) / total
    d_agg = float(p_g @ alloc.d) / total
    r_g = f_g = 0.0
    t_gov = None
    for u in case.units:
        if u.kind == SG and u.governor is not None:
            r_g += u.p_g * u.governor.r_inv
            f_g += u.p_g * u.governor.f_frac
            t_gov = u.governor.t_turbine
    return AggregateParams(
        m=m_agg,
        d=d_agg,
        r_g=r_g / total,
        f_g=f_g / total,
        t_gov=t_gov if t_gov is not None else DEFAULT_T_GOV,
        f0=case.f0,
        dp=dp_mw / total,
    )


def aggregate_model(p: AggregateParams) -> LinearModel:
    """Two-state realization of the aggregate response, output in Hz.

    States are the p.u. speed deviation and the governor lag; the input
    is the step power deficit in p.u. (positive = generation loss), so
    the single output is the frequency deviation f0*w in Hz.
    """
    a = np.array(
        [
            [-(p.d + p.f_g) / p.m, -1.0 / p.m],
            [(p.r_g - p.f_g) / p.t_gov, -1.0 / p.t_gov],
        ]
    )
    b = np.array([[-1.0 / p.m], [0.0]])
    c = np.array([[p.f0, 0.0]])
    d = np.zeros((1, 1))
    return LinearModel(
        a=a,
        b=b,
        c=c,
        d=d,
        state_labels=(("aggregate", "speed"), ("aggregate", "governor")),
        da_dm={},
        da_dd={},
        gain_units=(),
        f0=p.f0,
    )


@dataclass(frozen=True)
class FreqConstraintData:
    """Anchors and gradients for the per-iteration frequency rows.

    ``regime`` selects which nadir representation is linearized:
    ``"oscillatory"`` uses the closed-form nadir and its gradient,
    ``"steady_state"`` (overdamped or invalid nadir time) bounds the
    steady-state deviation instead, which depends on D alone.  With
    ``limits_enabled`` false only the aggregate-definition data is
    meaningful (used when frequency constraints are ablated).
    """

    weights: dict[str, float]  # controllable uid -> p_g / total
    m_fixed: float  # non-controllable p_g-weighted inertia / total
    d_fixed: float
    m0: float
    d0: float
    f0: float
    dp: float
    r_g: float
    f_g: float
    t_gov: float
    sg_present: bool
    limits_enabled: bool
    regime: str = "disabled"
    nadir0: float = 0.0
    dnadir_dm: float = 0.0
    dnadir_dd: float = 0.0
    rocof0: float = 0.0
    drocof_dm: float = 0.0
    rocof_limit: float = math.inf
    nadir_limit: float = math.inf
    tm_margin: float = 1e-6
    limit_pad: float = 0.0


def freq_constraint_data(
    case,
    alloc,
    dp_mw: float,
    rocof_limit: float = math.inf,
    nadir_limit: float = math.inf,
    limits_enabled: bool = True,
    tm_margin: float = 1e-6,
    limit_pad: float = 0.0,
) -> FreqConstraintData:
    """Evaluate the frequency-constraint linearization at an allocation."""
    p = aggregate(case, alloc, dp_mw)
    total = case.total_generation()
    weights: dict[str, float] = {}
    m_fixed = d_fixed = 0.0
    for u, ctrl, m_v, d_v in zip(case.units, alloc.controllable, alloc.m, alloc.d):
        if ctrl:
            weights[u.uid] = u.p_g / total
        else:
            m_fixed += u.p_g * m_v / total
            d_fixed += u.p_g * d_v / total
    sg_present = any(u.kind == SG for u in case.units)

    common = dict(
        weights=weights,
        m_fixed=m_fixed,
        d_fixed=d_fixed,
        m0=p.m,
        d0=p.d,
        f0=p.f0,
        dp=p.dp,
        r_g=p.r_g,
        f_g=p.f_g,
        t_gov=p.t_gov,
        sg_present=sg_present,
        limits_enabled=limits_enabled,
        tm_margin=tm_margin,
        limit_pad=limit_pad,
    )
    if not limits_enabled:
        return FreqConstraintData(**common)

    rocof0 = p.f0 * p.dp / p.m
    drocof_dm = -p.f0 * p.dp / p.m**2
    try:
        res = nadir(p)
        g_m, g_d = nadir_gradient(p)
        regime = "oscillatory"
        nadir0 = res.nadir
    except (OverdampedError, NadirTimeInvalidError):
        regime = "steady_state"
        nadir0 = steady_state_deviation(p)
        g_m = 0.0
        g_d = p.f0 * p.dp / (p.d + p.r_g) ** 2
    return FreqConstraintData(
        regime=regime,
        nadir0=nadir0,
        dnadir_dm=g_m,
        dnadir_dd=g_d,
        rocof0=rocof0,
        drocof_dm=drocof_dm,
        rocof_limit=rocof_limit,
        nadir_limit=nadir_limit,
        **common,
    )
