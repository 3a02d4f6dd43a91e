"""Outer iterative loop: linearize, solve the step program, validate.

Two strategies share the machinery:

* the multi-step sequence (stability -> damping/frequency -> effort);
* the uniform program combining all objectives with slack relaxations.

Every accepted iteration relinearizes the model, re-derives eigenvalue
and damping-ratio sensitivities, and validates the optimizer's
first-order damping-ratio predictions against the actual spectrum,
halving the gain increment while the prediction error exceeds the
threshold (or a damping dip contradicts a predicted improvement).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .allocation import AllocationState
from .errors import NadirTimeInvalidError, OverdampedError
from .freq import (
    FreqConstraintData,
    aggregate,
    freq_constraint_data,
    nadir,
    rocof,
    steady_state_deviation,
)
from .grid import GridCase, linearize
from .lp import (
    CostConfig,
    StepBounds,
    build_step1,
    build_step2,
    build_step3,
    build_uniform,
    phi_normalize,
    solve_lp,
)
from .modal import (
    GAIN_D,
    GAIN_M,
    ModeSet,
    constrained_mode_indices,
    decompose,
    match_modes,
    worst_modes,
)

logger = logging.getLogger(__name__)

PHASE_STABILITY = "stability"
PHASE_DAMPING = "damping"
PHASE_EFFORT = "effort"
PHASE_UNIFORM = "uniform"


@dataclass(frozen=True)
class LoopConfig:
    """Loop thresholds, limits and step-control settings."""

    zeta_floor: float = 0.10
    rocof_limit: float = 1.0  # Hz/s
    nadir_limit: float = 0.8  # Hz
    dp_mw: float = 0.0
    disturbance_bus: int | None = None
    max_iterations: int = 300
    mismatch_threshold: float = 0.01  # max |zeta_pred - zeta_actual|
    min_step_scale: float = 1.0 / 64.0
    epsilon: float = 1e-4  # convergence bound on |dM| + |dD|
    window: int = 5  # consecutive iterations for convergence
    dm_step: float = 0.5  # s per iteration
    dd_step: float = 0.5  # p.u. per iteration
    phi_mode: str = "signed"
    filter_tol: float = 1e-9
    slack_tol: float = 1e-9
    metric_tol: float = 1e-6
    tm_margin: float = 1e-6

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window length must be >= 1")
        for name in ("zeta_floor", "rocof_limit", "nadir_limit", "max_iterations",
                     "mismatch_threshold", "min_step_scale", "epsilon",
                     "dm_step", "dd_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class TraceRow:
    """One accepted iteration of either strategy."""

    iteration: int
    phase: str
    m: tuple[float, ...]
    d: tuple[float, ...]
    zeta_min: float
    sigma_max: float
    rocof: float
    nadir: float
    agg_m: float
    agg_d: float
    d_agg_m: float
    d_agg_d: float
    halvings: int
    predicted_zeta: tuple[float, ...]
    actual_zeta: tuple[float, ...]
    slacks: dict[str, float]
    dzeta_dm: tuple[float, ...]
    dzeta_dd: tuple[float, ...]


@dataclass
class IterationTrace:
    controllable_ids: tuple[str, ...]
    rows: list[TraceRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)


@dataclass
class RunResult:
    status: str  # "converged" | "stalled" | "max_iterations" | "infeasible"
    reason: str
    method: str
    trace: IterationTrace
    alloc: AllocationState
    modes: ModeSet
    spectra: dict[str, np.ndarray]

    @property
    def converged(self) -> bool:
        return self.status == "converged"


@dataclass
class _EvalState:
    alloc: AllocationState
    model: object
    modes: ModeSet
    sigma_max: float
    zeta_min: float
    zeta_index: int
    rocof: float
    nadir: float
    fd: FreqConstraintData


def _actual_nadir(params) -> float:
    try:
        return nadir(params).nadir
    except (OverdampedError, NadirTimeInvalidError):
        return steady_state_deviation(params)


def _evaluate(case: GridCase, alloc: AllocationState, config: LoopConfig,
              freq_enabled: bool, pre=None) -> _EvalState:
    if pre is None:
        model = linearize(case, alloc, config.disturbance_bus)
        modes = decompose(model)
    else:
        model, modes = pre
    worst = worst_modes(modes, config.filter_tol)
    params = aggregate(case, alloc, config.dp_mw)
    fd = freq_constraint_data(
        case,
        alloc,
        config.dp_mw,
        config.rocof_limit,
        config.nadir_limit,
        limits_enabled=freq_enabled,
        tm_margin=config.tm_margin,
        limit_pad=0.5 * config.metric_tol,
    )
    return _EvalState(
        alloc=alloc,
        model=model,
        modes=modes,
        sigma_max=worst.sigma_max,
        zeta_min=worst.zeta_min,
        zeta_index=worst.zeta_index,
        rocof=rocof(params),
        nadir=_actual_nadir(params),
        fd=fd,
    )


def _freq_ok(ev: _EvalState, config: LoopConfig, freq_enabled: bool) -> bool:
    if not freq_enabled:
        return True
    return (
        abs(ev.rocof) <= config.rocof_limit + config.metric_tol
        and abs(ev.nadir) <= config.nadir_limit + config.metric_tol
    )


def _criteria_met(ev: _EvalState, config: LoopConfig, freq_enabled: bool) -> bool:
    return (
        ev.sigma_max < 0.0
        and ev.zeta_min >= config.zeta_floor - config.metric_tol
        and _freq_ok(ev, config, freq_enabled)
    )


def _step_bounds(ev: _EvalState, alloc: AllocationState, config: LoopConfig) -> StepBounds:
    ids = alloc.controllable_ids
    base = StepBounds.uniform_steps(len(ids), config.dm_step, config.dd_step)
    sens_m = np.array(
        [ev.modes.dzeta[ev.zeta_index, ev.modes.unit_index(u), GAIN_M] for u in ids]
    )
    sens_d = np.array(
        [ev.modes.dzeta[ev.zeta_index, ev.modes.unit_index(u), GAIN_D] for u in ids]
    )
    return base.with_phi(
        phi_normalize(sens_m, config.phi_mode),
        phi_normalize(sens_d, config.phi_mode),
    )


@dataclass
class _Validation:
    ok: bool
    reason: str
    alloc: AllocationState | None = None
    model: object = None
    modes: ModeSet | None = None
    halvings: int = 0
    predicted: tuple[float, ...] = ()
    actual: tuple[float, ...] = ()


def validate_and_halve(case: GridCase, alloc: AllocationState, prev_modes: ModeSet,
                       proposed_m: np.ndarray, proposed_d: np.ndarray,
                       config: LoopConfig, guard_floor: float | None = None) -> _Validation:
    """Accept a gain step, halving it until the prediction holds.

    The first-order damping-ratio prediction is rebuilt from the
    sensitivity tensors for the scaled increment and compared against
    the relinearized spectrum (modes matched by eigenvector
    correlation).  With ``guard_floor`` set and the worst ratio still
    below it, a step whose actual worst ratio drops while an improvement
    was predicted is also rejected.  Fails once the scale drops below
    ``config.min_step_scale``.
    """
    dm_full = np.asarray(proposed_m, dtype=float) - alloc.m
    dd_full = np.asarray(proposed_d, dtype=float) - alloc.d
    delta = prev_modes.dzeta[:, :, GAIN_M] @ dm_full + prev_modes.dzeta[:, :, GAIN_D] @ dd_full
    cons = constrained_mode_indices(prev_modes, config.filter_tol)
    prev_worst = worst_modes(prev_modes, config.filter_tol)

    scale = 1.0
    halvings = 0
    while True:
        cand = alloc.with_gains(alloc.m + scale * dm_full, alloc.d + scale * dd_full)
        model = linearize(case, cand, config.disturbance_bus)
        modes = decompose(model)
        perm = match_modes(prev_modes, modes)
        predicted = prev_modes.zetas + scale * delta
        actual = modes.zetas[perm]
        mismatch = float(np.max(np.abs(predicted[cons] - actual[cons]))) if cons else 0.0

        dip = False
        climbing = (
            guard_floor is not None
            and prev_worst.zeta_min < guard_floor - config.mismatch_threshold
        )
        if climbing:
            # While still climbing toward the floor, a drop in the worst
            # ratio that contradicts a predicted improvement means the
            # step left the linearization's trust region.
            act_min = worst_modes(modes, config.filter_tol).zeta_min
            pred_min = float(np.min(predicted[cons])) if cons else prev_worst.zeta_min
            dip = (
                act_min < prev_worst.zeta_min - 1e-6
                and pred_min >= prev_worst.zeta_min - 1e-9
            )

        if mismatch <= config.mismatch_threshold and not dip:
            return _Validation(
                ok=True,
                reason="",
                alloc=cand,
                model=model,
                modes=modes,
                halvings=halvings,
                predicted=tuple(float(predicted[i]) for i in cons),
                actual=tuple(float(actual[i]) for i in cons),
            )
        scale *= 0.5
        halvings += 1
        if scale < config.min_step_scale:
            why = "damping-ratio dip" if dip else f"prediction mismatch {mismatch:.4g}"
            return _Validation(
                ok=False,
                reason=f"step size fell below {config.min_step_scale} ({why})",
                halvings=halvings,
            )


def convergence_check(trace: IterationTrace, epsilon: float, window: int) -> bool:
    """True iff |dM| + |dD| stayed below epsilon over the last ``window`` rows."""
    rows = trace.rows if isinstance(trace, IterationTrace) else list(trace)
    if len(rows) < window:
        raise ValueError(f"trace shorter than the {window}-iteration window")
    recent = rows[-window:]
    return all(abs(r.d_agg_m) + abs(r.d_agg_d) < epsilon for r in recent)


class _Loop:
    """Shared state/bookkeeping for one optimization run."""

    def __init__(self, case, alloc0, config, costs, method, sink, freq_enabled):
        self.case = case
        self.config = config
        self.costs = costs
        self.method = method
        self.sink = sink
        self.freq_enabled = freq_enabled
        self.ctrl_ids = alloc0.controllable_ids
        self.trace = IterationTrace(controllable_ids=self.ctrl_ids)
        self.ev = _evaluate(case, alloc0, config, freq_enabled)
        self.spectra = {"initial": self.ev.modes.lambdas.copy()}
        self.iteration = 0

    # -- helpers ----------------------------------------------------------

    def proposed_gains(self, lp, sol):
        alloc = self.ev.alloc
        new_m = alloc.m.copy()
        new_d = alloc.d.copy()
        for uid, (v_m, v_d, _, _) in lp.meta["gains"].items():
            i = alloc.index_of(uid)
            new_m[i] = np.clip(sol[v_m], alloc.m_lo[i], alloc.m_hi[i])
            new_d[i] = np.clip(sol[v_d], alloc.d_lo[i], alloc.d_hi[i])
        return new_m, new_d

    def slack_values(self, lp, sol) -> dict[str, float]:
        freq_meta = lp.meta.get("freq") or {}
        return {name: float(sol[ix]) for name, ix in freq_meta.get("slacks", {}).items()}

    def accept(self, phase, outcome, slacks) -> None:
        prev = self.ev
        self.iteration += 1
        alloc = outcome.alloc.with_gains(outcome.alloc.m, outcome.alloc.d,
                                         iteration=self.iteration)
        ev = _evaluate(self.case, alloc, self.config, self.freq_enabled,
                       pre=(outcome.model, outcome.modes))
        ids = self.ctrl_ids
        z_ix = prev.zeta_index
        row = TraceRow(
            iteration=self.iteration,
            phase=phase,
            m=tuple(float(alloc.m[alloc.index_of(u)]) for u in ids),
            d=tuple(float(alloc.d[alloc.index_of(u)]) for u in ids),
            zeta_min=ev.zeta_min,
            sigma_max=ev.sigma_max,
            rocof=ev.rocof,
            nadir=ev.nadir,
            agg_m=ev.fd.m0,
            agg_d=ev.fd.d0,
            d_agg_m=ev.fd.m0 - prev.fd.m0,
            d_agg_d=ev.fd.d0 - prev.fd.d0,
            halvings=outcome.halvings,
            predicted_zeta=outcome.predicted,
            actual_zeta=outcome.actual,
            slacks=slacks,
            dzeta_dm=tuple(
                float(prev.modes.dzeta[z_ix, prev.modes.unit_index(u), GAIN_M]) for u in ids
            ),
            dzeta_dd=tuple(
                float(prev.modes.dzeta[z_ix, prev.modes.unit_index(u), GAIN_D]) for u in ids
            ),
        )
        self.trace.rows.append(row)
        if self.sink is not None:
            self.sink(row)
        self.ev = ev

    def result(self, status, reason="") -> RunResult:
        self.spectra["final"] = self.ev.modes.lambdas.copy()
        if status != "converged":
            logger.warning("%s run %s: %s", self.method, status, reason)
        return RunResult(
            status=status,
            reason=reason,
            method=self.method,
            trace=self.trace,
            alloc=self.ev.alloc,
            modes=self.ev.modes,
            spectra=self.spectra,
        )

    def budget_left(self) -> bool:
        return self.iteration < self.config.max_iterations

    def violated_hard_rows(self, lp) -> list[str]:
        """Hard rows already violated at the anchor (zero step)."""
        x0 = np.zeros(lp.n_vars)
        # Evaluate rows at the current point: gains and aggregates at
        # their anchors, increments at zero.
        for uid, (v_m, v_d, _, _) in lp.meta["gains"].items():
            i = self.ev.alloc.index_of(uid)
            x0[v_m] = self.ev.alloc.m[i]
            x0[v_d] = self.ev.alloc.d[i]
        freq_meta = lp.meta.get("freq") or {}
        fd = self.ev.fd
        for name, value in (("M", fd.m0), ("D", fd.d0),
                            ("rocof", fd.rocof0), ("nadir", fd.nadir0)):
            if name in freq_meta:
                x0[freq_meta[name]] = value
        residual = lp.a_ub @ x0 - lp.b_ub
        return [lp.ub_labels[r] for r in np.nonzero(residual > 1e-9)[0]]


def _solve_phase_step(loop: _Loop, phase: str, build, guard_floor):
    """One build/solve/validate/accept cycle; returns an error result or None."""
    config = loop.config
    lp = build()
    sol = solve_lp(lp)
    if sol.status != "optimal":
        names = loop.violated_hard_rows(lp) if sol.status == "infeasible" else []
        detail = f"; anchor-violated rows: {', '.join(names)}" if names else ""
        return loop.result("infeasible", f"{phase} program {sol.status}{detail}")
    new_m, new_d = loop.proposed_gains(lp, sol)
    moved = max(
        float(np.max(np.abs(new_m - loop.ev.alloc.m))),
        float(np.max(np.abs(new_d - loop.ev.alloc.d))),
    )
    outcome = validate_and_halve(
        loop.case, loop.ev.alloc, loop.ev.modes, new_m, new_d, config, guard_floor
    )
    if not outcome.ok:
        return loop.result("stalled", f"{phase} phase: {outcome.reason}")
    loop.accept(phase, outcome, loop.slack_values(lp, sol))
    loop.last_move = moved
    loop.last_slacks = loop.trace.rows[-1].slacks
    return None


def run_multistep(case: GridCase, alloc0: AllocationState, config: LoopConfig,
                  costs: CostConfig | None = None, sink=None,
                  freq_constraints: bool = True) -> RunResult:
    """Three-phase sequence: stability, damping/frequency, effort."""
    costs = costs or CostConfig()
    loop = _Loop(case, alloc0, config, costs, "multistep", sink, freq_constraints)

    while loop.ev.sigma_max >= 0.0:
        if not loop.budget_left():
            return loop.result("max_iterations", "stability phase exhausted the budget")
        err = _solve_phase_step(
            loop,
            PHASE_STABILITY,
            lambda: build_step1(
                loop.ev.modes,
                loop.ev.alloc,
                _step_bounds(loop.ev, loop.ev.alloc, config),
                config.filter_tol,
            ),
            guard_floor=None,
        )
        if err is not None:
            return err
        if loop.last_move < 1e-14 and loop.ev.sigma_max >= 0.0:
            return loop.result("stalled", "stability phase cannot move any gain")
    loop.spectra["stability_end"] = loop.ev.modes.lambdas.copy()

    def damping_done():
        return (
            loop.ev.zeta_min >= config.zeta_floor - config.metric_tol
            and _freq_ok(loop.ev, config, freq_constraints)
        )

    while not damping_done():
        if not loop.budget_left():
            return loop.result("max_iterations", "damping phase exhausted the budget")
        err = _solve_phase_step(
            loop,
            PHASE_DAMPING,
            lambda: build_step2(
                loop.ev.modes,
                loop.ev.alloc,
                loop.ev.fd,
                costs,
                _step_bounds(loop.ev, loop.ev.alloc, config),
                config.zeta_floor,
                config.filter_tol,
            ),
            guard_floor=config.zeta_floor,
        )
        if err is not None:
            return err
        if loop.last_move < 1e-14 and not damping_done():
            return loop.result("stalled", "damping phase cannot move any gain")
    loop.spectra["damping_end"] = loop.ev.modes.lambdas.copy()

    effort_rows = 0
    base = StepBounds.uniform_steps(len(loop.ctrl_ids), config.dm_step, config.dd_step)
    while True:
        if effort_rows >= config.window:
            recent = loop.trace.rows[-config.window:]
            settled = all(
                abs(r.d_agg_m) + abs(r.d_agg_d) < config.epsilon for r in recent
            )
            if settled and _criteria_met(loop.ev, config, freq_constraints):
                return loop.result("converged")
            if settled:
                return loop.result(
                    "stalled", "effort phase settled with criteria unmet"
                )
        if not loop.budget_left():
            return loop.result("max_iterations", "effort phase exhausted the budget")
        err = _solve_phase_step(
            loop,
            PHASE_EFFORT,
            lambda: build_step3(
                loop.ev.modes,
                loop.ev.alloc,
                loop.ev.fd,
                costs,
                base,
                config.zeta_floor,
                config.filter_tol,
            ),
            guard_floor=None,
        )
        if err is not None:
            return err
        effort_rows += 1


def run_uniform(case: GridCase, alloc0: AllocationState, config: LoopConfig,
                costs: CostConfig | None = None, sink=None,
                freq_constraints: bool = True) -> RunResult:
    """Single combined program iterated to convergence."""
    costs = costs or CostConfig()
    loop = _Loop(case, alloc0, config, costs, "uniform", sink, freq_constraints)
    loop.last_slacks = {}

    rows_done = 0
    while True:
        criteria = _criteria_met(loop.ev, config, freq_constraints)
        if rows_done >= config.window and criteria:
            recent = loop.trace.rows[-config.window:]
            slack_peak = max(
                (max(r.slacks.values(), default=0.0) for r in recent), default=0.0
            )
            effort_deltas = [
                abs(costs.c_m * r.d_agg_m + costs.c_d * r.d_agg_d) for r in recent
            ]
            if slack_peak < config.slack_tol and max(effort_deltas) < config.epsilon:
                return loop.result("converged")
        if not loop.budget_left():
            return loop.result("max_iterations", "uniform loop exhausted the budget")
        err = _solve_phase_step(
            loop,
            PHASE_UNIFORM,
            lambda: build_uniform(
                loop.ev.modes,
                loop.ev.alloc,
                loop.ev.fd,
                costs,
                _step_bounds(loop.ev, loop.ev.alloc, config),
                config.zeta_floor,
                config.filter_tol,
                use_phi=not criteria,
            ),
            guard_floor=config.zeta_floor,
        )
        if err is not None:
            return err
        rows_done += 1
        if loop.last_move < 1e-14 and not _criteria_met(loop.ev, config, freq_constraints):
            return loop.result("stalled", "uniform loop cannot move any gain")
