"""Dense linear programs for the per-iteration gain updates.

The solver is a two-phase primal simplex on a dense tableau with
Bland's anti-cycling rule, so identical inputs produce bit-identical
solutions.  Problem sizes here are tiny (tens of variables); clarity
and determinism beat sophistication.

Builders assemble the four program variants used by the outer loop:

* ``build_step1``   - minimize the rightmost eigenvalue real part;
* ``build_step2``   - maximize the worst damping ratio with soft
  frequency limits;
* ``build_step3``   - minimize aggregate inertia/damping cost with hard
  frequency limits;
* ``build_uniform`` - all of the above in one program with a slack on
  the damping-ratio floor.

Mode rows are written one per conjugate pair (conjugates carry equal
damping ratios and sensitivities) for modes above the magnitude filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .freq import FreqConstraintData
from .modal import GAIN_D, GAIN_M, ModeSet, constrained_mode_indices

INF = math.inf


@dataclass(frozen=True)
class CostConfig:
    """Objective weights; all strictly positive.

    ``c_tiebreak`` is a tiny penalty on gain-increment magnitudes that
    makes each program's optimum unique: the main objectives see only
    aggregate inertia/damping, leaving a flat optimal face over
    individual gains that would otherwise be resolved by arbitrary
    vertex selection.  Keep it orders of magnitude below the other
    costs so it never trades against them.
    """

    c_zeta: float = 100.0
    c_f: float = 10.0
    c_fdot: float = 10.0
    c_m: float = 1.0
    c_d: float = 1.0
    c_tiebreak: float = 1e-7

    def __post_init__(self):
        for name in ("c_zeta", "c_f", "c_fdot", "c_m", "c_d", "c_tiebreak"):
            if getattr(self, name) <= 0:
                raise ValueError(f"cost {name} must be > 0")


@dataclass(frozen=True)
class StepBounds:
    """Per-unit incremental step windows and their sensitivity scalings."""

    dm_lo: np.ndarray
    dm_hi: np.ndarray
    dd_lo: np.ndarray
    dd_hi: np.ndarray
    phi_m: np.ndarray
    phi_d: np.ndarray

    def __post_init__(self):
        for name in ("dm_lo", "dm_hi", "dd_lo", "dd_hi", "phi_m", "phi_d"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.dm_lo > 0) or np.any(self.dd_lo > 0):
            raise ValueError("step lower bounds must be <= 0")
        if np.any(self.dm_hi < 0) or np.any(self.dd_hi < 0):
            raise ValueError("step upper bounds must be >= 0")
        if np.any(np.abs(self.phi_m) > 1 + 1e-12) or np.any(np.abs(self.phi_d) > 1 + 1e-12):
            raise ValueError("phi factors must lie in [-1, 1]")

    @classmethod
    def uniform_steps(cls, n: int, dm: float, dd: float) -> "StepBounds":
        ones = np.ones(n)
        return cls(
            dm_lo=-dm * ones,
            dm_hi=dm * ones,
            dd_lo=-dd * ones,
            dd_hi=dd * ones,
            phi_m=ones.copy(),
            phi_d=ones.copy(),
        )

    def with_phi(self, phi_m: np.ndarray, phi_d: np.ndarray) -> "StepBounds":
        return StepBounds(
            dm_lo=self.dm_lo,
            dm_hi=self.dm_hi,
            dd_lo=self.dd_lo,
            dd_hi=self.dd_hi,
            phi_m=phi_m,
            phi_d=phi_d,
        )


def phi_normalize(sens: np.ndarray, mode: str = "signed") -> np.ndarray:
    """Sensitivity-normalized step scalings phi_j = s_j / max_j s_j.

    Falls back to all-ones when no sensitivity is positive (the ratio
    would lose meaning), and clamps to [-1, 1].  ``mode="abs"`` takes
    magnitudes, shrinking windows symmetrically instead of biasing their
    direction.
    """
    sens = np.asarray(sens, dtype=float)
    if sens.size == 0:
        return sens.copy()
    peak = sens.max()
    if peak <= 0.0:
        return np.ones_like(sens)
    phi = np.clip(sens / peak, -1.0, 1.0)
    if mode == "abs":
        phi = np.abs(phi)
    elif mode != "signed":
        raise ValueError(f"unknown phi mode {mode!r}")
    return phi


@dataclass
class LinearProgram:
    """min c @ x  s.t.  a_eq @ x = b_eq,  a_ub @ x <= b_ub,  lb <= x <= ub."""

    c: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    labels: tuple[str, ...]
    eq_labels: tuple[str, ...] = ()
    ub_labels: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.c)

    def index_of(self, label: str) -> int:
        return self.labels.index(label)


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective: float | None

    def __getitem__(self, label_index) -> float:
        if self.x is None:
            raise ValueError(f"no solution available (status {self.status})")
        return float(self.x[label_index])


class _Builder:
    """Incremental LP assembly with labeled variables and rows."""

    def __init__(self):
        self.labels: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.cost: list[float] = []
        self.eq_rows: list[dict[int, float]] = []
        self.eq_rhs: list[float] = []
        self.eq_labels: list[str] = []
        self.ub_rows: list[dict[int, float]] = []
        self.ub_rhs: list[float] = []
        self.ub_labels: list[str] = []

    def var(self, label: str, lo: float = -INF, hi: float = INF, cost: float = 0.0) -> int:
        if lo > hi:
            raise ValueError(f"variable {label}: lower bound {lo} exceeds upper {hi}")
        self.labels.append(label)
        self.lb.append(lo)
        self.ub.append(hi)
        self.cost.append(cost)
        return len(self.labels) - 1

    def eq(self, label: str, coeffs: dict[int, float], rhs: float) -> None:
        self.eq_rows.append(coeffs)
        self.eq_rhs.append(rhs)
        self.eq_labels.append(label)

    def le(self, label: str, coeffs: dict[int, float], rhs: float) -> None:
        self.ub_rows.append(coeffs)
        self.ub_rhs.append(rhs)
        self.ub_labels.append(label)

    def build(self, meta: dict | None = None) -> LinearProgram:
        n = len(self.labels)
        if len(set(self.labels)) != n:
            raise ValueError("variable labels must be unique")
        a_eq = np.zeros((len(self.eq_rows), n))
        for r, coeffs in enumerate(self.eq_rows):
            for j, val in coeffs.items():
                a_eq[r, j] = val
        a_ub = np.zeros((len(self.ub_rows), n))
        for r, coeffs in enumerate(self.ub_rows):
            for j, val in coeffs.items():
                a_ub[r, j] = val
        return LinearProgram(
            c=np.array(self.cost),
            a_eq=a_eq,
            b_eq=np.array(self.eq_rhs),
            a_ub=a_ub,
            b_ub=np.array(self.ub_rhs),
            lb=np.array(self.lb),
            ub=np.array(self.ub),
            labels=tuple(self.labels),
            eq_labels=tuple(self.eq_labels),
            ub_labels=tuple(self.ub_labels),
            meta=meta or {},
        )


# ---------------------------------------------------------------------------
# Simplex solver
# ---------------------------------------------------------------------------

_TOL = 1e-9


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Two-phase dense primal simplex with Bland's rule.

    Returns an optimal basic solution for feasible bounded problems and
    a status of ``"infeasible"`` or ``"unbounded"`` otherwise, never
    raising for those outcomes.  Deterministic: the entering variable is
    the lowest eligible index and ratio-test ties break on the lowest
    basic variable index.
    """
    n = lp.n_vars
    # Standard-form conversion: x = shift + sign * z (z >= 0), free
    # variables split into a positive and a negative part; variables
    # pinned by equal bounds are substituted out entirely so a pinned
    # program presents exactly the same columns as its relaxed twin.
    col_of: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    shift = np.zeros(n)
    extra_ub: list[tuple[int, float]] = []  # (z column, upper value) rows
    n_std = 0
    for i in range(n):
        lo, hi = lp.lb[i], lp.ub[i]
        if math.isinf(lo) and math.isinf(hi):
            col_of[i] = [(n_std, 1.0), (n_std + 1, -1.0)]
            n_std += 2
        elif not math.isinf(lo):
            if hi - lo <= 0.0:
                shift[i] = lo  # fixed variable, no column
                continue
            col_of[i] = [(n_std, 1.0)]
            shift[i] = lo
            if not math.isinf(hi):
                extra_ub.append((n_std, hi - lo))
            n_std += 1
        else:  # lo = -inf, hi finite
            col_of[i] = [(n_std, -1.0)]
            shift[i] = hi
            n_std += 1

    def expand(matrix: np.ndarray) -> np.ndarray:
        out = np.zeros((matrix.shape[0], n_std))
        for i in range(n):
            for j, sgn in col_of[i]:
                out[:, j] += sgn * matrix[:, i]
        return out

    a_eq = expand(lp.a_eq) if lp.a_eq.size else np.zeros((0, n_std))
    b_eq = lp.b_eq - lp.a_eq @ shift if lp.a_eq.size else np.zeros(0)
    a_ub = expand(lp.a_ub) if lp.a_ub.size else np.zeros((0, n_std))
    b_ub = lp.b_ub - lp.a_ub @ shift if lp.a_ub.size else np.zeros(0)
    for col, val in extra_ub:
        row = np.zeros(n_std)
        row[col] = 1.0
        a_ub = np.vstack([a_ub, row])
        b_ub = np.append(b_ub, val)

    c_std = np.zeros(n_std)
    for i in range(n):
        for j, sgn in col_of[i]:
            c_std[j] += sgn * lp.c[i]

    m_ub, m_eq = a_ub.shape[0], a_eq.shape[0]
    m = m_ub + m_eq
    n_slack = m_ub
    n_total = n_std + n_slack  # artificials appended later as needed

    rows = np.zeros((m, n_total))
    rhs = np.zeros(m)
    rows[:m_ub, :n_std] = a_ub
    rows[:m_ub, n_std:n_std + n_slack] = np.eye(m_ub)
    rhs[:m_ub] = b_ub
    if m_eq:
        rows[m_ub:, :n_std] = a_eq
        rhs[m_ub:] = b_eq

    # Normalize rhs >= 0; pick slack basis where the slack survived with
    # +1 coefficient, artificial basis elsewhere.
    basis = np.empty(m, dtype=int)
    art_cols: list[int] = []
    for r in range(m):
        if rhs[r] < 0:
            rows[r] *= -1.0
            rhs[r] *= -1.0
        if r < m_ub and rows[r, n_std + r] > 0.5:
            basis[r] = n_std + r
        else:
            art_cols.append(rows.shape[1])
            col = np.zeros((m, 1))
            col[r, 0] = 1.0
            rows = np.hstack([rows, col])
            basis[r] = rows.shape[1] - 1

    tableau = np.hstack([rows, rhs[:, None]])

    if art_cols:
        # Phase 1: minimize the sum of artificials.
        obj = np.zeros(tableau.shape[1])
        for c_ix in art_cols:
            obj[c_ix] = 1.0
        obj = _reduced_row(obj, tableau, basis)
        status = _iterate(tableau, obj, basis, allowed=tableau.shape[1] - 1)
        if status != "optimal" or obj[-1] < -_TOL:
            return LpSolution(status="infeasible", x=None, objective=None)
        _expel_artificials(tableau, basis, n_total)
        keep = [r for r in range(len(basis)) if basis[r] < n_total]
        if len(keep) < len(basis):  # rows left on artificials are redundant
            tableau = tableau[keep, :]
            basis = basis[keep]
        tableau = np.hstack([tableau[:, :n_total], tableau[:, -1:]])

    obj = np.zeros(tableau.shape[1])
    obj[:n_std] = c_std
    obj = _reduced_row(obj, tableau, basis)
    status = _iterate(tableau, obj, basis, allowed=n_total)
    if status == "unbounded":
        return LpSolution(status="unbounded", x=None, objective=None)

    z = np.zeros(n_total)
    z[basis] = tableau[:, -1]
    x = shift.copy()
    for i in range(n):
        for j, sgn in col_of[i]:
            x[i] += sgn * z[j]
    return LpSolution(status="optimal", x=x, objective=float(lp.c @ x))


def _reduced_row(obj: np.ndarray, tableau: np.ndarray, basis: np.ndarray) -> np.ndarray:
    row = obj.copy()
    row[-1] = 0.0
    for r, b in enumerate(basis):
        if row[b] != 0.0:
            row -= row[b] * tableau[r]
    return row


def _iterate(tableau: np.ndarray, obj: np.ndarray, basis: np.ndarray, allowed: int) -> str:
    """Run simplex pivots in place; ``allowed`` caps eligible columns."""
    m = tableau.shape[0]
    while True:
        eligible = np.nonzero(obj[:allowed] < -_TOL)[0]
        if eligible.size == 0:
            return "optimal"
        enter = int(eligible[0])  # Bland: lowest index
        col = tableau[:, enter]
        pos = np.nonzero(col > _TOL)[0]
        if pos.size == 0:
            return "unbounded"
        ratios = tableau[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
        leave = int(ties[np.argmin(basis[ties])])  # Bland: lowest basic index
        _pivot(tableau, obj, leave, enter)
        basis[leave] = enter


def _pivot(tableau: np.ndarray, obj: np.ndarray, r: int, c: int) -> None:
    tableau[r] /= tableau[r, c]
    col = tableau[:, c].copy()
    col[r] = 0.0
    tableau -= np.outer(col, tableau[r])
    if obj[c] != 0.0:
        obj -= obj[c] * tableau[r]


def _expel_artificials(tableau: np.ndarray, basis: np.ndarray, n_total: int) -> None:
    """Pivot zero-level artificials out of the basis where possible."""
    dummy = np.zeros(tableau.shape[1])
    for r in range(len(basis)):
        if basis[r] >= n_total:
            candidates = np.nonzero(np.abs(tableau[r, :n_total]) > _TOL)[0]
            if candidates.size:
                enter = int(candidates[0])
                _pivot(tableau, dummy, r, enter)
                basis[r] = enter
            # else: redundant row, caller drops it


def dump_text(lp: LinearProgram) -> str:
    """Plain-text dump (objective, rows, bounds) for external cross-checks."""
    lines = []
    terms = [
        f"{lp.c[i]:+.12g}*{lp.labels[i]}" for i in range(lp.n_vars) if lp.c[i] != 0.0
    ]
    lines.append("minimize " + (" ".join(terms) if terms else "0"))
    lines.append("subject to")

    def render(coeffs: np.ndarray) -> str:
        return " ".join(
            f"{coeffs[i]:+.12g}*{lp.labels[i]}" for i in np.nonzero(coeffs)[0]
        )

    for r in range(lp.a_eq.shape[0]):
        lines.append(f"  eq {lp.eq_labels[r]}: {render(lp.a_eq[r])} = {lp.b_eq[r]:.12g}")
    for r in range(lp.a_ub.shape[0]):
        lines.append(f"  le {lp.ub_labels[r]}: {render(lp.a_ub[r])} <= {lp.b_ub[r]:.12g}")
    lines.append("bounds")
    for i, label in enumerate(lp.labels):
        lines.append(f"  {lp.lb[i]:.12g} <= {label} <= {lp.ub[i]:.12g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Program builders
# ---------------------------------------------------------------------------


def _step_window(lo: float, hi: float, phi: float, use_phi: bool) -> tuple[float, float]:
    if not use_phi:
        return lo, hi
    a, b = lo * phi, hi * phi
    return (a, b) if a <= b else (b, a)


def _gain_block(bld: _Builder, alloc, bounds: StepBounds, use_phi: bool,
                tie_break: float):
    """Gain variables, their box bounds, step windows and update links.

    Each increment is split into nonnegative parts carrying the
    tie-break cost, so moving any gain has a (vanishingly small) price
    and the optimum is unique.
    """
    ids = alloc.controllable_ids
    gain_vars = {}
    for k, uid in enumerate(ids):
        i = alloc.index_of(uid)
        v_m = bld.var(f"m[{uid}]", alloc.m_lo[i], alloc.m_hi[i])
        v_d = bld.var(f"d[{uid}]", alloc.d_lo[i], alloc.d_hi[i])
        lo_m, hi_m = _step_window(bounds.dm_lo[k], bounds.dm_hi[k], bounds.phi_m[k], use_phi)
        lo_d, hi_d = _step_window(bounds.dd_lo[k], bounds.dd_hi[k], bounds.phi_d[k], use_phi)
        v_dm = bld.var(f"dm[{uid}]", lo_m, hi_m)
        v_dd = bld.var(f"dd[{uid}]", lo_d, hi_d)
        bld.eq(f"update_m[{uid}]", {v_dm: 1.0, v_m: -1.0}, -alloc.m[i])
        bld.eq(f"update_d[{uid}]", {v_dd: 1.0, v_d: -1.0}, -alloc.d[i])
        for v, tag, hi_w, lo_w in ((v_dm, "m", hi_m, lo_m), (v_dd, "d", hi_d, lo_d)):
            pos = bld.var(f"d{tag}_pos[{uid}]", 0.0, max(hi_w, 0.0), tie_break)
            neg = bld.var(f"d{tag}_neg[{uid}]", 0.0, max(-lo_w, 0.0), tie_break)
            bld.eq(f"split_d{tag}[{uid}]", {v: 1.0, pos: -1.0, neg: 1.0}, 0.0)
        gain_vars[uid] = (v_m, v_d, v_dm, v_dd)
    return gain_vars


def _mode_block(bld: _Builder, modes: ModeSet, alloc, gain_vars, kind: str,
                filter_tol: float):
    """Per-mode prediction variables and their sensitivity update rows."""
    cons = constrained_mode_indices(modes, filter_tol)
    tensor = modes.dzeta if kind == "zeta" else modes.dsigma
    current = modes.zetas if kind == "zeta" else modes.lambdas.real
    mode_vars = {}
    for i in cons:
        v = bld.var(f"{kind}[{i}]")
        coeffs = {v: 1.0}
        for uid, (_, _, v_dm, v_dd) in gain_vars.items():
            j = modes.unit_index(uid)
            coeffs[v_dm] = coeffs.get(v_dm, 0.0) - tensor[i, j, GAIN_M]
            coeffs[v_dd] = coeffs.get(v_dd, 0.0) - tensor[i, j, GAIN_D]
        bld.eq(f"update_{kind}[{i}]", coeffs, float(current[i]))
        mode_vars[i] = v
    return mode_vars


def _freq_block(bld: _Builder, fd: FreqConstraintData, gain_vars, costs: CostConfig,
                hard: bool):
    """Aggregate M/D definitions plus nadir/rocof limit rows.

    The limit rows always carry slack variables; ``hard`` pins them to
    zero instead of removing them, so the hard program presents exactly
    the same columns as the soft one and the two coincide once the soft
    optimum drives its slacks to zero.
    """
    v_m = bld.var("M", cost=0.0)
    v_d = bld.var("D", cost=0.0)
    v_dm = bld.var("dM")
    v_dd = bld.var("dD")
    coeffs_m = {v_m: 1.0}
    coeffs_d = {v_d: 1.0}
    for uid, (vm, vd, _, _) in gain_vars.items():
        w = fd.weights[uid]
        coeffs_m[vm] = -w
        coeffs_d[vd] = -w
    bld.eq("aggregate_m", coeffs_m, fd.m_fixed)
    bld.eq("aggregate_d", coeffs_d, fd.d_fixed)
    bld.eq("update_M", {v_dm: 1.0, v_m: -1.0}, -fd.m0)
    bld.eq("update_D", {v_dd: 1.0, v_d: -1.0}, -fd.d0)
    out = {"M": v_m, "D": v_d, "dM": v_dm, "dD": v_dd, "slacks": {}}
    if not fd.limits_enabled:
        return out

    # Limit rows share a small pad so soft and hard variants bind at the
    # same effective limit and the loop's exit tolerance has headroom.
    r_lim = fd.rocof_limit + fd.limit_pad
    n_lim = fd.nadir_limit + fd.limit_pad

    v_rocof = bld.var("rocof")
    bld.eq("rocof_taylor", {v_rocof: 1.0, v_dm: -fd.drocof_dm}, fd.rocof0)
    v_nadir = bld.var("nadir")
    bld.eq(
        "nadir_taylor",
        {v_nadir: 1.0, v_dm: -fd.dnadir_dm, v_dd: -fd.dnadir_dd},
        fd.nadir0,
    )
    out["rocof"] = v_rocof
    out["nadir"] = v_nadir

    cap = 0.0 if hard else INF
    s_f1 = bld.var("eta_f1", 0.0, cap, costs.c_f)
    s_f2 = bld.var("eta_f2", 0.0, cap, costs.c_f)
    s_r1 = bld.var("eta_fdot1", 0.0, cap, costs.c_fdot)
    s_r2 = bld.var("eta_fdot2", 0.0, cap, costs.c_fdot)
    out["slacks"] = {"eta_f1": s_f1, "eta_f2": s_f2, "eta_fdot1": s_r1, "eta_fdot2": s_r2}
    bld.le("nadir_hi", {v_nadir: 1.0, s_f2: -1.0}, n_lim)
    bld.le("nadir_lo", {v_nadir: -1.0, s_f1: -1.0}, n_lim)
    bld.le("rocof_hi", {v_rocof: 1.0, s_r2: -1.0}, r_lim)
    bld.le("rocof_lo", {v_rocof: -1.0, s_r1: -1.0}, r_lim)

    if fd.regime == "oscillatory" and fd.sg_present:
        # Nadir-time validity M/T - F_g < D, as <= with a small margin.
        bld.le("nadir_time", {v_m: 1.0 / fd.t_gov, v_d: -1.0}, fd.f_g - fd.tm_margin)
    return out


def _finish(bld: _Builder, gain_vars, mode_vars, freq_vars, extra) -> LinearProgram:
    meta = {"gains": gain_vars, "modes": mode_vars}
    if freq_vars is not None:
        meta["freq"] = freq_vars
    meta.update(extra)
    return bld.build(meta)


def build_step1(modes: ModeSet, alloc, bounds: StepBounds,
                filter_tol: float = 1e-9, use_phi: bool = True) -> LinearProgram:
    """Stability restoration: minimize the rightmost real part."""
    bld = _Builder()
    gain_vars = _gain_block(bld, alloc, bounds, use_phi)
    mode_vars = _mode_block(bld, modes, alloc, gain_vars, "sigma", filter_tol)
    v_max = bld.var("sigma_max", cost=1.0)
    for i, v in mode_vars.items():
        bld.le(f"epigraph[{i}]", {v: 1.0, v_max: -1.0}, 0.0)
    return _finish(bld, gain_vars, mode_vars, None, {"objective": "sigma_max"})


def _zeta_core(bld: _Builder, modes, alloc, bounds, filter_tol, use_phi, zeta_min_cost):
    gain_vars = _gain_block(bld, alloc, bounds, use_phi)
    mode_vars = _mode_block(bld, modes, alloc, gain_vars, "zeta", filter_tol)
    v_min = bld.var("zeta_min", cost=zeta_min_cost)
    for i, v in mode_vars.items():
        bld.le(f"epigraph[{i}]", {v_min: 1.0, v: -1.0}, 0.0)
    return gain_vars, mode_vars, v_min


def build_step2(modes: ModeSet, alloc, freq: FreqConstraintData, costs: CostConfig,
                bounds: StepBounds, zeta_floor: float,
                filter_tol: float = 1e-9, use_phi: bool = True) -> LinearProgram:
    """Damping-ratio improvement with soft frequency limits.

    ``zeta_floor`` is the phase's exit criterion, not a row; the
    objective drives the worst ratio upward until the loop stops.
    """
    del zeta_floor
    bld = _Builder()
    gain_vars, mode_vars, _ = _zeta_core(
        bld, modes, alloc, bounds, filter_tol, use_phi, zeta_min_cost=-costs.c_zeta
    )
    freq_vars = _freq_block(bld, freq, gain_vars, costs, soft=True)
    return _finish(bld, gain_vars, mode_vars, freq_vars, {"objective": "damping"})


def build_step3(modes: ModeSet, alloc, freq: FreqConstraintData, costs: CostConfig,
                bounds: StepBounds, zeta_floor: float,
                filter_tol: float = 1e-9) -> LinearProgram:
    """Control-effort reduction with hard limits and no step scaling."""
    bld = _Builder()
    gain_vars, mode_vars, _ = _zeta_core(
        bld, modes, alloc, bounds, filter_tol, use_phi=False, zeta_min_cost=0.0
    )
    for i, v in mode_vars.items():
        bld.le(f"zeta_floor[{i}]", {v: -1.0}, -zeta_floor)
    freq_vars = _freq_block(bld, freq, gain_vars, costs, soft=False)
    bld.cost[freq_vars["M"]] = costs.c_m
    bld.cost[freq_vars["D"]] = costs.c_d
    return _finish(bld, gain_vars, mode_vars, freq_vars, {"objective": "effort"})


def build_uniform(modes: ModeSet, alloc, freq: FreqConstraintData, costs: CostConfig,
                  bounds: StepBounds, zeta_floor: float,
                  filter_tol: float = 1e-9, use_phi: bool = True) -> LinearProgram:
    """Single combined program with a slack on the damping-ratio floor."""
    bld = _Builder()
    gain_vars, mode_vars, _ = _zeta_core(
        bld, modes, alloc, bounds, filter_tol, use_phi, zeta_min_cost=0.0
    )
    v_eta = bld.var("eta_zeta", 0.0, INF, costs.c_zeta)
    for i, v in mode_vars.items():
        bld.le(f"zeta_floor[{i}]", {v: -1.0, v_eta: -1.0}, -zeta_floor)
    freq_vars = _freq_block(bld, freq, gain_vars, costs, soft=True)
    freq_vars["slacks"]["eta_zeta"] = v_eta
    bld.cost[freq_vars["M"]] = costs.c_m
    bld.cost[freq_vars["D"]] = costs.c_d
    return _finish(bld, gain_vars, mode_vars, freq_vars, {"objective": "uniform"})
