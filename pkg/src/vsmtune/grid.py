"""Parametric linearized model of a multi-machine swing network.

Every generating unit, synchronous or converter-interfaced, contributes
an angle state and a speed state governed by

    m_j * dw_j/dt = P_j - d_eff_j * w_j - sum_k L_jk * theta_k
    dtheta_j/dt   = w_base * w_j

with ``L`` the Kron reduction of the line-susceptance Laplacian onto
the generator buses (powers in p.u. on ``base_power``, speeds in p.u.
on ``f0``, ``w_base = 2*pi*f0`` rad/s).  Synchronous units add one
turbine-governor state realizing the lead-lag droop response
``(r_inv + f_frac*T*s) / (1 + T*s)``.  The effective damping
``d_eff_j = d_j + d_sync_j`` includes a fixed per-unit synchronization
offset (negative for poorly tuned grid-following converters) on top of
the tunable gain ``d_j``.

One angle is grounded (the reference unit's) so the state matrix has
no structural zero eigenvalue; all other angles are relative to it.
The model carries closed-form derivatives of ``A`` with respect to
every unit's inertia and damping gain, which downstream eigensensitivity
computations rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DisconnectedNetworkError, GridModelError

SG = "SG"
GRID_FORMING = "GridFormingVSC"
GRID_FOLLOWING = "GridFollowingVSC"
UNIT_KINDS = (SG, GRID_FORMING, GRID_FOLLOWING)

DEFAULT_M_BOUNDS = (0.05, 15.0)
DEFAULT_D_BOUNDS = (0.0, 25.0)


@dataclass(frozen=True)
class Governor:
    """Turbine-governor parameters of a synchronous unit."""

    t_turbine: float  # s
    r_inv: float  # p.u. inverse droop gain
    f_frac: float  # high-pressure turbine fraction, dimensionless


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    b: float  # susceptance magnitude, p.u. on base_power


@dataclass(frozen=True)
class GenUnit:
    """One generating unit attached to a bus.

    ``m`` and ``d`` hold the current inertia (s) and damping (p.u.)
    gains; for converter units these are the tunable initial values and
    the ``*_lo``/``*_hi`` fields are their box bounds.  ``d_sync`` is a
    fixed damping offset representing synchronization behavior of the
    converter control (plant data, not a decision variable).
    """

    uid: str
    bus: int
    kind: str
    p_g: float  # dispatched power, MW
    m: float  # inertia constant, s
    d: float  # damping gain, p.u.
    governor: Governor | None = None
    d_sync: float = 0.0
    m_lo: float = DEFAULT_M_BOUNDS[0]
    m_hi: float = DEFAULT_M_BOUNDS[1]
    d_lo: float = DEFAULT_D_BOUNDS[0]
    d_hi: float = DEFAULT_D_BOUNDS[1]


@dataclass(frozen=True)
class GridCase:
    """Physical scenario: network, units and bases."""

    buses: tuple[int, ...]
    lines: tuple[Line, ...]
    units: tuple[GenUnit, ...]
    base_power: float  # MVA
    f0: float  # Hz

    def validate(self) -> list[str]:
        """Collect every semantic violation (empty list when valid)."""
        problems: list[str] = []
        if len(set(self.buses)) != len(self.buses):
            problems.append("duplicate bus ids")
        if self.base_power <= 0:
            problems.append(f"base_power must be > 0, got {self.base_power}")
        if self.f0 <= 0:
            problems.append(f"f0 must be > 0, got {self.f0}")
        if not self.units:
            problems.append("at least one unit is required")
        bus_set = set(self.buses)
        for ln in self.lines:
            if ln.from_bus not in bus_set or ln.to_bus not in bus_set:
                problems.append(f"line {ln.from_bus}-{ln.to_bus} references unknown bus")
            if ln.b <= 0:
                problems.append(f"line {ln.from_bus}-{ln.to_bus} susceptance must be > 0")
            if ln.from_bus == ln.to_bus:
                problems.append(f"line at bus {ln.from_bus} connects a bus to itself")
        seen_ids: set[str] = set()
        seen_buses: set[int] = set()
        sg_t: set[float] = set()
        for u in self.units:
            tag = f"unit {u.uid!r}"
            if u.uid in seen_ids:
                problems.append(f"{tag}: duplicate unit id")
            seen_ids.add(u.uid)
            if u.bus not in bus_set:
                problems.append(f"{tag}: unknown bus {u.bus}")
            if u.bus in seen_buses:
                problems.append(f"{tag}: bus {u.bus} already hosts a unit")
            seen_buses.add(u.bus)
            if u.kind not in UNIT_KINDS:
                problems.append(f"{tag}: unknown kind {u.kind!r}")
            if u.p_g < 0:
                problems.append(f"{tag}: field p_g must be >= 0, got {u.p_g}")
            if u.m <= 0:
                problems.append(f"{tag}: field m must be > 0, got {u.m}")
            if u.d < 0:
                problems.append(f"{tag}: field d must be >= 0, got {u.d}")
            if not (u.m_lo <= u.m <= u.m_hi) or u.m_lo <= 0:
                problems.append(f"{tag}: inertia bounds must satisfy 0 < m_lo <= m <= m_hi")
            if not (u.d_lo <= u.d <= u.d_hi) or u.d_lo < 0:
                problems.append(f"{tag}: damping bounds must satisfy 0 <= d_lo <= d <= d_hi")
            if u.kind == SG:
                if u.governor is None:
                    problems.append(f"{tag}: SG units must carry governor parameters")
                else:
                    g = u.governor
                    if g.t_turbine <= 0:
                        problems.append(f"{tag}: governor field T must be > 0")
                    if not 0.0 <= g.f_frac <= 1.0:
                        problems.append(f"{tag}: governor field f_frac must be in [0, 1]")
                    if g.r_inv < 0:
                        problems.append(f"{tag}: governor field r_inv must be >= 0")
                    sg_t.add(g.t_turbine)
            elif u.governor is not None:
                problems.append(f"{tag}: converter units carry no governor")
        if len(sg_t) > 1:
            problems.append(f"all SG governors must share one time constant, got {sorted(sg_t)}")
        if not self._connected():
            problems.append("network graph is not connected")
        return problems

    def _connected(self) -> bool:
        if not self.buses:
            return False
        adj: dict[int, set[int]] = {b: set() for b in self.buses}
        for ln in self.lines:
            if ln.from_bus in adj and ln.to_bus in adj:
                adj[ln.from_bus].add(ln.to_bus)
                adj[ln.to_bus].add(ln.from_bus)
        seen = {self.buses[0]}
        stack = [self.buses[0]]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return len(seen) == len(self.buses)

    def unit_by_id(self, uid: str) -> GenUnit:
        for u in self.units:
            if u.uid == uid:
                return u
        raise KeyError(uid)

    def total_generation(self) -> float:
        return float(sum(u.p_g for u in self.units))


@dataclass
class LinearModel:
    """State-space model with parametric derivatives of ``A``.

    ``da_dm[uid]`` / ``da_dd[uid]`` are exact derivatives of ``A`` with
    respect to unit ``uid``'s inertia and damping gain; they are nonzero
    only in the rows owned by that unit's states.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    state_labels: tuple[tuple[str, str], ...]
    da_dm: dict[str, np.ndarray]
    da_dd: dict[str, np.ndarray]
    gain_units: tuple[str, ...]
    f0: float
    source: tuple | None = field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    def speed_rows(self) -> dict[str, int]:
        return {uid: i for i, (uid, name) in enumerate(self.state_labels) if name == "speed"}


def network_laplacian(case: GridCase) -> tuple[np.ndarray, dict[int, int]]:
    """Susceptance-weighted Laplacian over all buses plus a bus index map."""
    index = {bus: i for i, bus in enumerate(case.buses)}
    n = len(case.buses)
    lap = np.zeros((n, n))
    for ln in case.lines:
        i, j = index[ln.from_bus], index[ln.to_bus]
        lap[i, i] += ln.b
        lap[j, j] += ln.b
        lap[i, j] -= ln.b
        lap[j, i] -= ln.b
    return lap, index


def kron_reduce(lap: np.ndarray, keep: list[int]) -> tuple[np.ndarray, np.ndarray]:
    """Eliminate all rows/columns not in ``keep`` by Schur complement.

    Returns the reduced Laplacian and an injection-distribution matrix
    ``inj`` of shape ``(len(keep), n)``: a power injection vector ``p``
    over all original buses acts on the reduced network as ``inj @ p``.
    """
    n = lap.shape[0]
    keep = list(keep)
    elim = [i for i in range(n) if i not in keep]
    inj = np.zeros((len(keep), n))
    inj[np.arange(len(keep)), keep] = 1.0
    if not elim:
        return lap[np.ix_(keep, keep)].copy(), inj
    l_ss = lap[np.ix_(keep, keep)]
    l_se = lap[np.ix_(keep, elim)]
    l_ee = lap[np.ix_(elim, elim)]
    try:
        x = np.linalg.solve(l_ee, np.hstack([l_se.T, np.eye(len(elim))]))
    except np.linalg.LinAlgError as exc:
        raise DisconnectedNetworkError(
            "interior Laplacian block is singular; network is disconnected"
        ) from exc
    reduced = l_ss - l_se @ x[:, : len(keep)]
    inj[:, elim] = -l_se @ x[:, len(keep):]
    return reduced, inj


def _reference_unit(case: GridCase) -> int:
    for kind in (SG, GRID_FORMING):
        for i, u in enumerate(case.units):
            if u.kind == kind:
                return i
    return 0


def _build_model(case: GridCase, m: np.ndarray, d: np.ndarray,
                 disturbance_bus: int | None) -> LinearModel:
    problems = case.validate()
    if problems:
        if any("not connected" in p for p in problems):
            raise DisconnectedNetworkError("; ".join(problems))
        raise GridModelError("; ".join(problems))
    if np.any(m <= 0):
        bad = case.units[int(np.argmax(m <= 0))].uid
        raise GridModelError(f"unit {bad!r}: inertia gain must stay > 0")

    units = case.units
    n_units = len(units)
    lap, bus_index = network_laplacian(case)
    keep = [bus_index[u.bus] for u in units]
    lap_red, inj = kron_reduce(lap, keep)

    if disturbance_bus is None:
        disturbance_bus = units[0].bus
    if disturbance_bus not in bus_index:
        raise GridModelError(f"disturbance bus {disturbance_bus} not in the case")
    dist = inj[:, bus_index[disturbance_bus]]

    ref = _reference_unit(case)
    w_base = 2.0 * math.pi * case.f0

    labels: list[tuple[str, str]] = []
    angle_ix: list[int | None] = [None] * n_units
    speed_ix: list[int] = [0] * n_units
    gov_ix: list[int | None] = [None] * n_units
    for i, u in enumerate(units):
        if i != ref:
            angle_ix[i] = len(labels)
            labels.append((u.uid, "angle"))
        speed_ix[i] = len(labels)
        labels.append((u.uid, "speed"))
        if u.kind == SG:
            gov_ix[i] = len(labels)
            labels.append((u.uid, "governor"))
    n = len(labels)

    a = np.zeros((n, n))
    for i, u in enumerate(units):
        if i != ref:
            a[angle_ix[i], speed_ix[i]] += w_base
            a[angle_ix[i], speed_ix[ref]] -= w_base
        row = speed_ix[i]
        d_eff = d[i] + u.d_sync
        if u.kind == SG:
            d_eff += u.governor.f_frac
        a[row, speed_ix[i]] -= d_eff / m[i]
        for k in range(n_units):
            if k != ref:
                a[row, angle_ix[k]] -= lap_red[i, k] / m[i]
        if u.kind == SG:
            a[row, gov_ix[i]] -= 1.0 / m[i]
            g = u.governor
            a[gov_ix[i], speed_ix[i]] = (g.r_inv - g.f_frac) / g.t_turbine
            a[gov_ix[i], gov_ix[i]] = -1.0 / g.t_turbine

    b = np.zeros((n, 1))
    for i in range(n_units):
        b[speed_ix[i], 0] = dist[i] / m[i]

    c = np.zeros((n_units, n))
    for i in range(n_units):
        c[i, speed_ix[i]] = 1.0
    d_mat = np.zeros((n_units, 1))

    da_dm: dict[str, np.ndarray] = {}
    da_dd: dict[str, np.ndarray] = {}
    for i, u in enumerate(units):
        row = speed_ix[i]
        dm = np.zeros((n, n))
        dm[row, :] = -a[row, :] / m[i]
        da_dm[u.uid] = dm
        dd = np.zeros((n, n))
        dd[row, speed_ix[i]] = -1.0 / m[i]
        da_dd[u.uid] = dd

    return LinearModel(
        a=a,
        b=b,
        c=c,
        d=d_mat,
        state_labels=tuple(labels),
        da_dm=da_dm,
        da_dd=da_dd,
        gain_units=tuple(u.uid for u in units),
        f0=case.f0,
        source=(case, m.copy(), d.copy(), disturbance_bus),
    )


def linearize(case: GridCase, alloc, disturbance_bus: int | None = None) -> LinearModel:
    """Build the linearized model at the gains held in ``alloc``.

    ``alloc`` must assign an inertia and damping gain to every unit (see
    :class:`vsmtune.allocation.AllocationState`).  The single disturbance
    input enters at ``disturbance_bus`` (default: the first unit's bus),
    distributed through the Kron reduction if the bus is a passive one.
    """
    if tuple(alloc.unit_ids) != tuple(u.uid for u in case.units):
        raise GridModelError("allocation unit order does not match the case")
    m = np.asarray(alloc.m, dtype=float)
    d = np.asarray(alloc.d, dtype=float)
    return _build_model(case, m, d, disturbance_bus)


def perturb_gain(model: LinearModel, unit_id: str, dm: float = 0.0, dd: float = 0.0) -> LinearModel:
    """Re-linearize with unit ``unit_id``'s gains shifted by ``(dm, dd)``.

    Exists to support finite-difference checks of the parametric
    derivatives; equivalent to calling :func:`linearize` with modified
    gains.
    """
    if model.source is None:
        raise GridModelError("model carries no source data; cannot perturb")
    case, m, d, disturbance_bus = model.source
    if unit_id not in model.gain_units:
        raise GridModelError(f"unknown unit {unit_id!r}")
    i = model.gain_units.index(unit_id)
    m = m.copy()
    d = d.copy()
    m[i] += dm
    d[i] += dd
    if m[i] <= 0:
        raise GridModelError(f"unit {unit_id!r}: perturbed inertia {m[i]} not positive")
    return _build_model(case, m, d, disturbance_bus)
