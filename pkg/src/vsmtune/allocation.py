"""Per-unit gain allocation state shared by the model, LP and loop layers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class AllocationState:
    """Current inertia/damping gains of every unit plus their box bounds.

    Gains are stored for *all* units so the model builder needs no other
    gain source; synchronous machines are simply non-controllable
    entries whose bounds pin them to their case values.  Arrays follow
    the case's unit order.
    """

    unit_ids: tuple[str, ...]
    m: np.ndarray
    d: np.ndarray
    m_lo: np.ndarray
    m_hi: np.ndarray
    d_lo: np.ndarray
    d_hi: np.ndarray
    controllable: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        for name in ("m", "d", "m_lo", "m_hi", "d_lo", "d_hi", "controllable"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (len(self.unit_ids),):
                raise ValueError(f"{name} must have one entry per unit")
            object.__setattr__(self, name, arr)
        if np.any(self.m_lo > self.m_hi) or np.any(self.d_lo > self.d_hi):
            raise ValueError("lower bounds exceed upper bounds")
        if np.any(self.m < self.m_lo - 1e-12) or np.any(self.m > self.m_hi + 1e-12):
            raise ValueError("inertia gains outside box bounds")
        if np.any(self.d < self.d_lo - 1e-12) or np.any(self.d > self.d_hi + 1e-12):
            raise ValueError("damping gains outside box bounds")

    @property
    def controllable_ids(self) -> tuple[str, ...]:
        return tuple(uid for uid, c in zip(self.unit_ids, self.controllable) if c)

    def index_of(self, unit_id: str) -> int:
        return self.unit_ids.index(unit_id)

    def gains_of(self, unit_id: str) -> tuple[float, float]:
        i = self.index_of(unit_id)
        return float(self.m[i]), float(self.d[i])

    def with_gains(self, m: np.ndarray, d: np.ndarray, iteration: int | None = None):
        """New state with replaced gain vectors (bounds unchanged)."""
        m = np.array(m, dtype=float)
        d = np.array(d, dtype=float)
        if np.any((m != self.m) & ~self.controllable):
            raise ValueError("attempt to change a non-controllable inertia gain")
        if np.any((d != self.d) & ~self.controllable):
            raise ValueError("attempt to change a non-controllable damping gain")
        it = self.iteration + 1 if iteration is None else iteration
        return replace(self, m=m, d=d, iteration=it)


def allocation_from_case(case) -> AllocationState:
    """Initial allocation: case gains, converter units controllable."""
    ids = tuple(u.uid for u in case.units)
    m = np.array([u.m for u in case.units], dtype=float)
    d = np.array([u.d for u in case.units], dtype=float)
    ctrl = np.array([u.kind != "SG" for u in case.units])
    m_lo = np.where(ctrl, [u.m_lo for u in case.units], m)
    m_hi = np.where(ctrl, [u.m_hi for u in case.units], m)
    d_lo = np.where(ctrl, [u.d_lo for u in case.units], d)
    d_hi = np.where(ctrl, [u.d_hi for u in case.units], d)
    return AllocationState(
        unit_ids=ids,
        m=m,
        d=d,
        m_lo=m_lo,
        m_hi=m_hi,
        d_lo=d_lo,
        d_hi=d_hi,
        controllable=ctrl,
    )
