"""H2 and H-infinity norms of the closed-loop model.

Evaluation-only: the norms characterize terminal allocations and are
deliberately kept outside the optimization loop.  The H2 norm comes
from the controllability Gramian (Lyapunov equation solved by direct
Kronecker vectorization, which is trivially correct at these state
counts); the H-infinity norm from bisection on the Hamiltonian matrix
whose imaginary-axis eigenvalues certify that a candidate gamma is
below the norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import VsmtuneError

_IMAG_AXIS_TOL = 1e-8  # absolute |Re| threshold for Hamiltonian eigenvalues


@dataclass(frozen=True)
class NormReport:
    h2: float  # +inf when unstable
    hinf: float
    hinf_bracket: tuple[float, float]
    stable: bool


def is_hurwitz(a: np.ndarray) -> bool:
    if a.size == 0:
        return True
    return bool(np.max(np.linalg.eigvals(a).real) < 0.0)


def h2_norm(model) -> float:
    """sqrt(trace(C P C^T)) with A P + P A^T + B B^T = 0.

    Returns ``inf`` for an unstable model (the norm genuinely is);
    raises for nonzero feedthrough, which makes the H2 norm undefined.
    """
    a = np.asarray(model.a, dtype=float)
    b = np.asarray(model.b, dtype=float)
    c = np.asarray(model.c, dtype=float)
    if np.any(np.asarray(model.d) != 0.0):
        raise VsmtuneError("H2 norm undefined for nonzero feedthrough")
    if not is_hurwitz(a):
        return math.inf
    n = a.shape[0]
    if n == 0:
        return 0.0
    eye = np.eye(n)
    lhs = np.kron(eye, a) + np.kron(a, eye)
    rhs = -(b @ b.T).reshape(-1, order="F")
    gram = np.linalg.solve(lhs, rhs).reshape((n, n), order="F")
    val = np.trace(c @ gram @ c.T)
    return float(np.sqrt(max(val, 0.0)))


def _hamiltonian(a, b, c, d, gamma: float) -> np.ndarray:
    p = b.shape[1]
    r = gamma**2 * np.eye(p) - d.T @ d
    r_inv = np.linalg.inv(r)
    a_bar = a + b @ r_inv @ d.T @ c
    top = np.hstack([a_bar, b @ r_inv @ b.T])
    bottom = np.hstack([-c.T @ (np.eye(c.shape[0]) + d @ r_inv @ d.T) @ c, -a_bar.T])
    return np.vstack([top, bottom])


def _gamma_exceeded(a, b, c, d, gamma: float) -> bool:
    """True when gamma is *not* an upper bound (imaginary-axis eigenvalue)."""
    ham = _hamiltonian(a, b, c, d, gamma)
    eigs = np.linalg.eigvals(ham)
    return bool(np.any(np.abs(eigs.real) < _IMAG_AXIS_TOL))


def hinf_norm(model, tol: float = 1e-6) -> tuple[float, tuple[float, float]]:
    """Peak gain by gamma-bisection on the Hamiltonian matrix.

    Returns ``(value, (lo, hi))`` with the final bracket of relative
    width <= ``tol``; ``(inf, (inf, inf))`` for an unstable model.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    a = np.asarray(model.a, dtype=float)
    b = np.asarray(model.b, dtype=float)
    c = np.asarray(model.c, dtype=float)
    d = np.asarray(model.d, dtype=float)
    if not is_hurwitz(a):
        return math.inf, (math.inf, math.inf)
    sigma_d = float(np.linalg.svd(d, compute_uv=False).max()) if d.size else 0.0
    if a.shape[0] == 0:
        return sigma_d, (sigma_d, sigma_d)

    if not np.any(b) or not np.any(c):
        return sigma_d, (sigma_d, sigma_d)
    g0 = d - c @ np.linalg.solve(a, b)
    dc_gain = float(np.linalg.svd(g0, compute_uv=False).max())
    lo = max(sigma_d, dc_gain)

    # Keep gamma strictly above sigma_max(D) so R stays invertible.
    floor = sigma_d * (1.0 + 1e-9) + 1e-300
    hi = max(2.0 * lo, floor, 1e-12)
    for _ in range(200):
        if not _gamma_exceeded(a, b, c, d, hi):
            break
        lo = hi
        hi *= 2.0
    else:
        raise VsmtuneError("H-infinity upper bound search failed to terminate")

    while hi - lo > tol * max(lo, 1e-300):
        mid = 0.5 * (lo + hi)
        if mid <= floor:
            lo = floor
            break
        if _gamma_exceeded(a, b, c, d, mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), (lo, hi)


def norm_report(model, tol: float = 1e-6) -> NormReport:
    """NormReport of the model (infinite entries when unstable)."""
    if not is_hurwitz(np.asarray(model.a, dtype=float)):
        return NormReport(h2=math.inf, hinf=math.inf,
                          hinf_bracket=(math.inf, math.inf), stable=False)
    hinf, bracket = hinf_norm(model, tol)
    return NormReport(h2=h2_norm(model), hinf=hinf, hinf_bracket=bracket, stable=True)
