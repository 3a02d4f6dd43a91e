"""Eigenstructure, damping ratios and first-order gain sensitivities.

For each mode ``lambda_i = sigma_i + j*omega_i`` the left/right
eigenvectors are scaled bi-orthonormally (``v_i^T u_i = 1``) so that the
eigenvalue sensitivity to any parameter ``alpha`` entering the state
matrix is simply ``v_i^T (dA/dalpha) u_i``, and the damping-ratio
sensitivity follows by the chain rule through
``zeta_i = -sigma_i / |lambda_i|``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from .errors import DefectiveMatrixError

GAIN_M = 0
GAIN_D = 1


@dataclass(frozen=True)
class ModeSet:
    """Full spectrum of one linearization, with sensitivity tensors.

    Columns of ``right``/``left`` hold ``u_i``/``v_i`` with
    ``v_i^T u_i = 1``.  The sensitivity tensors are indexed
    ``[mode, unit, gain]`` with unit order ``gain_units`` and gain axis
    ``(GAIN_M, GAIN_D)``.  Modes are sorted by (real, imag) ascending so
    identical inputs always produce identical orderings.
    """

    lambdas: np.ndarray
    right: np.ndarray
    left: np.ndarray
    zetas: np.ndarray
    gain_units: tuple[str, ...]
    dsigma: np.ndarray
    domega: np.ndarray
    dzeta: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.lambdas)

    def unit_index(self, uid: str) -> int:
        return self.gain_units.index(uid)


class WorstModes(NamedTuple):
    sigma_max: float
    zeta_min: float
    sigma_index: int
    zeta_index: int


def damping_ratio(lam: complex) -> float:
    """-Re(lam)/|lam|; defined as 0 for a numerically zero eigenvalue."""
    mag = abs(lam)
    if mag == 0.0:
        return 0.0
    return float(-lam.real / mag)


def decompose(model, cluster_rtol: float = 1e-8) -> ModeSet:
    """Eigendecompose ``model.a`` and populate gain sensitivities.

    Raises :class:`DefectiveMatrixError` when eigenvalues cluster within
    ``cluster_rtol * ||A||`` (first-order sensitivity theory breaks down
    for repeated eigenvalues, so they are rejected loudly rather than
    averaged) or when a left/right pair is numerically orthogonal.
    """
    a = np.asarray(model.a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("state matrix must be square")
    if not np.all(np.isfinite(a)):
        raise ValueError("state matrix has non-finite entries")
    n = a.shape[0]
    a_norm = np.linalg.norm(a, 2) if n else 0.0

    w, vl, vr = scipy.linalg.eig(a, left=True, right=True)
    order = np.lexsort((w.imag, w.real))
    w = w[order]
    vr = vr[:, order]
    # scipy returns left vectors satisfying vl^H A = lam vl^H; the
    # bi-orthogonality convention here uses plain transposes.
    vl = np.conj(vl[:, order])

    clusters = _eig_clusters(w, cluster_rtol * a_norm)
    if clusters:
        raise DefectiveMatrixError(clusters)

    denom = np.einsum("ij,ij->j", vl, vr)
    if np.any(np.abs(denom) < 1e-12):
        bad = w[np.abs(denom) < 1e-12]
        raise DefectiveMatrixError([tuple(bad)])
    vl = vl / denom

    zetas = np.array([damping_ratio(lam) for lam in w])

    units = tuple(model.gain_units)
    dsigma = np.zeros((n, len(units), 2))
    domega = np.zeros((n, len(units), 2))
    for j, uid in enumerate(units):
        for gain, da in ((GAIN_M, model.da_dm[uid]), (GAIN_D, model.da_dd[uid])):
            sens = np.einsum("ij,ij->j", vl, da @ vr)
            dsigma[:, j, gain] = sens.real
            domega[:, j, gain] = sens.imag

    mags = np.abs(w)
    safe = np.where(mags > 0.0, mags, 1.0)
    # dzeta = omega * (sigma*domega - omega*dsigma) / |lam|^3, zero-filled
    # for a zero eigenvalue (such modes are filtered downstream).
    dzeta = (
        w.imag[:, None, None]
        * (w.real[:, None, None] * domega - w.imag[:, None, None] * dsigma)
        / safe[:, None, None] ** 3
    )
    dzeta[mags == 0.0] = 0.0

    return ModeSet(
        lambdas=w,
        right=vr,
        left=vl,
        zetas=zetas,
        gain_units=units,
        dsigma=dsigma,
        domega=domega,
        dzeta=dzeta,
    )


def _eig_clusters(w: np.ndarray, threshold: float) -> list[tuple[complex, ...]]:
    n = len(w)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for k in range(i + 1, n):
            if abs(w[i] - w[k]) < threshold:
                parent[find(i)] = find(k)
    groups: dict[int, list[complex]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(complex(w[i]))
    return [tuple(g) for g in groups.values() if len(g) > 1]


def eig_sensitivity(modes: ModeSet, da: np.ndarray, mode: int) -> complex:
    """d(lambda_i)/d(alpha) = v_i^T (dA/dalpha) u_i for bi-orthonormal pairs."""
    if not 0 <= mode < modes.n_modes:
        raise IndexError(f"mode index {mode} out of range")
    return complex(modes.left[:, mode] @ (np.asarray(da) @ modes.right[:, mode]))


def zeta_sensitivity(modes: ModeSet, mode: int, dsigma: float, domega: float) -> float:
    """Damping-ratio sensitivity from the eigenvalue sensitivity parts."""
    if not 0 <= mode < modes.n_modes:
        raise IndexError(f"mode index {mode} out of range")
    lam = modes.lambdas[mode]
    mag2 = lam.real**2 + lam.imag**2
    if mag2 == 0.0:
        raise ZeroDivisionError("damping-ratio sensitivity undefined at lambda = 0")
    return float(lam.imag * (lam.real * domega - lam.imag * dsigma) / mag2**1.5)


def worst_modes(modes: ModeSet, filter_tol: float = 1e-9) -> WorstModes:
    """Rightmost real part and smallest damping ratio over retained modes.

    Modes with ``|lambda| <= filter_tol`` (numerical-zero residue) are
    excluded from both extrema.
    """
    mask = np.abs(modes.lambdas) > filter_tol
    if not np.any(mask):
        raise ValueError("all modes fall below the magnitude filter")
    idx = np.nonzero(mask)[0]
    sig = modes.lambdas[idx].real
    zet = modes.zetas[idx]
    i_sig = idx[int(np.argmax(sig))]
    i_zet = idx[int(np.argmin(zet))]
    return WorstModes(
        sigma_max=float(modes.lambdas[i_sig].real),
        zeta_min=float(modes.zetas[i_zet]),
        sigma_index=int(i_sig),
        zeta_index=int(i_zet),
    )


def constrained_mode_indices(modes: ModeSet, filter_tol: float = 1e-9) -> list[int]:
    """Representative mode indices: filtered, one per conjugate pair."""
    out = []
    for i, lam in enumerate(modes.lambdas):
        if abs(lam) <= filter_tol:
            continue
        if lam.imag < 0.0:
            continue
        out.append(i)
    return out


def match_modes(prev: ModeSet, new: ModeSet) -> np.ndarray:
    """Pair previous modes with new ones by eigenvector correlation.

    Returns ``perm`` with ``perm[i]`` the index in ``new`` matched to
    mode ``i`` of ``prev`` (maximum total ``|v_prev^T u_new|``
    assignment; solver orderings are arbitrary across relinearizations).
    """
    if prev.n_modes != new.n_modes:
        raise ValueError("mode sets differ in size; cannot match")
    corr = np.abs(prev.left.T @ new.right)
    row, col = linear_sum_assignment(-corr)
    perm = np.empty(prev.n_modes, dtype=int)
    perm[row] = col
    return perm
