"""Fixed-step linear time-domain simulation.

Serves as the independent oracle for the closed-form frequency metrics
and for the Gramian-based H2 norm, and as the post-optimization
disturbance-response demonstration.  Integration is classical 4th-order
Runge-Kutta with a fixed step; for an LTI system with an input held
constant over each step the four stages collapse exactly to the affine
recurrence

    x_{k+1} = Phi x_k + Gamma,   Phi = sum_{k=0..4} (h A)^k / k!,
    Gamma   = h (I + hA/2 + (hA)^2/6 + (hA)^3/24) B u,

so both kernel backends run that recurrence (the algebra is identical
to evaluating the k1..k4 stages, which the test suite verifies).
"""

from __future__ import annotations

import csv
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import SimulationDivergedError, VsmtuneError


class EnergyResult(NamedTuple):
    value: float
    horizon_warning: bool  # True when the horizon is < 5 slowest time constants


def rk4_propagator(a: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One-step RK4 state and input operators for constant input."""
    n = a.shape[0]
    ha = dt * np.asarray(a, dtype=float)
    eye = np.eye(n)
    ha2 = ha @ ha
    ha3 = ha2 @ ha
    phi = eye + ha + ha2 / 2.0 + ha3 / 6.0 + ha3 @ ha / 24.0
    gam_op = dt * (eye + ha / 2.0 + ha2 / 6.0 + ha3 / 24.0)
    return phi, gam_op


def _steps(horizon: float, dt: float) -> int:
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if horizon <= dt:
        raise ValueError(f"horizon must exceed dt, got {horizon} <= {dt}")
    return int(round(horizon / dt))


def step_response(model, dp: float, horizon: float, dt: float = 1e-3):
    """Response to a step input of magnitude ``dp`` from rest.

    Returns ``(t, y)`` with ``y`` of shape ``(len(t), n_outputs)``.
    Raises :class:`SimulationDivergedError` if the state magnitude
    passes 1e12 (unstable model).
    """
    n_steps = _steps(horizon, dt)
    a = np.asarray(model.a, dtype=float)
    b = np.asarray(model.b, dtype=float)
    u = np.full(b.shape[1], float(dp))
    phi, gam_op = rk4_propagator(a, dt)
    gamma = gam_op @ (b @ u)
    x0 = np.zeros(a.shape[0])
    y, diverged = _kernels.affine_recurrence(phi, gamma, x0, model.c, n_steps)
    if diverged >= 0:
        raise SimulationDivergedError(diverged * dt)
    y = y + np.asarray(model.d) @ u
    t = np.arange(n_steps + 1) * dt
    return t, y


def free_response(model, x0: np.ndarray, horizon: float, dt: float = 1e-3):
    """Unforced response from initial state ``x0``."""
    n_steps = _steps(horizon, dt)
    phi, _ = rk4_propagator(np.asarray(model.a, dtype=float), dt)
    gamma = np.zeros(model.a.shape[0])
    y, diverged = _kernels.affine_recurrence(phi, gamma, np.asarray(x0, dtype=float),
                                             model.c, n_steps)
    if diverged >= 0:
        raise SimulationDivergedError(diverged * dt)
    t = np.arange(n_steps + 1) * dt
    return t, y


def impulse_energy(model, horizon: float, dt: float = 1e-3) -> EnergyResult:
    """sqrt of the total output energy of the impulse response.

    The impulse through input channel k is realized as the free response
    from ``x0 = B[:, k]``; channel energies add.  The result carries a
    warning flag when the horizon covers fewer than five of the slowest
    time constants (truncation would then bias the integral).
    """
    a = np.asarray(model.a, dtype=float)
    if np.any(np.asarray(model.d) != 0.0):
        raise VsmtuneError("impulse energy undefined for nonzero feedthrough")
    eigs = np.linalg.eigvals(a)
    if np.any(eigs.real >= 0):
        raise VsmtuneError("impulse energy requires a stable model")
    tau_slowest = 1.0 / np.abs(eigs.real).min()
    warned = horizon < 5.0 * tau_slowest

    b = np.asarray(model.b, dtype=float)
    total = 0.0
    for k in range(b.shape[1]):
        t, y = free_response(model, b[:, k], horizon, dt)
        total += np.trapz(np.sum(y * y, axis=1), t)
    return EnergyResult(value=float(np.sqrt(total)), horizon_warning=bool(warned))


def write_trajectory_csv(path, t: np.ndarray, y: np.ndarray,
                         output_names: list[str] | None = None) -> None:
    """Trajectory CSV: columns t, y_1..y_m, 12 significant digits, LF."""
    y = np.atleast_2d(y)
    names = output_names or [f"y_{k + 1}" for k in range(y.shape[1])]
    if len(names) != y.shape[1]:
        raise ValueError("one output name per column required")
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + list(names))
        for ti, row in zip(t, y):
            writer.writerow([f"{ti:.12g}"] + [f"{v:.12g}" for v in row])
