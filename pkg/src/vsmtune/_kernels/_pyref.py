"""Pure-Python (numpy) reference implementation of the trajectory kernel."""

from __future__ import annotations

import numpy as np


def affine_recurrence(phi, gamma, x0, c, n_steps, limit):
    n = phi.shape[0]
    x = x0.copy()
    states = np.zeros((n_steps + 1, n))
    states[0] = x
    diverged_at = -1
    for k in range(1, n_steps + 1):
        x = phi @ x + gamma
        if np.abs(x).max() > limit:
            diverged_at = k
            break
        states[k] = x
    y = states @ c.T
    if diverged_at >= 0:
        y[diverged_at:] = 0.0
    return y, diverged_at
