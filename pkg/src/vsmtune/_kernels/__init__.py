"""Numerical kernels with a compiled core and a pure-Python fallback.

The only genuinely hot loop in the package is the fixed-step trajectory
recurrence behind the time-domain simulator (tens to hundreds of
thousands of small matrix-vector steps per oracle run).  It is provided
twice: a Cython extension (``_speedups``) and a numpy reference
implementation (``_pyref``).  The compiled backend is selected at import
time when available; :func:`use_backend` switches explicitly, e.g. for
benchmarking or for exercising the fallback in tests.  There is no
environment-variable override by design: runs stay reproducible from
explicit configuration alone.
"""

from __future__ import annotations

import numpy as np

from . import _pyref

try:
    from . import _speedups

    _HAVE_COMPILED = True
except ImportError:  # pragma: no cover - depends on build environment
    _speedups = None
    _HAVE_COMPILED = False

_active_name = "compiled" if _HAVE_COMPILED else "python"

__all__ = [
    "affine_recurrence",
    "available_backends",
    "backend_name",
    "use_backend",
]


def available_backends() -> tuple[str, ...]:
    return ("compiled", "python") if _HAVE_COMPILED else ("python",)


def backend_name() -> str:
    """Name of the backend currently answering kernel calls."""
    return _active_name


def use_backend(name: str) -> None:
    """Select the kernel backend: ``"compiled"`` or ``"python"``."""
    global _active_name
    if name not in available_backends():
        raise ValueError(
            f"backend {name!r} not available; have {available_backends()}"
        )
    _active_name = name


def affine_recurrence(phi, gamma, x0, c, n_steps, limit=1e12):
    """Run the recurrence x <- phi @ x + gamma, sampling y = c @ x.

    Returns ``(y, diverged_at)`` where ``y`` has shape
    ``(n_steps + 1, m)`` with ``y[0] = c @ x0``, and ``diverged_at`` is
    the first step index at which ``max|x|`` exceeded ``limit``
    (``-1`` if the trajectory stayed bounded; samples beyond that step
    are left zero).
    """
    phi = np.ascontiguousarray(phi, dtype=float)
    gamma = np.ascontiguousarray(gamma, dtype=float)
    x0 = np.ascontiguousarray(x0, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    n = phi.shape[0]
    if phi.shape != (n, n) or gamma.shape != (n,) or x0.shape != (n,):
        raise ValueError("inconsistent kernel operand shapes")
    if c.ndim != 2 or c.shape[1] != n:
        raise ValueError("output matrix must be (m, n)")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    if _active_name == "compiled":
        y = np.zeros((n_steps + 1, c.shape[0]))
        diverged_at = _speedups.affine_recurrence(phi, gamma, x0, c, y, float(limit))
        return y, diverged_at
    return _pyref.affine_recurrence(phi, gamma, x0, c, n_steps, float(limit))
