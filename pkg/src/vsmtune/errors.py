"""Exception types shared across the package."""

from __future__ import annotations


class VsmtuneError(Exception):
    """Base class for all package-specific errors."""


class GridModelError(VsmtuneError):
    """Invalid grid data or model construction failure."""


class DisconnectedNetworkError(GridModelError):
    """The bus graph is not connected."""


class DefectiveMatrixError(VsmtuneError):
    """Eigenvalue clusters too close for first-order sensitivity theory."""

    def __init__(self, clusters):
        self.clusters = clusters
        described = "; ".join(
            "{" + ", ".join(f"{lam:.6g}" for lam in group) + "}" for group in clusters
        )
        super().__init__(f"near-degenerate eigenvalue clusters: {described}")


class OverdampedError(VsmtuneError):
    """Aggregate response is overdamped (zeta_s >= 1); nadir formula undefined."""


class NadirTimeInvalidError(VsmtuneError):
    """Nadir-time validity condition M/T - F_g < D violated."""


class SimulationDivergedError(VsmtuneError):
    """Trajectory magnitude blew past the divergence guard (unstable system)."""

    def __init__(self, time: float):
        self.time = time
        super().__init__(f"trajectory diverged at t = {time:.6g} s; system is unstable")


class CaseValidationError(VsmtuneError):
    """Case file failed semantic validation; carries every violation found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__(
            "invalid case: " + "; ".join(self.problems)
        )
