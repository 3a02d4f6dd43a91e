"""Virtual inertia and damping gain allocation for low-inertia grids.

Builds a parametric linearized multi-machine model, derives eigenvalue
and damping-ratio sensitivities to every converter's virtual inertia
and damping gain, and drives an iterative linear-programming loop that
restores small-signal stability, lifts the worst-case damping ratio
above a floor, keeps RoCoF and frequency nadir within limits, and then
minimizes the deployed control effort.  Terminal allocations are
evaluated with H2/H-infinity system norms and a time-domain simulator.
"""

from .allocation import AllocationState, allocation_from_case
from .caseio import (
    ResultBundle,
    builtin_case_path,
    bundle_from_result,
    compute_metrics,
    export_bundle,
    load_case,
    write_case,
)
from .errors import (
    CaseValidationError,
    DefectiveMatrixError,
    DisconnectedNetworkError,
    GridModelError,
    NadirTimeInvalidError,
    OverdampedError,
    SimulationDivergedError,
    VsmtuneError,
)
from .freq import AggregateParams, FreqMetrics, aggregate, aggregate_model, metrics, nadir, rocof
from .grid import GenUnit, Governor, GridCase, Line, LinearModel, linearize, perturb_gain
from .loop import (
    IterationTrace,
    LoopConfig,
    RunResult,
    TraceRow,
    convergence_check,
    run_multistep,
    run_uniform,
    validate_and_halve,
)
from .lp import CostConfig, LinearProgram, StepBounds, phi_normalize, solve_lp
from .modal import ModeSet, decompose, eig_sensitivity, match_modes, worst_modes, zeta_sensitivity
from .norms import NormReport, h2_norm, hinf_norm, norm_report
from .sim import impulse_energy, step_response, write_trajectory_csv

__version__ = "0.1.0"
