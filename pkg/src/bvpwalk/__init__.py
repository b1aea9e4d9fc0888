"""Monte Carlo pointwise solver for linear parabolic/elliptic BVPs with mixed boundaries.

Trajectories follow a walk on ellipsoids in the interior and a one-step
normal reflection near Robin boundaries; a half-order projection scheme is
included for comparison.
"""

from .estimator import (
    AdaptiveResult,
    ConvergenceRow,
    EstimatorState,
    StudyResult,
    convergence_study,
    estimate_adaptive,
    regression_slope,
)
from .geometry import (
    BallOracle,
    BoundaryOracle,
    BoundaryQuery,
    BoxOracle,
    GridField,
    GridOracle,
    HalfSpaceSplit,
    all_absorbing,
    all_reflecting,
    fast_sweep_anisotropic,
    fmm_distance,
    interpolate,
    read_grid,
    write_grid,
)
from .integrators import Method, NonTerminatingError, StepParams, TrajectoryError, run_batch, run_trajectory, run_trajectory_ref
from .presets import example1, example2, example3, load_preset
from .problem import BvpProblem, ValidationReport, constant, validate_problem

__version__ = "0.1.0"
