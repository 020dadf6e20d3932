"""Piecewise-polynomial trajectory generation by interior-point DDP.

Polynomial segments are written as a linear state-space system whose state
is the phase (derivatives) at each knot, so continuity holds by construction.
Coefficients and segment durations can be optimized jointly under corridor
and derivative-bound constraints, or the durations can be fixed, in which case
the unconstrained problem has a closed-form tracking solution.
"""

from .constraints import (
    ControlPointBasis,
    DerivBounds,
    FeasibilityReport,
    Polyhedron,
    check_feasibility,
    control_points,
)
from .ipddp import (
    PipelineError,
    PipelineSettings,
    SolverConfig,
    pipeline_three_stage,
    solve,
    solve_fixed_time,
    solve_infeasible_start,
)
from .lqt import lqt_solve
from .objective import StageWeights, total_cost
from .polyspline import PiecewiseTrajectory, SplineShape, continuity_residuals, evaluate, rollout
from .problem import Problem
from .problem_io import (
    generate_random_corridor,
    generate_waypoint_instance,
    initial_time_allocation,
    load_instance,
    save_instance,
)
from .results import IterateTrace, SolveResult, Status

__all__ = [
    "ControlPointBasis",
    "DerivBounds",
    "FeasibilityReport",
    "IterateTrace",
    "PiecewiseTrajectory",
    "PipelineError",
    "PipelineSettings",
    "Polyhedron",
    "Problem",
    "SolveResult",
    "SolverConfig",
    "SplineShape",
    "StageWeights",
    "Status",
    "check_feasibility",
    "continuity_residuals",
    "control_points",
    "evaluate",
    "generate_random_corridor",
    "generate_waypoint_instance",
    "initial_time_allocation",
    "load_instance",
    "lqt_solve",
    "pipeline_three_stage",
    "rollout",
    "save_instance",
    "solve",
    "solve_fixed_time",
    "solve_infeasible_start",
    "total_cost",
]
