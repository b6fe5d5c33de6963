"""Derivative-free trust-region solver with dynamic lower-level accuracy."""

from .config import SolverConfig
from .evaluation import (
    CacheEntry,
    Certified,
    EvalCache,
    EvalResult,
    Fixed,
    evaluate_point,
    required_accuracy,
)
from .geometry import (
    InterpolationSet,
    init_interpolation_set,
    initial_points,
    repair_point,
    update_interpolation_set,
)
from .model import GNModel, build_model, interpolation_error
from .solver import (
    ConsumedEval,
    Dynamic,
    FixedAccuracy,
    RunLog,
    RunRecord,
    RunResult,
    TrustRegionParams,
    TrustRegionState,
    acceptance_step,
    run_solver,
)
from .subproblem import cauchy_decrease_bound, quadratic_decrease, solve_tr_subproblem
