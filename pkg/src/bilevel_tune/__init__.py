"""Bilevel hyperparameter tuning with dynamically accurate lower-level solves.

The lower level is solved by strongly convex FISTA with a computable error
certificate; the upper level is minimised by a derivative-free Gauss-Newton
trust-region method that asks for just enough lower-level accuracy.
"""

__version__ = "0.1.0"

from .composite_core import (
    CompositeProblem,
    FixedIterations,
    LowerSolution,
    TargetAccuracy,
    Termination,
    apriori_bound,
    apriori_iterations,
    fista_solve,
    prox_l1,
)
from .dfo_tr import Dynamic, FixedAccuracy, RunLog, SolverConfig, run_solver
from .errors import (
    AccuracyUnreachableError,
    BilevelTuneError,
    ConfigError,
    IdxFormatError,
    SolverError,
)
from .problems import ElasticNetBilevel, HyperPoint, QuadraticBilevel
