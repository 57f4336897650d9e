"""Compositional bilevel optimization: oracle-verified solver and testbed."""

from .errors import (
    BoundaryViolationError,
    CboError,
    ConfigError,
    DegenerateBoxError,
    NumericError,
    SolverFailureError,
)
from .problem import (
    BoxConstraint,
    CboProblem,
    Dims,
    OuterScalarFn,
    ProblemInstance,
    ScalarCell,
    build_box_constraints,
    finite_difference_gradient,
    linear_outer,
    log_outer,
)
from .barrier import (
    BarrierObjective,
    InnerSolveReport,
    RawInnerObjective,
    barrier_curvature_diag,
    barrier_gradient,
    barrier_value,
    inner_solve,
)
from .hypergrad import HypergradConfig, conjugate_gradient, done_total_gradient, instance_hypergrad
from .dro import (
    DroParams,
    SimplexWeights,
    logsumexp_objective,
    maximize_weights_ascent,
    maximize_weights_newton,
    optimal_weights,
    project_to_simplex,
    regularized_inner_max_value,
)
from .driver import (
    RunMetrics,
    SolverConfig,
    SolverState,
    StepRecord,
    constant_schedule,
    init_state,
    invsqrt_schedule,
    run,
    staged_schedule,
    step,
)

__version__ = "0.1.0"
