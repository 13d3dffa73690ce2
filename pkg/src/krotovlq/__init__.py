"""Linear-quadratic controller synthesis through convexified equivalent problems.

Feedback gains come from a generalized Riccati-type equation whose solutions
need not be symmetric; classical Riccati solutions, closed-loop simulation,
and convexity certificates provide independent verification at every step.
"""

from .errors import KrotovLqError, NumericalBlowup, SolverError, ValidationError
from .krotov_core import (
    ConvexityCertificate,
    KrotovFunction,
    SDecomposition,
    convexity_certificate,
    decompose_s,
    equivalent_cost,
    max_certified_scale,
    s_terminal_value,
    s_value,
)
from .model import (
    Horizon,
    LqProblem,
    ReciprocalShift,
    ReferenceSignal,
    TimeMatrix,
    eval_reference,
    eval_time_matrix,
    load_scenario,
    parse_scenario,
    regulation,
    tracking,
    validate_problem,
)
from .sim import (
    Trajectory,
    evaluate_cost,
    lyapunov_check,
    pointwise_min_check,
    simulate,
    write_trajectory_csv,
)
from .solvers import (
    AlgebraicSolution,
    ControlLaw,
    SolutionSet,
    gain_from_P,
    generalized_residual,
    integrate_mdre,
    integrate_standard_mdre,
    select_stabilizing,
    solve_algebraic,
    solve_standard_are,
    spd_sqrt,
)
from .iterative import (
    IterationRecord,
    KrotovRunConfig,
    improving_function_residual,
    krotov_iterate,
)
from .tracking import (
    FeedforwardSolution,
    integrate_g,
    sinusoid_feedforward_closed_form,
    steady_state_g,
    steady_state_g_harmonic,
)

__version__ = "0.1.0"
