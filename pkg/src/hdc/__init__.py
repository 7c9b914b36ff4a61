"""Sixth-order hybrid deferred-correction time stepping.

The central scheme corrects the explicit midpoint rule with two
finite-difference combinations of five RK4 substates per step (21 RHS
evaluations), yielding an explicit one-step method of order six whose
stability region reaches about [-5.626, 0] on the real axis and +-4.730 on
the imaginary axis.  Companion steppers (midpoint, RK4, Luther's RK6),
stability-region analysis, stiff ODE benchmarks and sixth-order
reaction-diffusion semidiscretizations round out the experiment suite.
"""

from .ivp import (
    ConvergenceRecord,
    OdeProblem,
    RunStatus,
    TrajectoryRun,
    check_finite,
    euclidean_error,
    max_abs_error,
    observed_order,
    sample_indices,
)
from .steppers import (
    DcStepWork,
    StepperKind,
    dc6_step,
    dc6_step_work,
    integrate,
    midpoint_step,
    rk4_step,
    rk6_step,
)
from .stability import (
    RegionRaster,
    StabilityPolynomial,
    big_r,
    containment_check,
    expand_coefficients,
    imaginary_extent,
    q_rk4,
    r_correction,
    real_axis_boundary,
    s_correction,
    stability_raster,
)
from .oracle import ReferenceTrajectory, cache_load, cache_store, reference_trajectory
from .pde import (
    BoundaryCondition,
    Fd6Operator,
    RdProblem,
    apply_operator,
    bistable_problem,
    dirichlet_matrix,
    fisher_problem,
    neumann_matrix,
    three_species_problem,
)
from . import problems

__version__ = "0.1.0"
