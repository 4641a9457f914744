"""Proportional-integral projected gradient (PIPG) for convex QPs.

Solves ``minimize 0.5 z'Hz + h'z  s.t.  Gz = g, z in Z`` with a first-order
primal-dual method that only needs products with ``H``, ``G``, ``G'`` and
Euclidean projections onto ``Z``. Includes baseline solvers, a finite-horizon
tracking (MPC) problem builder and a benchmark harness.
"""

from .baselines import (
    FactorizationError,
    KktFactorization,
    StepSizeError,
    UnsupportedProblemError,
    admm_solve,
    chambolle_pock_accel_solve,
    chambolle_pock_const_solve,
    dual_fast_gradient_solve,
)
from .bench import (
    SOLVERS,
    CertificationError,
    ExperimentConfig,
    ReferenceSolution,
    compute_reference,
    run_solver,
    run_sweep,
    run_trace,
)
from .estimators import ADMM, PIPG, ChambollePock, ChambollePockAccelerated, DualFastGradient
from .mpc import TrackingProblem, build_benchmark, lift, run_structured, structured_pipg_step
from .pipg import (
    NonFiniteIterateError,
    Solution,
    SolverState,
    StepSchedule,
    StoppingRule,
    init_state,
    initial_lyapunov,
    pipg_step,
    solve,
    theorem_bounds,
)
from .problem import (
    ConvergenceTrace,
    KktResidual,
    QpProblem,
    RankDeficiencyError,
    SpectralBounds,
    kkt_residual,
    objective,
)
from .sets import (
    Ball,
    Box,
    ConvexSet,
    Epigraph,
    Halfspace,
    Product,
    ProjectionError,
    SecondOrderCone,
    Sublevel,
    Whole,
    project,
)
from .spectral import PowerIterationError, estimate_bounds

__version__ = "0.1.0"
