"""Estimator-style wrappers around the solvers.

Each class stores its hyperparameters in ``__init__`` (so ``get_params`` and
``set_params`` work as in scikit-learn) and runs on a :class:`QpProblem` in
:meth:`fit`. Results land in trailing-underscore attributes::

    est = PIPG(schedule="varying", max_iter=2000).fit(problem)
    est.z_, est.w_, est.n_iter_, est.trace_

There is no ``predict``: a QP has one solution, not a mapping from inputs to
outputs.
"""

from sklearn.base import BaseEstimator

from . import baselines
from .pipg import StepSchedule, StoppingRule, solve
from .problem import SpectralBounds
from .spectral import estimate_bounds

__all__ = ["PIPG", "DualFastGradient", "ADMM", "ChambollePock", "ChambollePockAccelerated"]


class _SolverEstimator(BaseEstimator):
    def _stop(self):
        return StoppingRule(max_iterations=self.max_iter, tolerance=self.tol, iterate=self.stop_on)

    def _bounds(self, problem):
        if self.bounds is None:
            return estimate_bounds(problem)
        if isinstance(self.bounds, SpectralBounds):
            return self.bounds
        return SpectralBounds(*self.bounds)

    def _init(self, problem):
        if self.warm_start and hasattr(self, "solution_") and len(self.z_) == problem.n:
            return self.z_, self.w_
        return None

    def _store(self, problem, solution, trace, bounds):
        self.solution_ = solution
        self.trace_ = trace
        self.bounds_ = bounds
        self.z_ = solution.z
        self.w_ = solution.w
        self.n_iter_ = solution.iterations
        self.n_projections_ = solution.projections
        self.converged_ = solution.converged
        return self


class PIPG(_SolverEstimator):
    """Proportional-integral projected gradient solver.

    Parameters
    ----------
    schedule : {"varying", "constant", "auto"}
        "auto" picks "varying" when ``mu > 0`` and "constant" otherwise.
    beta : float, optional
        Dual step of the constant schedule; defaults to ``sqrt(lam / sigma)``.
    max_iter : int
    tol : float, optional
        Feasibility tolerance on ``||Gz - g||_inf``.
    stop_on : {"hat", "raw", "tilde"}
        Iterate on which ``tol`` is checked.
    bounds : SpectralBounds or (mu, lam, sigma), optional
        Estimated by power iteration when omitted.
    warm_start : bool
        Resume from the previous fit, keeping the iteration counter and the
        ergodic averages.
    record : bool
        Fill ``trace_`` with one row per iteration.
    """

    def __init__(
        self,
        schedule="varying",
        beta=None,
        max_iter=10_000,
        tol=None,
        stop_on="hat",
        bounds=None,
        warm_start=False,
        record=False,
    ):
        self.schedule = schedule
        self.beta = beta
        self.max_iter = max_iter
        self.tol = tol
        self.stop_on = stop_on
        self.bounds = bounds
        self.warm_start = warm_start
        self.record = record

    def fit(self, problem, z_star=None):
        bounds = self._bounds(problem)
        variant = self.schedule
        if variant == "auto":
            variant = "varying" if bounds.mu > 0 else "constant"
        if variant == "varying":
            schedule = StepSchedule.varying(bounds)
        elif variant == "constant":
            schedule = StepSchedule.constant(bounds, self.beta)
        else:
            raise ValueError(f"schedule must be 'varying', 'constant' or 'auto', got {self.schedule!r}")
        init = None
        if self.warm_start and hasattr(self, "state_") and len(self.state_.z) == problem.n:
            init = self.state_
        solution, trace = solve(problem, schedule, init, self._stop(), z_star=z_star, record=self.record)
        self.schedule_ = schedule
        self.state_ = solution.info["state"]
        self.z_hat_ = solution.z_hat
        self.z_tilde_ = solution.z_tilde
        return self._store(problem, solution, trace, bounds)


class DualFastGradient(_SolverEstimator):
    """Dual fast gradient method with an inexact inner loop (needs ``mu > 0``)."""

    def __init__(
        self,
        inner_tol=1e-4,
        alpha=None,
        max_inner=10_000,
        max_iter=10_000,
        tol=None,
        stop_on="raw",
        bounds=None,
        warm_start=False,
        record=False,
    ):
        self.inner_tol = inner_tol
        self.alpha = alpha
        self.max_inner = max_inner
        self.max_iter = max_iter
        self.tol = tol
        self.stop_on = stop_on
        self.bounds = bounds
        self.warm_start = warm_start
        self.record = record

    def fit(self, problem, z_star=None):
        bounds = self._bounds(problem)
        solution, trace = baselines.dual_fast_gradient_solve(
            problem,
            bounds,
            self._init(problem),
            self._stop(),
            inner_tol=self.inner_tol,
            alpha=self.alpha,
            max_inner=self.max_inner,
            z_star=z_star,
            record=self.record,
        )
        return self._store(problem, solution, trace, bounds)


class ADMM(_SolverEstimator):
    """ADMM with a cached KKT factorization.

    Refitting on a problem with the same ``H``, ``G`` and ``alpha`` reuses
    the factorization; ``n_factorizations_`` counts how many were built over
    the estimator's lifetime.
    """

    def __init__(self, alpha=2.0, max_iter=10_000, tol=None, stop_on="raw", warm_start=False, record=False):
        self.alpha = alpha
        self.max_iter = max_iter
        self.tol = tol
        self.stop_on = stop_on
        self.warm_start = warm_start
        self.record = record

    def fit(self, problem, z_star=None):
        cached = getattr(self, "factorization_", None)
        solution, trace = baselines.admm_solve(
            problem,
            self.alpha,
            self._init(problem),
            self._stop(),
            factorization=cached,
            z_star=z_star,
            record=self.record,
        )
        self.factorization_ = solution.info["factorization"]
        self.n_factorizations_ = getattr(self, "n_factorizations_", 0) + int(solution.info["factorized"])
        return self._store(problem, solution, trace, None)


class ChambollePock(_SolverEstimator):
    """Linearized Chambolle-Pock with constant steps."""

    def __init__(
        self, alpha=None, beta=None, max_iter=10_000, tol=None, stop_on="raw", bounds=None, warm_start=False, record=False
    ):
        self.alpha = alpha
        self.beta = beta
        self.max_iter = max_iter
        self.tol = tol
        self.stop_on = stop_on
        self.bounds = bounds
        self.warm_start = warm_start
        self.record = record

    def fit(self, problem, z_star=None):
        bounds = self._bounds(problem)
        solution, trace = baselines.chambolle_pock_const_solve(
            problem,
            bounds,
            self.alpha,
            self.beta,
            self._init(problem),
            self._stop(),
            z_star=z_star,
            record=self.record,
        )
        return self._store(problem, solution, trace, bounds)


class ChambollePockAccelerated(_SolverEstimator):
    """Accelerated Chambolle-Pock for strongly convex objectives."""

    def __init__(
        self, alpha0=None, beta0=None, max_iter=10_000, tol=None, stop_on="raw", bounds=None, warm_start=False, record=False
    ):
        self.alpha0 = alpha0
        self.beta0 = beta0
        self.max_iter = max_iter
        self.tol = tol
        self.stop_on = stop_on
        self.bounds = bounds
        self.warm_start = warm_start
        self.record = record

    def fit(self, problem, z_star=None):
        bounds = self._bounds(problem)
        solution, trace = baselines.chambolle_pock_accel_solve(
            problem,
            bounds,
            self._init(problem),
            self._stop(),
            self.alpha0,
            self.beta0,
            z_star=z_star,
            record=self.record,
        )
        return self._store(problem, solution, trace, bounds)
