"""Proportional-integral projected gradient method (PIPG).

One iteration, with ``r(z) = Gz - g``::

    v <- w + beta_k * r(z)                       # proportional feedback
    z <- P_Z(z - alpha_k * (Hz + h + G'v))
    w <- w + beta_k * r(z)                       # integral feedback

Two step-size rules are supported. The constant rule uses
``alpha = 1 / (beta * sigma + lam)`` for a fixed ``beta > 0`` and needs only
``H >= 0``; the varying rule uses ``alpha_k = 2 / ((k + 1) mu + 2 lam)`` and
``beta_k = (k + 1) mu / (2 sigma)`` and requires ``H >= mu I`` with
``mu > 0``. Both satisfy ``lam + sigma * beta_k = 1 / alpha_k``.

The guarantees hold for ergodic averages, kept incrementally in
:class:`SolverState`:

* ``z_hat`` averages ``z^1 .. z^k`` (feasibility), with weights 1 (constant)
  or ``(j + 1)(j + 2)`` (varying);
* ``z_tilde`` averages ``z^2 .. z^{k+1}`` (distance to optimum), with weights
  1 (constant) or ``j + 2`` (varying).

Iterations are counted from ``k = 1``; the initial point is ``z^1``.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive, check_vector
from .problem import ConvergenceTrace, SpectralBounds, kkt_residual

__all__ = [
    "StepSchedule",
    "SolverState",
    "StoppingRule",
    "Solution",
    "NonFiniteIterateError",
    "init_state",
    "pipg_step",
    "solve",
    "initial_lyapunov",
    "theorem_bounds",
]


class NonFiniteIterateError(FloatingPointError):
    """An iterate became NaN or infinite."""

    def __init__(self, iteration):
        super().__init__(f"non-finite iterate at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``(alpha_k, beta_k)`` for PIPG.

    Use :meth:`constant` or :meth:`varying` rather than the raw constructor.
    """

    variant: str
    bounds: SpectralBounds
    beta: float = None

    def __post_init__(self):
        if self.variant == "constant":
            check_positive(self.beta, "beta")
        elif self.variant == "varying":
            if self.bounds.mu <= 0:
                raise ValueError("the varying schedule requires mu > 0")
        else:
            raise ValueError(f"unknown schedule variant {self.variant!r}")

    @classmethod
    def constant(cls, bounds, beta=None):
        """Constant steps; ``beta`` defaults to ``sqrt(lam / sigma)``."""
        if beta is None:
            beta = float(np.sqrt(bounds.lam / bounds.sigma))
        return cls("constant", bounds, float(beta))

    @classmethod
    def varying(cls, bounds):
        return cls("varying", bounds)

    def steps(self, k):
        b = self.bounds
        if self.variant == "constant":
            return 1.0 / (self.beta * b.sigma + b.lam), self.beta
        return 2.0 / ((k + 1) * b.mu + 2 * b.lam), (k + 1) * b.mu / (2 * b.sigma)

    def weights(self, j):
        """Averaging weights of ``z^j`` in ``z_hat`` and ``z^{j+1}`` in ``z_tilde``."""
        if self.variant == "constant":
            return 1.0, 1.0
        return float((j + 1) * (j + 2)), float(j + 2)


@dataclass
class SolverState:
    """PIPG iterates after ``k - 1`` completed iterations.

    ``z`` and ``w`` are ``z^k`` and ``w^k``; ``v`` is the proportional dual
    of the last iteration. ``z_hat`` and ``z_tilde`` are the averages over
    the completed iterations (equal to ``z`` before the first one), and
    ``hat_total``/``tilde_total`` the accumulated weights. ``residual``
    caches ``Gz - g``.
    """

    z: np.ndarray
    w: np.ndarray
    v: np.ndarray
    k: int = 1
    z_hat: np.ndarray = None
    z_tilde: np.ndarray = None
    hat_total: float = 0.0
    tilde_total: float = 0.0
    projections: int = 0
    residual: np.ndarray = None

    @property
    def iterations(self):
        return self.k - 1


def init_state(problem, z0=None, w0=None):
    """Starting state; ``z0`` and ``w0`` default to zero."""
    z = np.zeros(problem.n) if z0 is None else check_vector(z0, problem.n, name="z0").copy()
    w = np.zeros(problem.m) if w0 is None else check_vector(w0, problem.m, name="w0").copy()
    return SolverState(
        z=z,
        w=w,
        v=w.copy(),
        z_hat=z.copy(),
        z_tilde=z.copy(),
        residual=problem.G @ z - problem.g,
    )


def pipg_step(problem, schedule, state):
    """One PIPG iteration; returns a new state and leaves ``state`` untouched."""
    k = state.k
    alpha, beta = schedule.steps(k)
    z, w = state.z, state.w
    r = state.residual if state.residual is not None else problem.G @ z - problem.g
    v = w + beta * r
    z_new = problem.project(z - alpha * (problem.H @ z + problem.h + problem.G.T @ v))
    r_new = problem.G @ z_new - problem.g
    w_new = w + beta * r_new
    if not (np.isfinite(z_new).all() and np.isfinite(w_new).all()):
        raise NonFiniteIterateError(k)

    a, b = schedule.weights(k)
    hat_total = state.hat_total + a
    tilde_total = state.tilde_total + b
    if state.hat_total == 0.0:
        z_hat, z_tilde = z.copy(), z_new.copy()
    else:
        z_hat = state.z_hat + (a / hat_total) * (z - state.z_hat)
        z_tilde = state.z_tilde + (b / tilde_total) * (z_new - state.z_tilde)
    return SolverState(
        z=z_new,
        w=w_new,
        v=v,
        k=k + 1,
        z_hat=z_hat,
        z_tilde=z_tilde,
        hat_total=hat_total,
        tilde_total=tilde_total,
        projections=state.projections + 1,
        residual=r_new,
    )


@dataclass(frozen=True)
class StoppingRule:
    """When to stop an iterative solve.

    Parameters
    ----------
    max_iterations : int
    tolerance : float, optional
        Stop once ``||Gz - g||_inf <= tolerance`` on the chosen iterate.
    iterate : {"hat", "raw", "tilde"}
        Which iterate the tolerance is checked on. Solvers without ergodic
        averages treat "hat" and "tilde" as their running uniform average.
    max_projections : int, optional
        Budget on projections onto Z; matters for solvers with inner loops.
    kkt_tolerance : float, optional
        Stop once the largest KKT residual of the raw primal iterate and the
        solver's dual estimate is at most this value. Checked every
        ``kkt_every`` iterations because it costs two projections.
    kkt_every : int
    """

    max_iterations: int = 10_000
    tolerance: float = None
    iterate: str = "hat"
    max_projections: int = None
    kkt_tolerance: float = None
    kkt_every: int = 100

    def __post_init__(self):
        if self.iterate not in ("hat", "raw", "tilde"):
            raise ValueError(f"iterate must be 'hat', 'raw' or 'tilde', got {self.iterate!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.tolerance is not None:
            check_positive(self.tolerance, "tolerance")

    def check(self, problem, iterations, projections, raw, hat, tilde, residual=None, dual=None):
        """Return the name of the rule that fires, or ``None``."""
        if self.kkt_tolerance is not None and dual is not None and iterations % self.kkt_every == 0:
            if kkt_residual(problem, raw, dual).max() <= self.kkt_tolerance:
                return "tolerance"
        if self.tolerance is not None:
            if self.iterate == "raw" and residual is not None:
                r = residual
            else:
                point = {"raw": raw, "hat": hat, "tilde": tilde}[self.iterate]
                r = problem.G @ point - problem.g
            if np.max(np.abs(r), initial=0.0) <= self.tolerance:
                return "tolerance"
        if iterations >= self.max_iterations:
            return "max_iterations"
        if self.max_projections is not None and projections >= self.max_projections:
            return "max_projections"
        return None


@dataclass
class Solution:
    """Result of a solve.

    ``z`` is the last raw iterate, ``z_hat``/``z_tilde`` the ergodic averages
    and ``w`` the dual estimate. ``reason`` names the stopping rule that
    fired; ``converged`` is True only for "tolerance".
    """

    z: np.ndarray
    w: np.ndarray
    z_hat: np.ndarray
    z_tilde: np.ndarray
    iterations: int
    projections: int
    reason: str
    info: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.reason == "tolerance"


def solve(problem, schedule, init=None, stop=None, z_star=None, record=True, callback=None):
    """Run PIPG until ``stop`` fires.

    Parameters
    ----------
    problem : QpProblem
    schedule : StepSchedule
    init : tuple (z0, w0), SolverState or None
        Starting point; ``None`` means zeros. A :class:`SolverState` resumes
        a previous run (warm start with averages kept).
    stop : StoppingRule, optional
    z_star : array_like, optional
        Reference solution for the distance columns of the trace.
    record : bool
        Whether to fill the :class:`ConvergenceTrace`.
    callback : callable, optional
        Called as ``callback(state)`` after every iteration.

    Returns
    -------
    solution : Solution
    trace : ConvergenceTrace
    """
    stop = stop or StoppingRule()
    if isinstance(init, SolverState):
        state = init
    else:
        z0, w0 = init if init is not None else (None, None)
        state = init_state(problem, z0, w0)
    name = "pipg-const" if schedule.variant == "constant" else "pipg-var"
    trace = ConvergenceTrace(solver=name, z_star=None if z_star is None else check_vector(z_star, problem.n))
    start = state.k
    reason = None
    last = time.perf_counter()
    while reason is None:
        state = pipg_step(problem, schedule, state)
        if record:
            now = time.perf_counter()
            trace.record(problem, state.k - 1, state.z, state.z_hat, state.z_tilde, state.projections, now - last)
            last = now
        if callback is not None:
            callback(state)
        reason = stop.check(
            problem,
            state.k - start,
            state.projections,
            state.z,
            state.z_hat,
            state.z_tilde,
            residual=state.residual,
            dual=state.w,
        )
    sol = Solution(
        z=state.z,
        w=state.w,
        z_hat=state.z_hat,
        z_tilde=state.z_tilde,
        iterations=state.k - start,
        projections=state.projections,
        reason=reason,
        info={"state": state},
    )
    return sol, trace


def initial_lyapunov(schedule, z1, w1, z_star, w_star):
    """Initial Lyapunov value ``V^1`` that scales the convergence bounds.

    Constant schedule: ``||z1 - z*||^2 / (2 alpha) + ||w1 - w*||^2 / (2 beta)``.
    Varying schedule: ``||z1 - z*||^2 / (2 (mu + lam)) + sigma ||w1 - w*||^2 / (2 mu)``.
    """
    dz = np.asarray(z1, dtype=float) - z_star
    dw = np.asarray(w1, dtype=float) - w_star
    b = schedule.bounds
    if schedule.variant == "constant":
        alpha, beta = schedule.steps(1)
        return float(dz @ dz / (2 * alpha) + dw @ dw / (2 * beta))
    return float(dz @ dz / (2 * (b.mu + b.lam)) + b.sigma * (dw @ dw) / (2 * b.mu))


def theorem_bounds(schedule, k, v1):
    """Upper bounds on ``0.5 ||G z_hat - g||^2`` and ``0.5 ||z_tilde - z*||_H^2`` after ``k`` iterations."""
    k = np.asarray(k, dtype=float)
    b = schedule.bounds
    if schedule.variant == "constant":
        return v1 / (schedule.beta * k), v1 / k
    feas = 12 * b.lam * b.sigma * v1 / (b.mu**2 * k * (k**2 + 6 * k + 11))
    dist = 4 * b.lam * v1 / (b.mu * k * (k + 5))
    return feas, dist

