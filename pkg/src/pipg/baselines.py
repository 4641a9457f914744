"""Reference primal-dual methods for the same QP class as PIPG.

All solvers share :class:`~pipg.pipg.StoppingRule`, :class:`~pipg.pipg.Solution`
and :class:`~pipg.problem.ConvergenceTrace`, and count projections onto Z the
same way, so runs are directly comparable:

* :func:`dual_fast_gradient_solve` - Nesterov's method on the dual, with the
  primal argmin over Z approximated by an inner accelerated projected
  gradient loop (counts every inner projection);
* :func:`admm_solve` - ADMM splitting ``Gz = g`` from ``z in Z``, with the
  equality-constrained step solved through a prefactorized KKT matrix;
* :func:`chambolle_pock_const_solve` - linearized Chambolle-Pock with
  constant steps;
* :func:`chambolle_pock_accel_solve` - its accelerated variant for
  ``H >= mu I``, dual step first.

The averaged trace columns of these solvers use the uniform running mean of
the primal iterates.
"""

import time

import numpy as np
import scipy.linalg

from ._validation import check_positive, check_vector, to_dense
from .pipg import NonFiniteIterateError, Solution, StoppingRule
from .problem import ConvergenceTrace

__all__ = [
    "UnsupportedProblemError",
    "StepSizeError",
    "FactorizationError",
    "KktFactorization",
    "dual_fast_gradient_solve",
    "admm_solve",
    "chambolle_pock_const_solve",
    "chambolle_pock_accel_solve",
]


class UnsupportedProblemError(ValueError):
    """The method needs a strongly convex objective (``mu > 0``)."""


class StepSizeError(ValueError):
    """Step sizes violate the method's convergence condition."""


class FactorizationError(np.linalg.LinAlgError):
    """The ADMM KKT matrix is singular."""


def _init(problem, init):
    z0, w0 = init if init is not None else (None, None)
    z = np.zeros(problem.n) if z0 is None else check_vector(z0, problem.n, name="z0").copy()
    w = np.zeros(problem.m) if w0 is None else check_vector(w0, problem.m, name="w0").copy()
    return z, w


class _Runner:
    """Bookkeeping shared by the baseline loops: averages, trace, stopping."""

    def __init__(self, problem, name, stop, z_star, record, z):
        self.problem = problem
        self.stop = stop or StoppingRule()
        self.trace = ConvergenceTrace(solver=name, z_star=None if z_star is None else check_vector(z_star, problem.n))
        self.record = record
        self.avg = z.copy()
        self.count = 0
        self.projections = 0
        self.iterations = 0
        self._last = time.perf_counter()

    def done(self, z, w):
        if not np.isfinite(z).all():
            raise NonFiniteIterateError(self.iterations)
        self.iterations += 1
        self.count += 1
        if self.count == 1:
            self.avg = z.copy()
        else:
            self.avg = self.avg + (z - self.avg) / self.count
        if self.record:
            now = time.perf_counter()
            self.trace.record(self.problem, self.iterations, z, self.avg, self.avg, self.projections, now - self._last)
            self._last = now
        return self.stop.check(self.problem, self.iterations, self.projections, z, self.avg, self.avg, dual=w)

    def solution(self, z, w, reason, **info):
        sol = Solution(
            z=z,
            w=w,
            z_hat=self.avg,
            z_tilde=self.avg,
            iterations=self.iterations,
            projections=self.projections,
            reason=reason,
            info=info,
        )
        return sol, self.trace


def dual_fast_gradient_solve(
    problem, bounds, init=None, stop=None, inner_tol=1e-4, alpha=None, max_inner=10_000, z_star=None, record=True
):
    """Dual fast gradient method with an inexact inner loop.

    Outer iteration (``k = 0, 1, ...``)::

        z^{k+1} ~ argmin_{z in Z} 0.5 z'Hz + h'z + <v^k, Gz>
        w^{k+1} = v^k + alpha (G z^{k+1} - g)
        v^{k+1} = w^{k+1} + k / (k + 3) (w^{k+1} - w^k)

    The argmin is approximated by accelerated projected gradient with step
    ``1 / lam`` and momentum ``(sqrt(lam) - sqrt(mu)) / (sqrt(lam) + sqrt(mu))``,
    warm-started from the previous outer iterate and stopped when
    ``||z^{j+1} - z^j|| / ||z^j|| <= inner_tol`` (absolute if
    ``||z^j|| < 1e-30``) or after ``max_inner`` steps.

    Parameters
    ----------
    alpha : float, optional
        Dual step; defaults to ``mu / sigma``, the inverse Lipschitz constant
        of the dual gradient.
    """
    if bounds.mu <= 0:
        raise UnsupportedProblemError("dual fast gradient needs mu > 0")
    if not 0 < inner_tol < 1:
        raise ValueError("inner_tol must lie in (0, 1)")
    alpha = bounds.mu / bounds.sigma if alpha is None else check_positive(alpha, "alpha")
    P = problem
    lam, mu = bounds.lam, bounds.mu
    momentum = (np.sqrt(lam) - np.sqrt(mu)) / (np.sqrt(lam) + np.sqrt(mu))
    z, w = _init(P, init)
    v = w.copy()
    run = _Runner(P, "dfg", stop, z_star, record, z)
    inner_counts = []
    k = 0
    reason = None
    while reason is None:
        lin = P.h + P.G.T @ v
        y = z
        zj = z
        for j in range(max_inner):
            z_next = P.project(y - (P.H @ y + lin) / lam)
            run.projections += 1
            denom = np.linalg.norm(zj)
            step = np.linalg.norm(z_next - zj)
            y = z_next + momentum * (z_next - zj)
            zj = z_next
            if (step <= inner_tol * denom) if denom >= 1e-30 else (step <= inner_tol):
                break
        inner_counts.append(j + 1)
        z = zj
        w_new = v + alpha * (P.G @ z - P.g)
        v = w_new + (k / (k + 3)) * (w_new - w)
        w = w_new
        k += 1
        reason = run.done(z, w)
    return run.solution(z, w, reason, inner_iterations=inner_counts)


class KktFactorization:
    """Symmetric indefinite factorization of ``[[H + I/alpha, G'], [G, 0]]``.

    Uses LAPACK's Bunch-Kaufman ``LDL'`` (``?sytrf``); :meth:`solve` reuses
    the factors.
    """

    def __init__(self, problem, alpha):
        self.alpha = check_positive(alpha, "alpha")
        n, m = problem.n, problem.m
        K = np.zeros((n + m, n + m))
        K[:n, :n] = to_dense(problem.H) + np.eye(n) / alpha
        Gd = to_dense(problem.G)
        K[n:, :n] = Gd
        K[:n, n:] = Gd.T
        self.matrix = K
        self.n, self.m = n, m
        sytrf, sytrs = scipy.linalg.lapack.get_lapack_funcs(("sytrf", "sytrs"), (K,))
        ldu, ipiv, info = sytrf(K, lower=1)
        cond = np.linalg.cond(K)
        if info != 0 or not np.isfinite(cond) or cond > 1e14:
            raise FactorizationError(f"KKT matrix is singular (condition {cond:.3g}); is G rank deficient?")
        self._ldu, self._ipiv, self._sytrs = ldu, ipiv, sytrs

    def solve(self, rhs):
        x, info = self._sytrs(self._ldu, self._ipiv, rhs, lower=1)
        if info != 0:
            raise FactorizationError(f"sytrs failed with info={info}")
        return x

    def matches(self, problem, alpha):
        """True if this factorization is valid for ``problem`` and ``alpha``."""
        if alpha != self.alpha or problem.n != self.n or problem.m != self.m:
            return False
        n = self.n
        return np.array_equal(self.matrix[:n, :n], to_dense(problem.H) + np.eye(n) / alpha) and np.array_equal(
            self.matrix[n:, :n], to_dense(problem.G)
        )


def admm_solve(problem, alpha=2.0, init=None, stop=None, factorization=None, check_solve=False, z_star=None, record=True):
    """ADMM with the equality-constrained step solved by a cached factorization.

    Iteration, with ``u`` the scaled multiplier of ``y = z``::

        [H + I/alpha, G'; G, 0] [y; v] = [-h - (u - z)/alpha; g]
        z <- P_Z(y + u)
        u <- u + y - z

    ``v`` is the multiplier of ``Gz = g`` and is returned as the dual. The
    initial ``u`` is ``-alpha (H z0 + h + G' w0)``, the Z-multiplier implied
    by the starting pair.

    Parameters
    ----------
    factorization : KktFactorization, optional
        Reused if it matches ``(H, G, alpha)``; otherwise a new one is built.
    check_solve : bool
        Record ``max ||K sol - rhs||_inf`` over all iterations in
        ``info["max_solve_residual"]``.

    Returns
    -------
    solution, trace
        ``solution.info["factorization"]`` is the factorization used and
        ``solution.info["factorized"]`` says whether this call created it.
    """
    alpha = check_positive(alpha, "alpha")
    P = problem
    factorized = False
    if factorization is None or not factorization.matches(P, alpha):
        factorization = KktFactorization(P, alpha)
        factorized = True
    n = P.n
    z, w0 = _init(P, init)
    u = -alpha * (P.H @ z + P.h + P.G.T @ w0)
    v = w0
    run = _Runner(P, "admm", stop, z_star, record, z)
    rhs = np.empty(n + P.m)
    rhs[n:] = P.g
    max_res = 0.0
    reason = None
    while reason is None:
        rhs[:n] = -P.h - (u - z) / alpha
        sol = factorization.solve(rhs)
        if check_solve:
            max_res = max(max_res, float(np.max(np.abs(factorization.matrix @ sol - rhs))))
        y, v = sol[:n], sol[n:]
        z = P.project(y + u)
        run.projections += 1
        u = u + y - z
        reason = run.done(z, v)
    return run.solution(
        z, v.copy(), reason, factorization=factorization, factorized=factorized, max_solve_residual=max_res, u=u
    )


def chambolle_pock_const_solve(problem, bounds, alpha=None, beta=None, init=None, stop=None, z_star=None, record=True):
    """Linearized Chambolle-Pock with constant steps.

    Iteration::

        z^{k+1} = P_Z(z^k - alpha (H z^k + h + G' w^k))
        w^{k+1} = w^k + beta (G (2 z^{k+1} - z^k) - g)

    Steps must satisfy ``alpha (lam + beta sigma) <= 1``. Defaults mirror the
    constant PIPG rule: ``beta = sqrt(lam / sigma)``,
    ``alpha = 1 / (lam + beta sigma)``.
    """
    if beta is None:
        beta = float(np.sqrt(bounds.lam / bounds.sigma))
    if alpha is None:
        alpha = 1.0 / (bounds.lam + beta * bounds.sigma)
    alpha, beta = check_positive(alpha, "alpha"), check_positive(beta, "beta")
    if alpha * (bounds.lam + beta * bounds.sigma) > 1 + 1e-12:
        raise StepSizeError(
            f"alpha * (lam + beta * sigma) = {alpha * (bounds.lam + beta * bounds.sigma):.6g} exceeds 1"
        )
    P = problem
    z, w = _init(P, init)
    r = P.G @ z - P.g
    run = _Runner(P, "cp-const", stop, z_star, record, z)
    reason = None
    while reason is None:
        z_new = P.project(z - alpha * (P.H @ z + P.h + P.G.T @ w))
        run.projections += 1
        r_new = P.G @ z_new - P.g
        # G(2z' - z) - g = 2 r' - r
        w = w + beta * (2 * r_new - r)
        z, r = z_new, r_new
        reason = run.done(z, w)
    return run.solution(z, w, reason)


def chambolle_pock_accel_solve(problem, bounds, init=None, stop=None, alpha0=None, beta0=None, z_star=None, record=True):
    """Accelerated Chambolle-Pock for ``H >= mu I``, ``mu > 0``.

    Iteration (dual step first)::

        w^{k+1} = w^k + beta_k (G (z^k + gamma_k (z^k - z^{k-1})) - g)
        z^{k+1} = P_Z(z^k - alpha_k / (mu alpha_k + 1) (H z^k + h + G' w^{k+1}))

    This is the primal-dual method on ``f + g_Z`` with the smooth part
    ``f(z) = 0.5 z'(H - mu I)z + h'z`` (Lipschitz constant ``L_f = lam - mu``)
    and the ``mu``-strongly convex ``g_Z(z) = 0.5 mu ||z||^2 + indicator_Z``,
    whose prox gives the ``alpha / (mu alpha + 1)`` scaling above.

    Step sizes follow the accelerated rule::

        gamma_{k+1} = 1 / sqrt(1 + mu alpha_k)
        alpha_{k+1} = gamma_{k+1} alpha_k
        beta_{k+1}  = beta_k / gamma_{k+1}

    which keeps ``alpha_k beta_k`` constant and ``alpha_k`` decreasing, so
    ``alpha_k (L_f + beta_k sigma) <= 1`` holds for all ``k`` once it holds
    initially. The start is ``alpha_0 = 1 / (2 L_f)``, ``beta_0 = L_f / sigma``
    (both terms of the condition equal to 1/2), with ``L_f`` replaced by ``mu``
    when ``H = mu I``. The first iteration has no extrapolation.

    The recursion is the accelerated variant (Algorithm 2) of Chambolle and
    Pock, J. Math. Imaging Vis. 40 (2011), ``theta = 1 / sqrt(1 + 2 gamma tau)``,
    with the conservative modulus ``gamma = mu / 2 <= mu``. The later
    ergodic-rate refinement of the same authors was not consulted.
    """
    if bounds.mu <= 0:
        raise UnsupportedProblemError("accelerated Chambolle-Pock needs mu > 0")
    mu = bounds.mu
    lf = bounds.lam - mu
    scale = lf if lf > 0 else mu
    alpha = 1.0 / (2 * scale) if alpha0 is None else check_positive(alpha0, "alpha0")
    beta = scale / bounds.sigma if beta0 is None else check_positive(beta0, "beta0")
    if alpha * (lf + beta * bounds.sigma) > 1 + 1e-12:
        raise StepSizeError("initial steps violate alpha0 * (lam - mu + beta0 * sigma) <= 1")
    P = problem
    z, w = _init(P, init)
    z_prev = z
    gamma = 0.0
    run = _Runner(P, "cp-accel", stop, z_star, record, z)
    reason = None
    while reason is None:
        w = w + beta * (P.G @ (z + gamma * (z - z_prev)) - P.g)
        z_new = P.project(z - alpha / (mu * alpha + 1) * (P.H @ z + P.h + P.G.T @ w))
        run.projections += 1
        z_prev, z = z, z_new
        gamma = 1.0 / np.sqrt(1 + mu * alpha)
        alpha, beta = gamma * alpha, beta / gamma
        reason = run.done(z, w)
    return run.solution(z, w, reason, last_steps=(alpha, beta, gamma))
