"""Spectral bounds ``mu I <= H <= lam I`` and ``G'G <= sigma I``.

Upper bounds come from power iteration inflated by ``1 + tolerance``;
``G'G`` is never formed, only products with ``G`` and ``G'``.
"""

import numpy as np
import scipy.sparse as sp

from ._validation import check_positive
from .problem import SpectralBounds

__all__ = ["estimate_bounds", "power_iteration", "PowerIterationError"]

RAYLEIGH_RTOL = 1e-6
MAX_ITER = 5000
SEED = 0x5EED
ZERO_MU_RTOL = 1e-9


class PowerIterationError(RuntimeError):
    """Power iteration did not settle; carries the last Rayleigh quotient."""

    def __init__(self, message, rayleigh):
        super().__init__(f"{message} (last Rayleigh quotient {rayleigh:.12g})")
        self.rayleigh = rayleigh


def power_iteration(matvec, n, rtol=RAYLEIGH_RTOL, max_iter=MAX_ITER, seed=SEED):
    """Largest eigenvalue of a symmetric PSD operator given by ``matvec``.

    Returns the Rayleigh quotient once it changes by less than ``rtol``
    (relative) between iterations.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    rq = 0.0
    for _ in range(max_iter):
        av = matvec(v)
        new_rq = float(v @ av)
        norm = np.linalg.norm(av)
        if norm == 0.0:
            return 0.0
        if abs(new_rq - rq) <= rtol * abs(new_rq):
            return new_rq
        rq = new_rq
        v = av / norm
    raise PowerIterationError(f"no convergence after {max_iter} iterations", rq)


def _diagonal(H):
    if sp.issparse(H):
        off = H - sp.diags(H.diagonal())
        return H.diagonal() if off.count_nonzero() == 0 else None
    d = np.diag(H)
    return d if np.count_nonzero(H - np.diag(d)) == 0 else None


def estimate_bounds(problem, tolerance=1e-3):
    """Valid spectral bounds for ``problem``.

    Parameters
    ----------
    problem : QpProblem
    tolerance : float
        Relative inflation applied to power-iteration estimates.

    Returns
    -------
    SpectralBounds
        Exact ``mu`` and ``lam`` for diagonal ``H``. Otherwise ``lam`` is
        inflated and ``mu`` deflated by ``tolerance`` relative to their
        estimates, and ``mu`` is reported as 0 when it falls below
        ``1e-9 * lam``.
    """
    tolerance = check_positive(tolerance, "tolerance")
    H, G = problem.H, problem.G
    diag = _diagonal(H)
    if diag is not None:
        mu, lam = max(float(diag.min()), 0.0), float(diag.max())
    else:
        lam_est = power_iteration(lambda v: H @ v, problem.n)
        lam = lam_est * (1 + tolerance)
        shifted = power_iteration(lambda v: lam * v - H @ v, problem.n)
        mu = lam - shifted * (1 + tolerance)
        if mu <= ZERO_MU_RTOL * lam:
            mu = 0.0
    if problem.m == 0:
        sigma = 1.0
    else:
        sigma = power_iteration(lambda v: G.T @ (G @ v), problem.n) * (1 + tolerance)
    if lam <= 0:
        raise ValueError("H must have a positive eigenvalue")
    return SpectralBounds(mu=mu, lam=lam, sigma=sigma)
