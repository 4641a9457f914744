"""Quadratic programs with equality constraints and a convex set constraint.

The problem class is::

    minimize    0.5 z'Hz + h'z
    subject to  Gz = g,  z in Z

where ``Z`` is a :class:`~pipg.sets.ConvexSet` with a cheap projection.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._validation import check_matrix, check_vector, to_dense
from .sets import ConvexSet, Whole, set_from_dict

__all__ = [
    "QpProblem",
    "SpectralBounds",
    "KktResidual",
    "ConvergenceTrace",
    "RankDeficiencyError",
    "objective",
    "kkt_residual",
]

SYMMETRY_WARN_TOL = 1e-9


class RankDeficiencyError(ValueError):
    """The equality constraint matrix does not have full row rank."""


class QpProblem:
    """Convex QP ``min 0.5 z'Hz + h'z  s.t.  Gz = g, z in Z``.

    Parameters
    ----------
    H : (n, n) array_like or sparse matrix
        Cost Hessian. It is symmetrized as ``(H + H') / 2``; a warning is
        issued if the input was asymmetric beyond ``1e-9`` (relative).
    h : (n,) array_like
    G : (m, n) array_like or sparse matrix
    g : (m,) array_like
    feasible_set : ConvexSet, optional
        The set ``Z``. Defaults to all of R^n.

    Notes
    -----
    Instances are treated as immutable: the arrays are made read-only.
    Full row rank of ``G`` is checked on demand by :meth:`check_rank`.
    """

    def __init__(self, H, h, G, g, feasible_set=None):
        h = check_vector(h, name="h")
        n = h.shape[0]
        H = check_matrix(H, (n, n), name="H")
        g = check_vector(g, name="g")
        G = check_matrix(G, (g.shape[0], n), name="G")
        H = self._symmetrize(H)
        if feasible_set is None:
            feasible_set = Whole(n)
        if not isinstance(feasible_set, ConvexSet):
            raise TypeError("feasible_set must be a ConvexSet")
        if feasible_set.dim != n:
            raise ValueError(f"feasible set has dimension {feasible_set.dim}, expected {n}")
        if g.shape[0] > n:
            raise RankDeficiencyError(f"G has more rows ({g.shape[0]}) than columns ({n})")
        for arr in (H, h, G, g):
            if isinstance(arr, np.ndarray):
                arr.setflags(write=False)
        self.H, self.h, self.G, self.g = H, h, G, g
        self.feasible_set = feasible_set
        self.n, self.m = n, g.shape[0]

    @staticmethod
    def _symmetrize(H):
        asym = abs(H - H.T)
        asym = asym.max() if asym.shape[0] else 0.0
        scale = abs(H).max() if H.shape[0] else 0.0
        if asym > SYMMETRY_WARN_TOL * max(scale, 1e-300):
            warnings.warn(f"H is not symmetric (max asymmetry {asym:.3g}); using (H + H')/2", stacklevel=3)
        if asym == 0:
            return H.copy()
        return (H + H.T) * 0.5

    @property
    def Z(self):
        return self.feasible_set

    def check_rank(self, tol=None):
        """Raise :class:`RankDeficiencyError` unless ``G`` has full row rank."""
        if self.m == 0:
            return
        rank = np.linalg.matrix_rank(to_dense(self.G), tol=tol)
        if rank < self.m:
            raise RankDeficiencyError(f"G has rank {rank} < {self.m} rows")

    def residual(self, z):
        """Equality residual ``Gz - g``."""
        return self.G @ z - self.g

    def gradient(self, z):
        return self.H @ z + self.h

    def project(self, z):
        return self.feasible_set._project(z)

    def is_sparse(self):
        return sp.issparse(self.G) or sp.issparse(self.H)

    # -- serialization ---------------------------------------------------

    def to_dict(self):
        return {
            "H": to_dense(self.H).tolist(),
            "h": self.h.tolist(),
            "G": to_dense(self.G).reshape(self.m, self.n).tolist(),
            "g": self.g.tolist(),
            "set": self.feasible_set.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc):
        n = len(doc["h"])
        G = np.asarray(doc["G"], dtype=float).reshape(len(doc["g"]), n)
        return cls(doc["H"], doc["h"], G, doc["g"], set_from_dict(doc["set"]))

    def to_json(self, path=None, **kwargs):
        text = json.dumps(self.to_dict(), **kwargs)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, source):
        """Load from a JSON string or a path to a JSON file."""
        if isinstance(source, str) and source.lstrip().startswith("{"):
            return cls.from_dict(json.loads(source))
        with open(source) as fh:
            return cls.from_dict(json.load(fh))

    def __repr__(self):
        return f"QpProblem(n={self.n}, m={self.m}, set={self.feasible_set!r})"


@dataclass(frozen=True)
class SpectralBounds:
    """Scalars with ``mu I <= H <= lam I`` and ``G'G <= sigma I``.

    ``lam`` stands for the upper Hessian bound (``lambda`` is reserved).
    """

    mu: float
    lam: float
    sigma: float

    def __post_init__(self):
        if not (0 <= self.mu <= self.lam):
            raise ValueError(f"need 0 <= mu <= lambda, got mu={self.mu}, lambda={self.lam}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def scaled(self, factor):
        """Looser bounds: ``mu / factor``, ``lam * factor``, ``sigma * factor``."""
        return SpectralBounds(self.mu / factor, self.lam * factor, self.sigma * factor)


@dataclass(frozen=True)
class KktResidual:
    """Optimality residuals of a primal-dual pair.

    Attributes
    ----------
    primal_eq : float
        ``||Gz - g||_2``.
    primal_set : float
        ``||z - P_Z(z)||_2``.
    stationarity : float
        ``||z - P_Z(z - (Hz + h + G'w))||_2``; zero exactly when the
        variational inequality of the KKT system holds.
    """

    primal_eq: float
    primal_set: float
    stationarity: float

    def max(self):
        return max(self.primal_eq, self.primal_set, self.stationarity)

    def as_dict(self):
        return {"primal_eq": self.primal_eq, "primal_set": self.primal_set, "stationarity": self.stationarity}


def objective(problem, z):
    """Cost ``0.5 z'Hz + h'z``."""
    z = check_vector(z, problem.n, name="z")
    return float(0.5 * z @ (problem.H @ z) + problem.h @ z)


def kkt_residual(problem, z, w):
    """KKT residuals of ``(z, w)`` for ``problem``; see :class:`KktResidual`."""
    z = check_vector(z, problem.n, name="z")
    w = check_vector(w, problem.m, name="w")
    grad = problem.H @ z + problem.h + problem.G.T @ w
    return KktResidual(
        primal_eq=float(np.linalg.norm(problem.G @ z - problem.g)),
        primal_set=float(np.linalg.norm(z - problem.project(z))),
        stationarity=float(np.linalg.norm(z - problem.project(z - grad))),
    )


TRACE_COLUMNS = (
    "k",
    "feas_sq",
    "feas_inf",
    "feas_sq_avg",
    "feas_inf_avg",
    "dist_sq",
    "dist_sq_avg",
    "dist_H_sq",
    "dist_H_sq_avg",
    "projections",
    "seconds",
)


@dataclass
class ConvergenceTrace:
    """Per-iteration diagnostics of a solver run.

    Row ``k`` describes the state after iteration ``k``: the raw iterate is
    the newest primal point and the averaged columns use the solver's
    ergodic average (for PIPG, the feasibility average ``z_hat`` in the
    ``feas_*_avg`` columns and the distance average ``z_tilde`` in the
    ``dist_*_avg`` columns). Distance columns are NaN without a reference.
    """

    solver: str = ""
    z_star: np.ndarray = None
    rows: dict = field(default_factory=lambda: {c: [] for c in TRACE_COLUMNS})

    def record(self, problem, k, z, z_feas_avg, z_dist_avg, projections, seconds):
        ks = self.rows["k"]
        if ks and k <= ks[-1]:
            raise ValueError("trace iteration indices must increase")
        pr = self.rows["projections"]
        if pr and projections < pr[-1]:
            raise ValueError("projection count must not decrease")
        r = problem.G @ z - problem.g
        ra = problem.G @ z_feas_avg - problem.g
        row = self.rows
        row["k"].append(k)
        row["feas_sq"].append(float(r @ r))
        row["feas_inf"].append(float(np.max(np.abs(r), initial=0.0)))
        row["feas_sq_avg"].append(float(ra @ ra))
        row["feas_inf_avg"].append(float(np.max(np.abs(ra), initial=0.0)))
        if self.z_star is not None:
            d = z - self.z_star
            da = z_dist_avg - self.z_star
            row["dist_sq"].append(float(d @ d))
            row["dist_sq_avg"].append(float(da @ da))
            row["dist_H_sq"].append(float(d @ (problem.H @ d)))
            row["dist_H_sq_avg"].append(float(da @ (problem.H @ da)))
        else:
            for c in ("dist_sq", "dist_sq_avg", "dist_H_sq", "dist_H_sq_avg"):
                row[c].append(np.nan)
        row["projections"].append(int(projections))
        row["seconds"].append(float(seconds))

    def __len__(self):
        return len(self.rows["k"])

    def __getitem__(self, column):
        dtype = int if column in ("k", "projections") else float
        return np.asarray(self.rows[column], dtype=dtype)

    def as_columns(self):
        return {c: self[c] for c in TRACE_COLUMNS}
