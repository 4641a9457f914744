"""Benchmark harness: reference solutions, convergence traces, projection sweeps.

Outputs are CSV (traces, sweeps) and JSON (reference solutions). Floats are
written with ``repr`` so that identical runs give byte-identical files.
"""

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .mpc import build_benchmark, lift
from .pipg import StepSchedule, StoppingRule, solve
from .problem import KktResidual, kkt_residual
from .spectral import estimate_bounds

__all__ = [
    "SOLVERS",
    "DEFAULT_FINE_OMIT",
    "ExperimentConfig",
    "ReferenceSolution",
    "CertificationError",
    "run_solver",
    "compute_reference",
    "run_trace",
    "trace_csv",
    "run_sweep",
    "sweep_csv",
    "standard_normal",
    "log_log_slope",
]

log = logging.getLogger(__name__)

SOLVERS = ("pipg-var", "pipg-const", "dfg", "admm", "cp-const", "cp-accel")
# too slow to reach fine tolerances; dropped unless listed explicitly
DEFAULT_FINE_OMIT = ("pipg-const", "cp-const")
FINE_TOLERANCE = 1e-5
WORKERS_ENV = "PIPG_BENCH_WORKERS"
REFERENCE_FAMILIES = ("pipg-var", "cp-accel")


class CertificationError(RuntimeError):
    """Reference solvers failed to converge or to agree.

    Attributes
    ----------
    candidates : dict
        Solver id -> ``(z, w, KktResidual)`` for every solver that ran.
    """

    def __init__(self, message, candidates):
        super().__init__(message)
        self.candidates = candidates


def standard_normal(seed, size):
    """Standard normal samples from PCG64 via the Box-Muller transform.

    PCG64's raw 64-bit output stream is fixed by its seed on every platform;
    the 53 high bits of each word give a uniform on (0, 1], and pairs of
    uniforms map to normals through ``sqrt(-2 log u1) cos(2 pi u2)`` and the
    matching ``sin`` term. Unlike ``Generator.standard_normal`` this does not
    depend on NumPy's sampling algorithms.
    """
    bitgen = np.random.PCG64(seed)
    pairs = (size + 1) // 2
    raw = bitgen.random_raw(2 * pairs)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    r = np.sqrt(-2.0 * np.log(u[0::2]))
    angle = 2.0 * np.pi * u[1::2]
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(angle)
    out[1::2] = r * np.sin(angle)
    return out[:size]


def run_solver(solver_id, problem, bounds, init=None, stop=None, z_star=None, record=True, options=None):
    """Dispatch to a solver by identifier (see :data:`SOLVERS`)."""
    options = dict(options or {})
    if solver_id == "pipg-var":
        return solve(problem, StepSchedule.varying(bounds), init, stop, z_star=z_star, record=record)
    if solver_id == "pipg-const":
        schedule = StepSchedule.constant(bounds, beta=options.pop("beta", None))
        return solve(problem, schedule, init, stop, z_star=z_star, record=record)
    if solver_id == "dfg":
        return baselines.dual_fast_gradient_solve(
            problem, bounds, init, stop, z_star=z_star, record=record, **options
        )
    if solver_id == "admm":
        return baselines.admm_solve(
            problem, options.pop("alpha", 2.0), init, stop, z_star=z_star, record=record, **options
        )
    if solver_id == "cp-const":
        return baselines.chambolle_pock_const_solve(
            problem, bounds, init=init, stop=stop, z_star=z_star, record=record, **options
        )
    if solver_id == "cp-accel":
        return baselines.chambolle_pock_accel_solve(
            problem, bounds, init, stop, z_star=z_star, record=record, **options
        )
    raise ValueError(f"unknown solver {solver_id!r}; choose from {', '.join(SOLVERS)}")


# -- reference solutions -----------------------------------------------------------


@dataclass
class ReferenceSolution:
    """Certified primal-dual solution used as ``(z*, w*)`` in experiments."""

    z_star: np.ndarray
    w_star: np.ndarray
    certified_residuals: KktResidual
    producing_solvers: list
    agreement: float = 0.0
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "z_star": [float(v) for v in self.z_star],
            "w_star": [float(v) for v in self.w_star],
            "certified_residuals": self.certified_residuals.as_dict(),
            "producing_solvers": list(self.producing_solvers),
            "agreement": self.agreement,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            z_star=np.asarray(doc["z_star"], dtype=float),
            w_star=np.asarray(doc["w_star"], dtype=float),
            certified_residuals=KktResidual(**doc["certified_residuals"]),
            producing_solvers=list(doc["producing_solvers"]),
            agreement=doc.get("agreement", 0.0),
            meta=doc.get("meta", {}),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def compute_reference(problem, bounds=None, tol=1e-10, max_iterations=1_000_000, agree_rtol=1e-7, families=None):
    """Certified optimal pair ``(z*, w*)`` from two independent solver families.

    Each family runs until its KKT residual is at most ``tol`` or
    ``max_iterations`` is spent. Certification requires every family to meet
    ``tol`` and the primal solutions to agree within ``agree_rtol`` relative;
    ``w*`` comes from PIPG.

    Raises
    ------
    CertificationError
        With all candidates attached, if any family misses ``tol`` or they
        disagree.
    """
    families = tuple(families or REFERENCE_FAMILIES)
    bounds = bounds or estimate_bounds(problem)
    candidates = {}
    stop = StoppingRule(max_iterations=max_iterations, kkt_tolerance=tol)
    for fam in families:
        sol, _ = run_solver(fam, problem, bounds, stop=stop, record=False)
        res = kkt_residual(problem, sol.z, sol.w)
        candidates[fam] = (sol.z, sol.w, res)
        log.info("reference %s: %d iterations, KKT %.3g", fam, sol.iterations, res.max())
    for fam, (_, _, res) in candidates.items():
        if res.max() > tol:
            raise CertificationError(f"{fam} reached KKT residual {res.max():.3g} > {tol:g}", candidates)
    z_ref, w_ref, res_ref = candidates[families[0]]
    scale = max(np.linalg.norm(z_ref), 1.0)
    agreement = max(np.linalg.norm(c[0] - z_ref) / scale for c in candidates.values())
    if agreement > agree_rtol:
        raise CertificationError(f"solvers disagree: relative gap {agreement:.3g} > {agree_rtol:g}", candidates)
    return ReferenceSolution(
        z_star=z_ref.copy(),
        w_star=w_ref.copy(),
        certified_residuals=res_ref,
        producing_solvers=list(families),
        agreement=float(agreement),
    )


# -- traces --------------------------------------------------------------------------

TRACE_CSV_COLUMNS = ("k", "solver", "dist_sq", "feas_sq", "dist_sq_avg", "feas_sq_avg", "projections")


def run_trace(problem, solver_id, init=None, max_k=10_000, reference=None, bounds=None, options=None):
    """Per-iteration convergence trace of one solver run.

    Distance columns need ``reference`` (a :class:`ReferenceSolution` or a
    plain ``z*`` vector); without it they are NaN and a warning is logged.
    """
    bounds = bounds or estimate_bounds(problem)
    z_star = None
    if reference is None:
        log.warning("no reference solution; distance columns omitted")
    else:
        z_star = reference.z_star if isinstance(reference, ReferenceSolution) else np.asarray(reference, float)
    _, trace = run_solver(
        solver_id, problem, bounds, init, StoppingRule(max_iterations=max_k), z_star=z_star, options=options
    )
    return trace


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    return "" if np.isnan(v) else repr(v)


def trace_csv(trace, include_distance=None):
    """Render a trace as CSV text (one row per iteration, first row ``k = 1``)."""
    if include_distance is None:
        include_distance = trace.z_star is not None
    cols = [c for c in TRACE_CSV_COLUMNS if include_distance or not c.startswith("dist")]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    data = {c: trace[c] for c in cols if c != "solver"}
    for i in range(len(trace)):
        writer.writerow([trace.solver if c == "solver" else _fmt(data[c][i]) for c in cols])
    return buf.getvalue()


def log_log_slope(k, values, k_min=100, k_max=10_000):
    """Least-squares slope of ``log(values)`` against ``log(k)`` on ``[k_min, k_max]``."""
    k = np.asarray(k, dtype=float)
    values = np.asarray(values, dtype=float)
    sel = (k >= k_min) & (k <= k_max) & (values > 0)
    slope, _ = np.polyfit(np.log(k[sel]), np.log(values[sel]), 1)
    return float(slope)


# -- sweeps --------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Projection-count sweep over horizons, solvers and tolerances.

    ``solvers=None`` means all of :data:`SOLVERS`, minus
    :data:`DEFAULT_FINE_OMIT` at tolerances at or below ``1e-5``. Listing
    solvers explicitly runs exactly those everywhere. ``max_iterations`` is
    either one budget for every solver or a mapping from solver id to
    budget; it caps outer iterations, and ``max_projections`` (same
    conventions, optional) caps projections.
    """

    horizons: list = field(default_factory=lambda: [5, 15, 25])
    solvers: list = None
    tolerances: list = field(default_factory=lambda: [1e-3, 1e-5])
    num_seeds: int = 20
    seed_base: int = 0
    init_distribution: str = "standard-normal"
    max_iterations: object = 200_000
    max_projections: object = None
    solver_options: dict = field(default_factory=dict)
    output: str = None

    def __post_init__(self):
        if not self.horizons or any(int(T) < 1 for T in self.horizons):
            raise ValueError("horizons must be a nonempty list of positive integers")
        if not self.tolerances or any(not float(e) > 0 for e in self.tolerances):
            raise ValueError("tolerances must be a nonempty list of positive numbers")
        if self.solvers is not None:
            if not self.solvers:
                raise ValueError("solvers must be nonempty")
            bad = [s for s in self.solvers if s not in SOLVERS]
            if bad:
                raise ValueError(f"unknown solvers {bad}")
        if int(self.num_seeds) < 1:
            raise ValueError("num_seeds must be positive")
        if self.init_distribution not in ("standard-normal", "zeros"):
            raise ValueError("init_distribution must be 'standard-normal' or 'zeros'")

    @classmethod
    def full_scale(cls, **overrides):
        """The full protocol: five horizons, 200 seeds."""
        params = dict(horizons=[5, 15, 25, 35, 45], num_seeds=200)
        params.update(overrides)
        return cls(**params)

    @classmethod
    def from_dict(cls, doc):
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def solvers_for(self, tol):
        if self.solvers is not None:
            return list(self.solvers)
        if tol <= FINE_TOLERANCE:
            return [s for s in SOLVERS if s not in DEFAULT_FINE_OMIT]
        return list(SOLVERS)

    def _budget(self, value, solver_id):
        if isinstance(value, dict):
            return value.get(solver_id)
        return value

    def budget(self, solver_id):
        return (
            int(self._budget(self.max_iterations, solver_id) or 200_000),
            self._budget(self.max_projections, solver_id),
        )

    def initial_point(self, problem, seed_index):
        if self.init_distribution == "zeros":
            return np.zeros(problem.n), np.zeros(problem.m)
        x = standard_normal(self.seed_base + seed_index, problem.n + problem.m)
        return x[: problem.n], x[problem.n :]


class _FirstHits:
    """Stopping rule recording the first projection count at which each tolerance is met.

    Feasibility is measured on the raw iterate. Fires once the smallest
    tolerance is met or a budget runs out.
    """

    def __init__(self, tolerances, max_iterations, max_projections=None):
        self.max_iterations = max_iterations
        self.max_projections = max_projections
        self.pending = sorted(tolerances)
        self.hits = {}

    def check(self, problem, iterations, projections, raw, hat, tilde, residual=None, dual=None):
        r = residual if residual is not None else problem.G @ raw - problem.g
        viol = float(np.max(np.abs(r), initial=0.0))
        while self.pending and viol <= self.pending[-1]:
            self.hits[self.pending.pop()] = projections
        if not self.pending:
            return "tolerance"
        if iterations >= self.max_iterations:
            return "max_iterations"
        if self.max_projections is not None and projections >= self.max_projections:
            return "max_projections"
        return None


def _run_cell(config, problem, bounds, solver_id, tolerances, seed_index):
    max_it, max_proj = config.budget(solver_id)
    rule = _FirstHits(tolerances, max_it, max_proj)
    run_solver(
        solver_id,
        problem,
        bounds,
        config.initial_point(problem, seed_index),
        rule,
        record=False,
        options=config.solver_options.get(solver_id),
    )
    return {tol: rule.hits.get(tol) for tol in tolerances}


def run_sweep(config, workers=None):
    """Projections needed to reach ``||Gz - g||_inf <= eps`` on the raw iterate.

    Every (horizon, solver, seed) run is executed once down to the smallest
    tolerance required for that solver, recording the first hit of each
    tolerance on the way. Seed ``i`` uses initial point ``seed_base + i`` for
    every solver, so solvers are compared on identical starts.

    Returns
    -------
    list of dict
        One row per (T, solver, epsilon), sorted, with keys ``T``,
        ``solver``, ``epsilon``, ``mean_projections``, ``std_projections``
        (population standard deviation over successful runs, NaN if none)
        and ``failures`` (runs that exhausted their budget).
    """
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    tols = sorted({float(e) for e in config.tolerances}, reverse=True)
    jobs = []
    problems = {}
    for T in sorted({int(T) for T in config.horizons}):
        problem = lift(build_benchmark(T))
        problems[T] = (problem, estimate_bounds(problem))
        wanted = {}
        for tol in tols:
            for s in config.solvers_for(tol):
                wanted.setdefault(s, []).append(tol)
        for s in sorted(wanted):
            for i in range(int(config.num_seeds)):
                jobs.append((T, s, tuple(wanted[s]), i))

    def work(job):
        T, s, tol_list, i = job
        problem, bounds = problems[T]
        return job, _run_cell(config, problem, bounds, s, tol_list, i)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    cells = {}
    for (T, s, _, _), hits in results:
        for tol, count in hits.items():
            cells.setdefault((T, s, tol), []).append(count)
    rows = []
    for (T, s, tol) in sorted(cells, key=lambda c: (c[0], c[1], -c[2])):
        counts = cells[(T, s, tol)]
        ok = np.array([c for c in counts if c is not None], dtype=float)
        rows.append(
            {
                "T": T,
                "solver": s,
                "epsilon": tol,
                "mean_projections": float(ok.mean()) if len(ok) else float("nan"),
                "std_projections": float(ok.std()) if len(ok) else float("nan"),
                "failures": sum(c is None for c in counts),
            }
        )
    return rows


SWEEP_CSV_COLUMNS = ("T", "solver", "epsilon", "mean_projections", "std_projections", "failures")


def sweep_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in SWEEP_CSV_COLUMNS])
    return buf.getvalue()
