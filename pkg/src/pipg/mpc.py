"""Finite-horizon tracking problems and their stage-wise PIPG iteration.

A tracking problem over horizon ``T`` is::

    minimize    0.5 sum_t ||x_t - y_t||_{Q_t}^2 + 0.5 sum_t ||u_{t-1}||_{R_{t-1}}^2
    subject to  x_t = A_{t-1} x_{t-1} + B_{t-1} u_{t-1},
                u_{t-1} in U_{t-1},  x_t in X_t,     t = 1..T

:func:`lift` rewrites it as a :class:`~pipg.problem.QpProblem` with the
interleaved layout ``z = [u_0; x_1; u_1; x_2; ...; u_{T-1}; x_T]``.
:func:`structured_pipg_step` runs the same PIPG iteration directly on the
stage data, in three phases whose per-stage updates are independent.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._validation import check_matrix, check_vector
from .pipg import NonFiniteIterateError
from .problem import QpProblem
from .sets import Ball, ConvexSet, Halfspace, Product, set_from_dict

__all__ = [
    "TrackingProblem",
    "StageState",
    "lift",
    "pack",
    "unpack",
    "init_stage_state",
    "structured_pipg_step",
    "build_benchmark",
    "BENCHMARK_THETA",
]

BENCHMARK_THETA = 0.063
BENCHMARK_X0 = (-2.5, 0.6, 0.0, 0.0)
BENCHMARK_TARGET = (2.9, 0.3)


@dataclass
class TrackingProblem:
    """Stage data of a linear tracking problem.

    All per-stage sequences have length ``T``; entry ``t - 1`` belongs to
    stage ``t``. So ``A[t-1]`` and ``B[t-1]`` map ``(x_{t-1}, u_{t-1})`` to
    ``x_t``, ``Q[t-1]`` weights ``x_t - y[t-1]`` and ``R[t-1]`` weights
    ``u_{t-1}``.
    """

    A: list
    B: list
    Q: list
    R: list
    y: list
    X: list
    U: list
    x0: np.ndarray

    def __post_init__(self):
        T = len(self.A)
        if T < 1:
            raise ValueError("horizon must be at least 1")
        for name in ("B", "Q", "R", "y", "X", "U"):
            if len(getattr(self, name)) != T:
                raise ValueError(f"{name} has {len(getattr(self, name))} stages, expected {T}")
        self.x0 = check_vector(self.x0, name="x0")
        nx = len(self.x0)
        self.A = [check_matrix(a, (nx, nx), name="A") for a in self.A]
        nu = np.shape(self.B[0])[1]
        self.B = [check_matrix(b, (nx, nu), name="B") for b in self.B]
        self.Q = [check_matrix(q, (nx, nx), name="Q") for q in self.Q]
        self.R = [check_matrix(r, (nu, nu), name="R") for r in self.R]
        self.y = [check_vector(v, nx, name="y") for v in self.y]
        for name, sets, dim in (("X", self.X, nx), ("U", self.U, nu)):
            for s in sets:
                if not isinstance(s, ConvexSet) or s.dim != dim:
                    raise ValueError(f"every {name} set must be a ConvexSet of dimension {dim}")
        for w in self.Q + self.R:
            if not np.allclose(w, w.T, rtol=0, atol=1e-12 * max(1.0, abs(w).max())):
                raise ValueError("weight matrices must be symmetric")
            if np.linalg.eigvalsh(w).min() < -1e-12 * max(1.0, abs(w).max()):
                raise ValueError("weight matrices must be positive semidefinite")

    @property
    def T(self):
        return len(self.A)

    @property
    def nx(self):
        return len(self.x0)

    @property
    def nu(self):
        return self.B[0].shape[1]

    def to_dict(self):
        return {
            "T": self.T,
            "A": [a.tolist() for a in self.A],
            "B": [b.tolist() for b in self.B],
            "Q": [q.tolist() for q in self.Q],
            "R": [r.tolist() for r in self.R],
            "y": [v.tolist() for v in self.y],
            "X": [s.to_dict() for s in self.X],
            "U": [s.to_dict() for s in self.U],
            "x0": self.x0.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            A=doc["A"],
            B=doc["B"],
            Q=doc["Q"],
            R=doc["R"],
            y=doc["y"],
            X=[set_from_dict(d) for d in doc["X"]],
            U=[set_from_dict(d) for d in doc["U"]],
            x0=doc["x0"],
        )

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def lift(tp, sparse=False):
    """Rewrite a tracking problem as a single QP.

    Returns a :class:`QpProblem` with ``n = T (nu + nx)`` and ``m = T nx``.
    ``G`` has block row ``t`` equal to ``[-A_{t-1}, -B_{t-1}, I]`` on the
    columns of ``(x_{t-1}, u_{t-1}, x_t)``; for ``t = 1`` the ``x_0`` term is
    moved to ``g``, which is ``[A_0 x_0; 0; ...; 0]``.
    """
    T, nx, nu = tp.T, tp.nx, tp.nu
    s = nu + nx
    n, m = T * s, T * nx
    H = np.zeros((n, n))
    h = np.zeros(n)
    G = np.zeros((m, n))
    g = np.zeros(m)
    factors = []
    for t in range(T):
        cu = t * s
        cx = cu + nu
        H[cu:cx, cu:cx] = tp.R[t]
        H[cx : cx + nx, cx : cx + nx] = tp.Q[t]
        h[cx : cx + nx] = -tp.Q[t] @ tp.y[t]
        rows = slice(t * nx, (t + 1) * nx)
        G[rows, cu:cx] = -tp.B[t]
        G[rows, cx : cx + nx] = np.eye(nx)
        if t > 0:
            G[rows, cu - nx : cu] = -tp.A[t]
        factors += [tp.U[t], tp.X[t]]
    g[:nx] = tp.A[0] @ tp.x0
    if sparse:
        H, G = sp.csr_matrix(H), sp.csr_matrix(G)
    return QpProblem(H, h, G, g, Product(factors))


def pack(u, x):
    """Interleave stage inputs ``u`` (T, nu) and states ``x`` (T, nx) into ``z``."""
    return np.concatenate([np.asarray(u, dtype=float), np.asarray(x, dtype=float)], axis=1).ravel()


def unpack(z, nu, nx):
    """Inverse of :func:`pack`: returns ``(u, x)`` as (T, nu) and (T, nx) arrays."""
    zz = np.asarray(z, dtype=float).reshape(-1, nu + nx)
    return zz[:, :nu].copy(), zz[:, nu:].copy()


@dataclass
class StageState:
    """Per-stage PIPG iterates.

    Rows of ``u``, ``x``, ``w`` hold ``u_{t-1}``, ``x_t`` and ``w_t``.
    Averages are kept on the packed layout so that they compare directly
    with the lifted solver.
    """

    u: np.ndarray
    x: np.ndarray
    w: np.ndarray
    k: int = 1
    z_hat: np.ndarray = None
    z_tilde: np.ndarray = None
    hat_total: float = 0.0
    tilde_total: float = 0.0
    projections: int = 0

    @property
    def z(self):
        return pack(self.u, self.x)


def init_stage_state(tp, z0=None, w0=None):
    z = np.zeros(tp.T * (tp.nu + tp.nx)) if z0 is None else check_vector(z0, tp.T * (tp.nu + tp.nx))
    u, x = unpack(z, tp.nu, tp.nx)
    w = np.zeros((tp.T, tp.nx)) if w0 is None else check_vector(w0, tp.T * tp.nx).reshape(tp.T, tp.nx).copy()
    return StageState(u=u, x=x, w=w, z_hat=z.copy(), z_tilde=z.copy())


def _defect(tp, u, x, t):
    """``x_t - A_{t-1} x_{t-1} - B_{t-1} u_{t-1}`` for 0-based stage index ``t``."""
    prev = tp.x0 if t == 0 else x[t - 1]
    return x[t] - tp.A[t] @ prev - tp.B[t] @ u[t]


def _run(stage_fn, T, pool):
    if pool is None:
        return [stage_fn(t) for t in range(T)]
    return list(pool.map(stage_fn, range(T)))


def structured_pipg_step(tp, schedule, state, pool=None):
    """One PIPG iteration on stage data.

    The iteration runs as three barrier-separated phases over stages:

    1. ``v_t = w_t + beta_k (x_t - A_{t-1} x_{t-1} - B_{t-1} u_{t-1})``;
    2. ``u_{t-1} <- P_U(u_{t-1} - alpha_k (R u_{t-1} - B' v_t))`` and
       ``x_t <- P_X(x_t - alpha_k (Q (x_t - y_t) + v_t - A_t' v_{t+1}))``
       with ``A_T' v_{T+1} = 0``;
    3. ``w_t <- w_t + beta_k (defect of the new iterates)``.

    Every phase reads only values produced by earlier phases, so each can be
    distributed over ``pool`` (any executor with ``map``). The result matches
    :func:`~pipg.pipg.pipg_step` on ``lift(tp)`` up to summation order.
    """
    T = tp.T
    k = state.k
    alpha, beta = schedule.steps(k)
    u, x, w = state.u, state.x, state.w

    v = np.array(_run(lambda t: w[t] + beta * _defect(tp, u, x, t), T, pool))

    def primal(t):
        gu = tp.R[t] @ u[t] - tp.B[t].T @ v[t]
        gx = tp.Q[t] @ (x[t] - tp.y[t]) + v[t]
        if t + 1 < T:
            gx = gx - tp.A[t + 1].T @ v[t + 1]
        return tp.U[t]._project(u[t] - alpha * gu), tp.X[t]._project(x[t] - alpha * gx)

    new = _run(primal, T, pool)
    u_new = np.array([p[0] for p in new])
    x_new = np.array([p[1] for p in new])

    w_new = np.array(_run(lambda t: w[t] + beta * _defect(tp, u_new, x_new, t), T, pool))
    if not (np.isfinite(u_new).all() and np.isfinite(x_new).all() and np.isfinite(w_new).all()):
        raise NonFiniteIterateError(k)

    z_old, z_new = pack(u, x), pack(u_new, x_new)
    a, b = schedule.weights(k)
    hat_total = state.hat_total + a
    tilde_total = state.tilde_total + b
    if state.hat_total == 0.0:
        z_hat, z_tilde = z_old, z_new.copy()
    else:
        z_hat = state.z_hat + (a / hat_total) * (z_old - state.z_hat)
        z_tilde = state.z_tilde + (b / tilde_total) * (z_new - state.z_tilde)
    return StageState(
        u=u_new,
        x=x_new,
        w=w_new,
        k=k + 1,
        z_hat=z_hat,
        z_tilde=z_tilde,
        hat_total=hat_total,
        tilde_total=tilde_total,
        projections=state.projections + 1,
    )


def run_structured(tp, schedule, iterations, state=None, workers=None):
    """Run ``iterations`` structured steps, optionally on a thread pool."""
    state = state or init_stage_state(tp)
    if workers is None or workers <= 1:
        for _ in range(iterations):
            state = structured_pipg_step(tp, schedule, state)
        return state
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for _ in range(iterations):
            state = structured_pipg_step(tp, schedule, state, pool=pool)
    return state


def build_benchmark(T, theta=BENCHMARK_THETA, reference_velocity=(0.0, 0.0)):
    """Trajectory-planning scenario with a rotating keep-out halfspace.

    Double integrator in the plane sampled at 0.5 s with state
    ``(p, q)`` (position, velocity) and acceleration input ``u``. Stage sets:
    ``||u|| <= 0.1``; ``||q|| <= 0.25`` and
    ``<(-cos(theta t), sin(theta t)), p> >= 2``. The reference moves the
    position uniformly from ``(-2.5, 0.6)`` to ``(2.9, 0.3)`` over the horizon
    with constant ``reference_velocity``.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    dt = 0.5
    A = np.array(
        [
            [1.0, 0.0, dt, 0.0],
            [0.0, 1.0, 0.0, dt],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    B = np.array([[0.125, 0.0], [0.0, 0.125], [0.5, 0.0], [0.0, 0.5]])
    Q = np.diag([1.0, 0.5, 1.0, 0.5])
    R = np.diag([1.0, 0.5])
    start = np.array(BENCHMARK_X0[:2])
    target = np.array(BENCHMARK_TARGET)
    y, X = [], []
    for t in range(1, T + 1):
        pos = start + (t / T) * (target - start)
        y.append(np.concatenate([pos, reference_velocity]))
        # <(-cos, sin), p> >= 2  <=>  <(cos, -sin), p> <= -2
        keep_out = Halfspace([np.cos(theta * t), -np.sin(theta * t)], -2.0)
        X.append(Product([keep_out, Ball(0.25, 2)]))
    return TrackingProblem(
        A=[A] * T,
        B=[B] * T,
        Q=[Q] * T,
        R=[R] * T,
        y=y,
        X=X,
        U=[Ball(0.1, 2) for _ in range(T)],
        x0=np.array(BENCHMARK_X0),
    )
