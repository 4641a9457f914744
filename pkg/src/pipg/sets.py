"""Convex sets with cheap Euclidean projections.

Every set exposes ``project`` (the Euclidean projection), ``contains`` and a
JSON-friendly ``to_dict``. :class:`Product` stacks sets on contiguous
coordinate blocks and projects them block by block; factors of the same kind
and size are grouped and projected in one vectorized pass, which is what makes
lifted MPC problems with many small stage sets affordable in pure numpy.

Projections onto the epigraph or a sublevel set of a general smooth convex
function are computed through a scalar root-finding problem on the
multiplier of the single constraint; see :func:`project_sublevel` and
:func:`project_epigraph`.
"""

import numpy as np

from ._validation import check_positive, check_vector

__all__ = [
    "ConvexSet",
    "Whole",
    "Ball",
    "Box",
    "Halfspace",
    "SecondOrderCone",
    "Epigraph",
    "Sublevel",
    "Product",
    "ProjectionError",
    "project",
    "project_sublevel",
    "project_epigraph",
    "set_from_dict",
]

ROOT_RTOL = 1e-10
ROOT_MAX_ITER = 200


class ProjectionError(RuntimeError):
    """Raised when an iterative projection fails to converge.

    Attributes
    ----------
    bracket : tuple of float
        Last multiplier bracket ``(lo, hi)`` examined by the root finder.
    """

    def __init__(self, message, bracket):
        super().__init__(f"{message} (last bracket: [{bracket[0]:.6g}, {bracket[1]:.6g}])")
        self.bracket = bracket


class ConvexSet:
    """Base class for a nonempty closed convex subset of R^dim."""

    dim: int

    def project(self, x):
        """Euclidean projection of ``x`` onto the set."""
        x = check_vector(x, self.dim)
        return self._project(x)

    def _project(self, x):
        raise NotImplementedError

    def contains(self, x, tol=1e-10):
        x = check_vector(x, self.dim)
        return self._contains(x, tol)

    def _contains(self, x, tol):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class Whole(ConvexSet):
    """All of R^dim; projection is the identity."""

    def __init__(self, dim):
        self.dim = int(dim)

    def _project(self, x):
        return x.copy()

    def _contains(self, x, tol):
        return bool(np.all(np.isfinite(x)))

    def to_dict(self):
        return {"type": "whole", "dim": self.dim}


class Ball(ConvexSet):
    """Euclidean ball ``{x : ||x||_2 <= radius}`` centred at the origin."""

    def __init__(self, radius, dim):
        self.radius = check_positive(radius, "radius")
        self.dim = int(dim)

    def _project(self, x):
        return _project_balls(x[None, :], np.array([self.radius]))[0]

    def _contains(self, x, tol):
        return bool(np.linalg.norm(x) <= self.radius + tol)

    def to_dict(self):
        return {"type": "ball", "radius": self.radius, "dim": self.dim}

    def __repr__(self):
        return f"Ball(radius={self.radius}, dim={self.dim})"


class Box(ConvexSet):
    """Axis-aligned box ``{x : lower <= x <= upper}``; infinite bounds allowed."""

    def __init__(self, lower, upper):
        self.lower = check_vector(lower, name="lower")
        self.upper = check_vector(upper, len(self.lower), name="upper")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("box bounds must not be NaN")
        if np.any(self.lower > self.upper):
            raise ValueError("box requires lower <= upper elementwise")
        self.dim = len(self.lower)

    def _project(self, x):
        return np.minimum(np.maximum(x, self.lower), self.upper)

    def _contains(self, x, tol):
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def to_dict(self):
        return {
            "type": "box",
            "lower": [_json_float(v) for v in self.lower],
            "upper": [_json_float(v) for v in self.upper],
        }


class Halfspace(ConvexSet):
    """Halfspace ``{x : <normal, x> <= offset}``.

    The projection subtracts ``(<a, x> - offset) * a / ||a||^2``, the exact
    Euclidean formula for any nonzero normal ``a``.
    """

    def __init__(self, normal, offset):
        self.normal = check_vector(normal, name="normal")
        self.offset = float(offset)
        self._norm_sq = float(self.normal @ self.normal)
        if self._norm_sq == 0.0:
            raise ValueError("halfspace normal must be nonzero")
        self.dim = len(self.normal)

    def _project(self, x):
        return _project_halfspaces(
            x[None, :], self.normal[None, :], np.array([self.offset]), np.array([self._norm_sq])
        )[0]

    def _contains(self, x, tol):
        return bool(self.normal @ x <= self.offset + tol * np.sqrt(self._norm_sq))

    def to_dict(self):
        return {"type": "halfspace", "normal": self.normal.tolist(), "offset": self.offset}


class SecondOrderCone(ConvexSet):
    """Second-order cone ``{(y, t) : ||y||_2 <= t}``; the last coordinate is ``t``."""

    def __init__(self, dim):
        self.dim = int(dim)
        if self.dim < 2:
            raise ValueError("second-order cone needs dim >= 2")

    def _project(self, x):
        return _project_socs(x[None, :])[0]

    def _contains(self, x, tol):
        return bool(np.linalg.norm(x[:-1]) <= x[-1] + tol)

    def to_dict(self):
        return {"type": "soc", "dim": self.dim}


class Sublevel(ConvexSet):
    """Sublevel set ``{x : f(x) <= level}`` of a smooth convex function.

    Parameters
    ----------
    f, grad : callable
        The function and its gradient.
    level : float
    dim : int
    hess : callable, optional
        Hessian of ``f``. When omitted it is approximated by central
        differences of ``grad``.

    Notes
    -----
    Points with ``f(x) <= level + 1e-10 * max(1, |level|)`` count as members
    and are returned unchanged, which keeps the projection idempotent.
    """

    def __init__(self, f, grad, level, dim, hess=None):
        self.f, self.grad, self.hess = f, grad, hess
        self.level = float(level)
        self.dim = int(dim)

    def _project(self, x):
        return project_sublevel(self.f, self.grad, self.level, x, hess=self.hess)

    def _contains(self, x, tol):
        return bool(self.f(x) <= self.level + max(tol, ROOT_RTOL) * max(1.0, abs(self.level)))

    def to_dict(self):
        raise TypeError("sublevel sets of arbitrary functions are not serializable")


class Epigraph(ConvexSet):
    """Epigraph ``{(y, t) : f(y) <= t}`` of a smooth convex function of ``dim - 1`` variables."""

    def __init__(self, f, grad, dim, hess=None):
        self.f, self.grad, self.hess = f, grad, hess
        self.dim = int(dim)
        if self.dim < 2:
            raise ValueError("epigraph needs dim >= 2")

    def _project(self, x):
        return project_epigraph(self.f, self.grad, x, hess=self.hess)

    def _contains(self, x, tol):
        t = x[-1]
        return bool(self.f(x[:-1]) <= t + max(tol, ROOT_RTOL) * max(1.0, abs(t)))

    def to_dict(self):
        raise TypeError("epigraphs of arbitrary functions are not serializable")


class Product(ConvexSet):
    """Cartesian product of sets on contiguous coordinate blocks.

    Factors are laid out in declaration order. Nested products are
    flattened. Balls, halfspaces and cones of equal dimension are projected
    together in a single vectorized call; the result does not depend on the
    grouping because each block is computed from its own coordinates only.
    """

    def __init__(self, factors):
        flat = []
        for fac in factors:
            if isinstance(fac, Product):
                flat.extend(fac.factors)
            elif isinstance(fac, ConvexSet):
                flat.append(fac)
            else:
                raise TypeError(f"product factor must be a ConvexSet, got {type(fac).__name__}")
        if not flat:
            raise ValueError("product needs at least one factor")
        self.factors = flat
        self.offsets = np.cumsum([0] + [f.dim for f in flat])
        self.dim = int(self.offsets[-1])
        self._compile()

    def _compile(self):
        box_idx, box_lo, box_hi = [], [], []
        balls, halfspaces, socs, others = {}, {}, {}, []
        for fac, start in zip(self.factors, self.offsets[:-1]):
            idx = np.arange(start, start + fac.dim)
            if isinstance(fac, Whole):
                continue
            if isinstance(fac, Box):
                box_idx.append(idx)
                box_lo.append(fac.lower)
                box_hi.append(fac.upper)
            elif isinstance(fac, Ball):
                balls.setdefault(fac.dim, []).append((idx, fac))
            elif isinstance(fac, Halfspace):
                halfspaces.setdefault(fac.dim, []).append((idx, fac))
            elif isinstance(fac, SecondOrderCone):
                socs.setdefault(fac.dim, []).append((idx, fac))
            else:
                others.append((idx, fac))
        self._box = None
        if box_idx:
            self._box = (np.concatenate(box_idx), np.concatenate(box_lo), np.concatenate(box_hi))
        self._balls = [
            (np.stack([i for i, _ in grp]), np.array([f.radius for _, f in grp]))
            for grp in balls.values()
        ]
        self._halfspaces = [
            (
                np.stack([i for i, _ in grp]),
                np.stack([f.normal for _, f in grp]),
                np.array([f.offset for _, f in grp]),
                np.array([f._norm_sq for _, f in grp]),
            )
            for grp in halfspaces.values()
        ]
        self._socs = [np.stack([i for i, _ in grp]) for grp in socs.values()]
        self._others = others

    def _project(self, x):
        out = x.copy()
        if self._box is not None:
            idx, lo, hi = self._box
            out[idx] = np.minimum(np.maximum(x[idx], lo), hi)
        for idx, radii in self._balls:
            out[idx] = _project_balls(x[idx], radii)
        for idx, normals, offsets, norm_sq in self._halfspaces:
            out[idx] = _project_halfspaces(x[idx], normals, offsets, norm_sq)
        for idx in self._socs:
            out[idx] = _project_socs(x[idx])
        for idx, fac in self._others:
            out[idx] = fac._project(x[idx])
        return out

    def blocks(self, x):
        """Split ``x`` into per-factor views."""
        return [x[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def _contains(self, x, tol):
        return all(f._contains(b, tol) for f, b in zip(self.factors, self.blocks(x)))

    def to_dict(self):
        return {"type": "product", "factors": [f.to_dict() for f in self.factors]}

    def __repr__(self):
        return f"Product({self.factors!r})"


# -- vectorized kernels; one row per set --------------------------------------


def _project_balls(X, radii):
    norms = np.sqrt(np.einsum("ij,ij->i", X, X))
    # radii / radii is exactly 1, so points inside are returned unchanged
    return X * (radii / np.maximum(norms, radii))[:, None]


def _project_halfspaces(X, normals, offsets, norm_sq):
    excess = np.einsum("ij,ij->i", normals, X) - offsets
    shift = np.maximum(excess, 0.0) / norm_sq
    return X - shift[:, None] * normals


def _project_socs(X):
    Y, t = X[:, :-1], X[:, -1]
    ny = np.sqrt(np.einsum("ij,ij->i", Y, Y))
    inside = ny <= t
    # tie ||y|| == -t falls in the origin branch
    polar = (ny <= -t) & ~inside
    boundary = ~(inside | polar)
    out = X.copy()
    out[polar] = 0.0
    if np.any(boundary):
        nb, tb = ny[boundary], t[boundary]
        coef = (nb + tb) / (2.0 * nb)
        out[boundary, :-1] = coef[:, None] * Y[boundary]
        out[boundary, -1] = coef * nb
    return out


# -- smooth-function sets ------------------------------------------------------


def _numeric_hessian(grad, x):
    n = len(x)
    hess = np.empty((n, n))
    for i in range(n):
        step = 1e-6 * max(1.0, abs(x[i]))
        e = np.zeros(n)
        e[i] = step
        hess[:, i] = (grad(x + e) - grad(x - e)) / (2 * step)
    return 0.5 * (hess + hess.T)


def _prox(f, grad, hess, rho, y, x0=None, max_iter=100):
    """Minimize ``rho * f(x) + 0.5 * ||x - y||^2`` by damped Newton."""
    x = y.copy() if x0 is None else x0.copy()
    if rho == 0.0:
        return x
    n = len(y)

    def phi(p):
        return rho * f(p) + 0.5 * float((p - y) @ (p - y))

    def gradient(p):
        return rho * grad(p) + (p - y)

    val = phi(x)
    for _ in range(max_iter):
        g = gradient(x)
        gnorm = np.linalg.norm(g)
        if gnorm <= 1e-14 * max(1.0, np.linalg.norm(y), rho * np.linalg.norm(grad(x))):
            break
        hx = hess(x) if hess is not None else _numeric_hessian(grad, x)
        step = np.linalg.solve(rho * np.atleast_2d(hx) + np.eye(n), g)
        t = 1.0
        while True:
            cand = x - t * step
            cval = phi(cand)
            if cval <= val - 1e-4 * t * float(g @ step) or t < 1e-12:
                break
            # close to the minimizer the decrease of phi drowns in rounding;
            # a step that shrinks the gradient is then still progress
            if abs(cval - val) <= 1e-13 * max(1.0, abs(val)) and np.linalg.norm(gradient(cand)) < gnorm:
                break
            t *= 0.5
        if np.array_equal(cand, x):
            break
        x, val = cand, cval
    return x


def _find_root(func, tol, what):
    """Root of a nonincreasing scalar function on [0, inf) with ``func(0) > 0``.

    Brackets by doubling, then refines with the Illinois variant of regula
    falsi. The iteration budget is shared between both stages.
    """
    lo, flo = 0.0, func(0.0)
    hi = 1.0
    it = 0
    fhi = func(hi)
    while fhi > 0:
        it += 1
        if it >= ROOT_MAX_ITER:
            raise ProjectionError(f"{what}: could not bracket the multiplier", (lo, hi))
        lo, flo = hi, fhi
        hi *= 2.0
        fhi = func(hi)
    if abs(fhi) <= tol:
        return hi
    side = 0
    while it < ROOT_MAX_ITER:
        it += 1
        c = (lo * fhi - hi * flo) / (fhi - flo)
        if not lo < c < hi:
            c = 0.5 * (lo + hi)
        fc = func(c)
        if abs(fc) <= tol:
            return c
        if fc > 0:
            lo, flo = c, fc
            if side == 1:
                fhi *= 0.5
            side = 1
        else:
            hi, fhi = c, fc
            if side == -1:
                flo *= 0.5
            side = -1
    raise ProjectionError(f"{what}: root finder did not converge", (lo, hi))


def project_sublevel(f, grad, level, x, hess=None):
    """Project ``x`` onto ``{z : f(z) <= level}`` for smooth convex ``f``.

    The projection is ``prox_{mu f}(x)`` where the multiplier ``mu >= 0``
    solves ``f(prox_{mu f}(x)) = level``. The outer equation is solved to
    ``|f - level| <= 1e-10 * max(1, |level|)`` within 200 iterations; each
    evaluation solves the inner proximal problem by damped Newton.

    Raises
    ------
    ProjectionError
        If the multiplier cannot be bracketed or the root finder stalls, for
        example when ``level`` lies below the minimum of ``f``.
    """
    x = check_vector(x)
    level = float(level)
    tol = ROOT_RTOL * max(1.0, abs(level))
    if f(x) <= level + tol:
        return x.copy()
    cache = {}

    def gap(mu):
        p = _prox(f, grad, hess, mu, x)
        cache[mu] = p
        return f(p) - level

    mu = _find_root(gap, tol, "sublevel projection")
    return cache[mu]


def project_epigraph(f, grad, x, hess=None):
    """Project ``x = (y, t)`` onto ``{(y, t) : f(y) <= t}`` for smooth convex ``f``.

    The projection is ``(p, f(p))`` with ``p = prox_{rho f}(y)`` and the
    multiplier ``rho >= 0`` solving ``rho = f(p) - t``.
    """
    x = check_vector(x)
    y, t = x[:-1], float(x[-1])
    tol = ROOT_RTOL * max(1.0, abs(t))
    if f(y) <= t + tol:
        return x.copy()
    cache = {}

    def gap(rho):
        p = _prox(f, grad, hess, rho, y)
        cache[rho] = p
        return f(p) - t - rho

    rho = _find_root(gap, tol, "epigraph projection")
    p = cache[rho]
    return np.append(p, f(p))


def project(convex_set, x):
    """Euclidean projection of ``x`` onto ``convex_set``."""
    return convex_set.project(x)


def _json_float(v):
    if np.isposinf(v):
        return "inf"
    if np.isneginf(v):
        return "-inf"
    return float(v)


def set_from_dict(desc):
    """Build a set from its JSON descriptor (see ``ConvexSet.to_dict``)."""
    kind = desc.get("type")
    if kind == "ball":
        return Ball(desc["radius"], desc["dim"])
    if kind == "box":
        return Box([float(v) for v in desc["lower"]], [float(v) for v in desc["upper"]])
    if kind == "halfspace":
        return Halfspace(desc["normal"], desc["offset"])
    if kind == "soc":
        return SecondOrderCone(desc["dim"])
    if kind == "whole":
        return Whole(desc["dim"])
    if kind == "product":
        return Product([set_from_dict(d) for d in desc["factors"]])
    raise ValueError(f"unknown set type {kind!r}")
