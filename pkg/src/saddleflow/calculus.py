"""Subdifferentials, least-norm selections and generalized-Hessian hulls.

Sets are kept in one of three closed forms (point, axis-aligned box,
segment) plus a Minkowski sum of a box and segments, which is enough to
represent the x-part of the saddle operator without enumerating polytopes.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.optimize import lsq_linear

from .errors import NotC11, UnsupportedTerm
from .problem import (
    Canonical,
    ConvexProgram,
    InequalityConstraint,
    ObjectiveTerm,
)


class SubdifferentialSet:
    """Nonempty convex compact subset of R^d."""

    dim: int

    def least_norm(self) -> np.ndarray:
        raise NotImplementedError

    def contains(self, v, tol: float = 1e-12) -> bool:
        raise NotImplementedError

    def support(self, direction) -> float:
        """``max <direction, s>`` over the set."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Point(SubdifferentialSet):
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))

    @property
    def dim(self):
        return len(self.v)

    def least_norm(self):
        return self.v.copy()

    def contains(self, v, tol=1e-12):
        return bool(np.all(np.abs(np.atleast_1d(v) - self.v) <= tol))

    def support(self, direction):
        return float(np.dot(direction, self.v))

    def sample(self, rng):
        return self.v.copy()

    def __repr__(self):
        return f"Point({self.v.tolist()})"


@dataclass(frozen=True, eq=False)
class Box(SubdifferentialSet):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("Box needs lo <= hi of equal shape")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return len(self.lo)

    def least_norm(self):
        return np.clip(0.0, self.lo, self.hi)

    def contains(self, v, tol=1e-12):
        v = np.atleast_1d(v)
        return bool(np.all(v >= self.lo - tol) and np.all(v <= self.hi + tol))

    def support(self, direction):
        d = np.asarray(direction, dtype=float)
        return float(np.sum(np.where(d >= 0, d * self.hi, d * self.lo)))

    def sample(self, rng):
        return self.lo + rng.random(self.dim) * (self.hi - self.lo)

    def __repr__(self):
        return f"Box({self.lo.tolist()}, {self.hi.tolist()})"


@dataclass(frozen=True, eq=False)
class Segment(SubdifferentialSet):
    v0: np.ndarray
    v1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v0", np.atleast_1d(np.asarray(self.v0, dtype=float)))
        object.__setattr__(self, "v1", np.atleast_1d(np.asarray(self.v1, dtype=float)))

    @property
    def dim(self):
        return len(self.v0)

    def least_norm(self):
        d = self.v1 - self.v0
        dd = float(d @ d)
        if dd == 0.0:
            return self.v0.copy()
        t = min(1.0, max(0.0, -float(self.v0 @ d) / dd))
        return self.v0 + t * d

    def contains(self, v, tol=1e-12):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        d = self.v1 - self.v0
        dd = float(d @ d)
        t = 0.0 if dd == 0.0 else min(1.0, max(0.0, float((v - self.v0) @ d) / dd))
        return bool(np.linalg.norm(self.v0 + t * d - v) <= tol)

    def support(self, direction):
        return max(float(np.dot(direction, self.v0)), float(np.dot(direction, self.v1)))

    def sample(self, rng):
        return self.v0 + rng.random() * (self.v1 - self.v0)

    def __repr__(self):
        return f"Segment({self.v0.tolist()}, {self.v1.tolist()})"


def box(lo, hi) -> SubdifferentialSet:
    """Box constructor that canonicalizes degenerate boxes to points."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if np.array_equal(lo, hi):
        return Point(lo)
    return Box(lo, hi)


@dataclass(frozen=True, eq=False)
class MinkowskiSum(SubdifferentialSet):
    """``base + sum(segments)`` where ``base`` is a point or box."""

    base: SubdifferentialSet
    segments: tuple = ()

    @property
    def dim(self):
        return self.base.dim

    def _box(self):
        if isinstance(self.base, Point):
            return self.base.v, self.base.v
        return self.base.lo, self.base.hi

    def least_norm(self):
        if not self.segments:
            return self.base.least_norm()
        lo, hi = self._box()
        offset = sum((s.v0 for s in self.segments), np.zeros(self.dim))
        D = np.column_stack([s.v1 - s.v0 for s in self.segments])
        # minimize ||offset + b + D t|| over b in [lo, hi], t in [0, 1]
        free = hi > lo
        M = np.hstack([np.eye(self.dim)[:, free], D])
        rhs = -(offset + lo)
        ub = np.concatenate([(hi - lo)[free], np.ones(D.shape[1])])
        sol = lsq_linear(M, rhs, bounds=(np.zeros_like(ub), ub), method="bvls", tol=1e-14)
        return offset + lo + M @ sol.x

    def contains(self, v, tol=1e-9):
        shifted = MinkowskiSum(_shift(self.base, -np.atleast_1d(v)), self.segments)
        return bool(np.linalg.norm(shifted.least_norm()) <= tol)

    def support(self, direction):
        return self.base.support(direction) + sum(s.support(direction) for s in self.segments)

    def sample(self, rng):
        return self.base.sample(rng) + sum((s.sample(rng) for s in self.segments), np.zeros(self.dim))


def _shift(s: SubdifferentialSet, v) -> SubdifferentialSet:
    if isinstance(s, Point):
        return Point(s.v + v)
    if isinstance(s, Box):
        return Box(s.lo + v, s.hi + v)
    raise TypeError(type(s))


def least_norm(s: SubdifferentialSet) -> np.ndarray:
    return s.least_norm()


# ---------------------------------------------------------------------------
# objective terms


def canonical_interval(c: Canonical, x: float) -> tuple:
    """Endpoints of the scalar subdifferential of a canonical term at ``x``."""
    q = c.cp if x >= 0.0 else c.cm
    d = c.w4 * x * x * x + q * x
    if x > 0.0:
        return d + c.w1, d + c.w1
    if x < 0.0:
        return d - c.w1, d - c.w1
    return d - c.w1, d + c.w1


def subdiff(term: ObjectiveTerm, x: float) -> SubdifferentialSet:
    """Exact subdifferential of a catalog term at the scalar ``x``."""
    try:
        c = term.canonical()
    except NotImplementedError:
        raise UnsupportedTerm(f"no subdifferential rule for {term!r}") from None
    lo, hi = canonical_interval(c, float(x))
    return box([lo], [hi])


def subdiff_plus(g: InequalityConstraint, x, tol: float = 0.0) -> SubdifferentialSet:
    """Subdifferential of ``max(0, g(x))``: zero inside, gradient outside, hull on the boundary."""
    x = np.asarray(x, dtype=float)
    val = g.value(x)
    if val < -tol:
        return Point(np.zeros(len(x)))
    grad = g.gradient(x)
    if val > tol:
        return Point(grad)
    return Segment(np.zeros(len(x)), grad)


def kinks(c: Canonical) -> tuple:
    """Points where a canonical term's derivative jumps."""
    return (0.0,) if c.w1 > 0.0 else ()


# ---------------------------------------------------------------------------
# generalized Hessians


def _hessian_canonical(c: Canonical, x: float) -> tuple:
    if c.w1 > 0.0:
        raise NotC11("term with an absolute-value part has no locally Lipschitz gradient")
    if x > 0.0:
        v = 3.0 * c.w4 * x * x + c.cp
        return v, v
    if x < 0.0:
        v = 3.0 * c.w4 * x * x + c.cm
        return v, v
    return min(c.cp, c.cm), max(c.cp, c.cm)


def hessian_interval(term: ObjectiveTerm, x: float) -> tuple:
    """Generalized Hessian of a C^{1,1} term at ``x`` as a closed interval ``(lo, hi)``."""
    return _hessian_canonical(term.canonical(), float(x))


def segment_hessian_interval(c: Canonical, a: float, b: float) -> tuple:
    """Hull of the generalized Hessian of a canonical term over the segment between a and b."""
    if c.w1 > 0.0:
        raise NotC11("term with an absolute-value part has no locally Lipschitz gradient")
    a, b = min(a, b), max(a, b)
    vals = []
    # on each open half-line the Hessian is 3 w4 x^2 + const, monotone in |x|,
    # so the extremes sit at the clipped segment endpoints and the kink at 0
    if b > 0.0:
        lo_pos = max(a, 0.0)
        vals += [3.0 * c.w4 * lo_pos * lo_pos + c.cp, 3.0 * c.w4 * b * b + c.cp]
    if a < 0.0:
        hi_neg = min(b, 0.0)
        vals += [3.0 * c.w4 * a * a + c.cm, 3.0 * c.w4 * hi_neg * hi_neg + c.cm]
    if a <= 0.0 <= b:
        vals += [min(c.cp, c.cm), max(c.cp, c.cm)]
    return min(vals), max(vals)


@dataclass(frozen=True, eq=False)
class HessianHull:
    """Diagonal interval matrix ``diag([lo_i, hi_i])``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if np.any(self.lo > self.hi):
            raise ValueError("HessianHull needs lo <= hi")

    @property
    def positive_definite(self) -> bool:
        return bool(np.all(self.lo > 0.0))

    @property
    def free(self) -> np.ndarray:
        """Indices with a non-degenerate interval."""
        return np.flatnonzero(self.hi > self.lo)

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def corners(self):
        """Iterate over every diagonal obtained by picking an endpoint per free coordinate."""
        free = self.free
        for choice in product((0, 1), repeat=len(free)):
            d = self.lo.copy()
            for k, c in zip(free, choice):
                if c:
                    d[k] = self.hi[k]
            yield d

    def contains_diagonal(self, d, tol: float = 1e-12) -> bool:
        d = np.asarray(d, dtype=float)
        return bool(np.all(d >= self.lo - tol) and np.all(d <= self.hi + tol))

    def key(self) -> tuple:
        return tuple(self.lo.tolist()) + tuple(self.hi.tolist())


def mean_value_hull(prog: ConvexProgram, x, y) -> HessianHull:
    """Per-coordinate hull of the generalized Hessian over the segment ``[x, y]``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo = np.empty(prog.n)
    hi = np.empty(prog.n)
    for i, c in enumerate(prog.canonical):
        lo[i], hi[i] = segment_hessian_interval(c, float(x[i]), float(y[i]))
    return HessianHull(lo, hi)


def secant_diagonal(prog: ConvexProgram, x, y) -> np.ndarray:
    """Diagonal ``H`` with ``grad f(x) - grad f(y) = H (x - y)``; the Hessian midpoint where x_i == y_i."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    gx, gy = prog.grad_f(x), prog.grad_f(y)
    out = np.empty(prog.n)
    for i, c in enumerate(prog.canonical):
        if x[i] != y[i]:
            out[i] = (gx[i] - gy[i]) / (x[i] - y[i])
        else:
            lo, hi = _hessian_canonical(c, float(x[i]))
            out[i] = 0.5 * (lo + hi)
    return out
