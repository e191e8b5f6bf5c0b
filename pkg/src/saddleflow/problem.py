"""Convex programs with separable objective, affine equalities and convex inequalities.

A program is

    minimize   sum_i f_i(x_i)
    subject to A x = b,  g_k(x) <= 0  (k = 1..m)

Every catalog objective term reduces to the four-parameter family

    w1 |x| + w4 x^4 / 4 + (c_plus x^2 / 2 if x >= 0 else c_minus x^2 / 2)

(see :class:`Canonical`), which is what the integration kernels consume.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, InvalidSize


class Canonical(NamedTuple):
    """Coefficients of ``w1|x| + w4 x^4/4 + c x^2/2`` with ``c = cp`` for x >= 0, ``cm`` below."""

    w1: float
    w4: float
    cp: float
    cm: float

    def __add__(self, other):  # type: ignore[override]
        return Canonical(*(a + b for a, b in zip(self, other)))

    def scaled(self, s: float) -> "Canonical":
        return Canonical(*(s * a for a in self))


# ---------------------------------------------------------------------------
# objective terms


class ObjectiveTerm:
    """A convex scalar function of one agent variable."""

    def value(self, x: float) -> float:
        raise NotImplementedError

    def canonical(self) -> Canonical:
        raise NotImplementedError

    @property
    def is_c11(self) -> bool:
        return self.canonical().w1 == 0.0


@dataclass(frozen=True)
class Quadratic(ObjectiveTerm):
    """``a x^2 / 2``."""

    a: float

    def __post_init__(self):
        if not self.a >= 0:
            raise ValueError(f"Quadratic requires a >= 0, got {self.a}")

    def value(self, x):
        return 0.5 * self.a * x * x

    def canonical(self):
        return Canonical(0.0, 0.0, float(self.a), float(self.a))


@dataclass(frozen=True)
class Quartic(ObjectiveTerm):
    """``x^4 / 4``."""

    def value(self, x):
        return 0.25 * x**4

    def canonical(self):
        return Canonical(0.0, 1.0, 0.0, 0.0)


@dataclass(frozen=True)
class AbsValue(ObjectiveTerm):
    """``w |x|``."""

    w: float = 1.0

    def __post_init__(self):
        if not self.w >= 0:
            raise ValueError(f"AbsValue requires w >= 0, got {self.w}")

    def value(self, x):
        return self.w * abs(x)

    def canonical(self):
        return Canonical(float(self.w), 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PiecewiseQuadratic(ObjectiveTerm):
    """``c_plus x^2/2`` for x >= 0 and ``c_minus x^2/2`` for x < 0."""

    c_plus: float
    c_minus: float

    def __post_init__(self):
        if not (self.c_plus > 0 and self.c_minus > 0):
            raise ValueError("PiecewiseQuadratic requires c_plus, c_minus > 0")

    def value(self, x):
        c = self.c_plus if x >= 0 else self.c_minus
        return 0.5 * c * x * x

    def canonical(self):
        return Canonical(0.0, 0.0, float(self.c_plus), float(self.c_minus))


@dataclass(frozen=True)
class LinearCombination(ObjectiveTerm):
    """Non-negatively weighted sum of catalog terms (weights default to 1)."""

    terms: tuple
    weights: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValueError("LinearCombination needs at least one term")
        w = (1.0,) * len(self.terms) if self.weights is None else tuple(float(v) for v in self.weights)
        if len(w) != len(self.terms):
            raise DimensionMismatch("weights and terms differ in length")
        if any(v < 0 for v in w):
            raise ValueError("LinearCombination weights must be >= 0 to stay convex")
        object.__setattr__(self, "weights", w)

    def value(self, x):
        return sum(w * t.value(x) for w, t in zip(self.weights, self.terms))

    def canonical(self):
        out = Canonical(0.0, 0.0, 0.0, 0.0)
        for w, t in zip(self.weights, self.terms):
            out = out + t.canonical().scaled(w)
        return out


def canonical_value(c: Canonical, x: float) -> float:
    q = c.cp if x >= 0.0 else c.cm
    return c.w1 * abs(x) + 0.25 * c.w4 * x * x * x * x + 0.5 * q * x * x


# ---------------------------------------------------------------------------
# inequality constraints


class InequalityConstraint:
    """Convex ``g_k(x) <= 0``."""

    support: tuple

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class UpperBound(InequalityConstraint):
    """``x_i <= u``."""

    index: int
    u: float

    @property
    def support(self):
        return (int(self.index),)

    def value(self, x):
        return float(x[self.index] - self.u)

    def gradient(self, x):
        e = np.zeros(len(x))
        e[self.index] = 1.0
        return e


@dataclass(frozen=True)
class AffineHalfspace(InequalityConstraint):
    """``<c, x> <= d``."""

    c: tuple
    d: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.asarray(self.c, dtype=float).ravel())
        object.__setattr__(self, "c", c)
        if not any(c):
            raise ValueError("AffineHalfspace needs a nonzero normal")

    @property
    def support(self):
        return tuple(i for i, v in enumerate(self.c) if v != 0.0)

    def value(self, x):
        return float(np.dot(self.c, x) - self.d)

    def gradient(self, x):
        return np.array(self.c, dtype=float)


@dataclass(frozen=True)
class SmoothConvex(InequalityConstraint):
    """User-supplied smooth convex ``g`` with gradient oracle.

    ``support`` lists the variables ``g`` depends on; the caller vouches for
    convexity.
    """

    func: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    support: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(int(i) for i in self.support))
        if not self.support:
            raise ValueError("SmoothConvex needs a nonempty support set")

    def value(self, x):
        return float(self.func(np.asarray(x, dtype=float)))

    def gradient(self, x):
        return np.asarray(self.grad(np.asarray(x, dtype=float)), dtype=float)


# ---------------------------------------------------------------------------
# sparse matrices


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Coordinate triplets in canonical row-major order, duplicates summed, zeros dropped."""

    shape: tuple
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @classmethod
    def from_triplets(cls, shape, rows, cols, vals) -> "SparseMatrix":
        p, n = (int(s) for s in shape)
        rows = np.asarray(rows, dtype=np.intp).ravel()
        cols = np.asarray(cols, dtype=np.intp).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        if not (len(rows) == len(cols) == len(vals)):
            raise DimensionMismatch("triplet arrays differ in length")
        if len(rows) and (rows.min() < 0 or rows.max() >= p or cols.min() < 0 or cols.max() >= n):
            raise DimensionMismatch(f"triplet index outside shape {(p, n)}")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows):
            key = rows * n + cols
            start = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
            vals = np.add.reduceat(vals, start)
            rows, cols = rows[start], cols[start]
        keep = vals != 0.0
        out = cls((p, n), rows[keep], cols[keep], vals[keep])
        for a in (out.rows, out.cols, out.vals):
            a.setflags(write=False)
        return out

    @classmethod
    def from_dense(cls, M) -> "SparseMatrix":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        r, c = np.nonzero(M)
        return cls.from_triplets(M.shape, r, c, M[r, c])

    @property
    def nnz(self) -> int:
        return len(self.vals)

    def to_dense(self) -> np.ndarray:
        M = np.zeros(self.shape)
        M[self.rows, self.cols] = self.vals
        return M

    def matvec(self, x):
        out = np.zeros(self.shape[0])
        np.add.at(out, self.rows, self.vals * np.asarray(x, dtype=float)[self.cols])
        return out

    def rmatvec(self, y):
        out = np.zeros(self.shape[1])
        np.add.at(out, self.cols, self.vals * np.asarray(y, dtype=float)[self.rows])
        return out

    def csr(self):
        """``(indptr, indices, data)`` with rows ascending and columns ascending within a row."""
        indptr = np.zeros(self.shape[0] + 1, dtype=np.intp)
        np.add.at(indptr, self.rows + 1, 1)
        return np.cumsum(indptr), self.cols.copy(), self.vals.copy()

    def csc(self):
        """``(indptr, indices, data)`` with columns ascending and rows ascending within a column."""
        order = np.lexsort((self.rows, self.cols))
        indptr = np.zeros(self.shape[1] + 1, dtype=np.intp)
        np.add.at(indptr, self.cols + 1, 1)
        return np.cumsum(indptr), self.rows[order].copy(), self.vals[order].copy()

    def row_entries(self, l: int):
        sel = self.rows == l
        return self.cols[sel], self.vals[sel]

    def row_support(self, l: int) -> tuple:
        return tuple(int(j) for j in self.cols[self.rows == l])

    def col_support(self, i: int) -> tuple:
        return tuple(int(l) for l in np.sort(self.rows[self.cols == i]))


def generate_circulant(n: int, a0: float, a1: float, a2: float) -> SparseMatrix:
    """Tridiagonal circulant ``circ_n(a0, a1, a2)``: a0 on the diagonal, a1 above, a2 below, wrapped."""
    if n < 3:
        raise InvalidSize(f"circulant needs n >= 3, got {n}")
    i = np.arange(n)
    rows = np.concatenate([i, i, i])
    cols = np.concatenate([i, (i + 1) % n, (i - 1) % n])
    vals = np.concatenate([np.full(n, a0), np.full(n, a1), np.full(n, a2)]).astype(float)
    return SparseMatrix.from_triplets((n, n), rows, cols, vals)


def generate_tridiag_toeplitz(n: int, a: float, b: float, c: float) -> SparseMatrix:
    """Tridiagonal Toeplitz ``trid_n(a, b, c)``: a below, b on, c above the diagonal."""
    if n < 2:
        raise InvalidSize(f"tridiagonal Toeplitz needs n >= 2, got {n}")
    i = np.arange(n)
    j = np.arange(n - 1)
    rows = np.concatenate([i, j, j + 1])
    cols = np.concatenate([i, j + 1, j])
    vals = np.concatenate([np.full(n, b), np.full(n - 1, c), np.full(n - 1, a)]).astype(float)
    return SparseMatrix.from_triplets((n, n), rows, cols, vals)


# ---------------------------------------------------------------------------
# the program


@dataclass(frozen=True, eq=False)
class ConvexProgram:
    terms: tuple
    A: SparseMatrix
    b: np.ndarray
    ineqs: tuple = ()
    slater_point: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "ineqs", tuple(self.ineqs))
        b = np.array(self.b, dtype=float).ravel()
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        n = len(self.terms)
        if n == 0:
            raise DimensionMismatch("program needs at least one variable")
        if self.A.shape[1] != n:
            raise DimensionMismatch(f"A has {self.A.shape[1]} columns, program has {n} terms")
        if self.A.shape[0] != len(b):
            raise DimensionMismatch(f"A has {self.A.shape[0]} rows, b has {len(b)} entries")
        for t in self.terms:
            if not isinstance(t, ObjectiveTerm):
                raise TypeError(f"not an objective term: {t!r}")
        for g in self.ineqs:
            if not g.support or max(g.support) >= n:
                raise DimensionMismatch(f"constraint {g!r} has support outside 0..{n - 1}")
        if self.slater_point is not None:
            s = np.array(self.slater_point, dtype=float).ravel()
            if len(s) != n:
                raise DimensionMismatch("slater_point has wrong length")
            s.setflags(write=False)
            object.__setattr__(self, "slater_point", s)
        canon = tuple(t.canonical() for t in self.terms)
        object.__setattr__(self, "_canon", canon)

    @property
    def n(self) -> int:
        return len(self.terms)

    @property
    def p(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return len(self.ineqs)

    @property
    def canonical(self) -> tuple:
        return self._canon  # type: ignore[attr-defined]

    @property
    def box_only(self) -> bool:
        """True when every inequality is a single-variable upper bound."""
        return all(isinstance(g, UpperBound) for g in self.ineqs)

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if len(x) != self.n:
            raise DimensionMismatch(f"x has length {len(x)}, expected {self.n}")
        return x

    def f(self, x) -> float:
        x = self._check_x(x)
        return float(sum(t.value(float(xi)) for t, xi in zip(self.terms, x)))

    def h(self, x) -> np.ndarray:
        return self.A.matvec(self._check_x(x)) - self.b

    def g(self, x) -> np.ndarray:
        x = self._check_x(x)
        return np.array([gk.value(x) for gk in self.ineqs], dtype=float)

    def grad_f(self, x) -> np.ndarray:
        """Gradient of a C^1 objective (kinks resolved as 0, the least-norm choice)."""
        x = self._check_x(x)
        out = np.empty(self.n)
        for i, (c, xi) in enumerate(zip(self.canonical, x)):
            q = c.cp if xi >= 0.0 else c.cm
            s = np.sign(xi) * c.w1
            out[i] = s + c.w4 * xi * xi * xi + q * xi
        return out

    def inequality_set_contains(self, x, tol: float = 0.0) -> bool:
        return self.m == 0 or bool(np.all(self.g(x) <= tol))


def eval_f(prog: ConvexProgram, x) -> float:
    return prog.f(x)


def eval_h(prog: ConvexProgram, x) -> np.ndarray:
    return prog.h(x)


def eval_g(prog: ConvexProgram, x) -> np.ndarray:
    return prog.g(x)


# ---------------------------------------------------------------------------
# standing assumptions


@dataclass(frozen=True)
class AssumptionReport:
    rank: int
    p: int
    n: int
    full_row_rank: bool
    slater_given: bool
    slater_holds: bool | None
    slater_h_residual: float | None
    slater_max_g: float | None
    notes: tuple = ()

    @property
    def ok(self) -> bool:
        return self.full_row_rank and self.slater_holds is not False


def numerical_rank(M: np.ndarray, rank_tol: float = 1e-10) -> int:
    """Rank from column-pivoted QR, thresholded at ``rank_tol`` times the largest column norm."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    _, R, _ = scipy.linalg.qr(M, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0.0:
        return 0
    return int(np.sum(d > rank_tol * d[0]))


def validate_assumptions(prog: ConvexProgram, rank_tol: float = 1e-10, feas_tol: float = 1e-9) -> AssumptionReport:
    """Check full row rank of A and, when a Slater point is given, strict feasibility."""
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    if prog.A.shape != (len(prog.b), prog.n):
        raise DimensionMismatch("A, b, n inconsistent")
    notes = []
    rank = numerical_rank(prog.A.to_dense(), rank_tol) if prog.p else 0
    if prog.p > prog.n:
        notes.append("p > n: equality rows cannot be independent")
    notes.append("boundedness of the solution set is assumed, not verified")
    if prog.slater_point is None:
        return AssumptionReport(rank, prog.p, prog.n, rank == prog.p, False, None, None, None, tuple(notes))
    s = prog.slater_point
    hres = float(np.max(np.abs(prog.h(s)))) if prog.p else 0.0
    gmax = float(np.max(prog.g(s))) if prog.m else -np.inf
    holds = hres <= feas_tol * (1.0 + float(np.max(np.abs(prog.b), initial=0.0))) and gmax < 0.0
    return AssumptionReport(rank, prog.p, prog.n, rank == prog.p, True, bool(holds), hres, gmax, tuple(notes))


# ---------------------------------------------------------------------------
# the two network examples


def example1(n: int = 50) -> ConvexProgram:
    """``sum x_i^4/4 + |x_i|`` s.t. ``circ_n(0,1,1/2) x = 1/5``, ``x_i <= 1/2``."""
    term = LinearCombination((Quartic(), AbsValue(1.0)))
    A = generate_circulant(n, 0.0, 1.0, 0.5)
    # rows of circ_n(0,1,1/2) sum to 3/2, so the uniform feasible point is 2/15
    return ConvexProgram(
        terms=(term,) * n,
        A=A,
        b=np.full(n, 0.2),
        ineqs=tuple(UpperBound(i, 0.5) for i in range(n)),
        slater_point=np.full(n, 2.0 / 15.0),
    )


def example2(n: int = 50) -> ConvexProgram:
    """Piecewise quadratic ``f_i`` (x^2 above zero, x^2/2 below) s.t. ``trid_n(1/2,1,-1/10) x = 1``."""
    A = generate_tridiag_toeplitz(n, 0.5, 1.0, -0.1)
    return ConvexProgram(terms=(PiecewiseQuadratic(2.0, 1.0),) * n, A=A, b=np.ones(n))


BUILTINS = {"example1": example1, "example2": example2}


def constraint_supports(prog: ConvexProgram) -> list:
    """Variable index sets of every equality row followed by every inequality."""
    out = [prog.A.row_support(l) for l in range(prog.p)]
    out.extend(tuple(sorted(g.support)) for g in prog.ineqs)
    return out


def as_program(terms: Sequence[ObjectiveTerm], A, b, ineqs=(), slater_point=None) -> ConvexProgram:
    """Convenience constructor accepting a dense or sparse ``A`` (``None`` for no equalities)."""
    n = len(terms)
    if A is None:
        A = SparseMatrix.from_triplets((0, n), [], [], [])
        b = np.zeros(0)
    elif not isinstance(A, SparseMatrix):
        A = SparseMatrix.from_dense(np.asarray(A, dtype=float).reshape(-1, n))
    return ConvexProgram(tuple(terms), A, np.asarray(b, dtype=float), tuple(ineqs), slater_point)
