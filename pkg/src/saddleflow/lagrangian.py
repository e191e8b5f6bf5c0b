"""Augmented Lagrangian, saddle operator, residuals and Lyapunov functions.

    L(x, lam) = f(x) + |h(x)|^2 / (2 mu) + <lam, h(x)> + kappa * sum_k max(0, g_k(x))
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear

from .calculus import MinkowskiSum, Segment, box, canonical_interval
from .errors import DimensionMismatch, MissingReference
from .problem import ConvexProgram, UpperBound


@dataclass(frozen=True)
class LagrangianParams:
    kappa: float
    mu: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if not 0 < self.mu < 1:
            raise ValueError(f"mu must lie in (0, 1), got {self.mu}")


@dataclass(frozen=True, eq=False)
class PrimalDualState:
    x: np.ndarray
    lam: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", np.array(self.x, dtype=float).ravel())
        object.__setattr__(self, "lam", np.array(self.lam, dtype=float).ravel())

    def check(self, prog: ConvexProgram) -> "PrimalDualState":
        if len(self.x) != prog.n or len(self.lam) != prog.p:
            raise DimensionMismatch(
                f"state dims ({len(self.x)}, {len(self.lam)}) do not match program ({prog.n}, {prog.p})"
            )
        return self


@dataclass(frozen=True, eq=False)
class ReferenceSaddle:
    x_star: np.ndarray
    lambda_star: np.ndarray
    f_star: float | None
    source: str = "analytic"
    tol: float = 0.0
    approximate: bool = False
    nu_star: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.source not in ("analytic", "long-run", "external"):
            raise ValueError(f"unknown reference source {self.source!r}")
        object.__setattr__(self, "x_star", np.array(self.x_star, dtype=float).ravel())
        object.__setattr__(self, "lambda_star", np.array(self.lambda_star, dtype=float).ravel())

    def distance(self, x, lam) -> float:
        dx = np.asarray(x, dtype=float) - self.x_star
        dl = np.asarray(lam, dtype=float) - self.lambda_star
        return float(np.sqrt(dx @ dx + dl @ dl))


def _kappa_mu(params):
    if isinstance(params, LagrangianParams):
        return params.kappa, params.mu
    return 0.0, float(params)


def eval_L(prog: ConvexProgram, params: LagrangianParams, x, lam) -> float:
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if len(lam) != prog.p:
        raise DimensionMismatch("lambda has wrong length")
    h = prog.h(x)
    pen = float(np.sum(np.maximum(prog.g(x), 0.0))) if prog.m else 0.0
    return prog.f(x) + h @ h / (2.0 * params.mu) + float(lam @ h) + params.kappa * pen


def affine_part(prog: ConvexProgram, mu: float, x, lam) -> np.ndarray:
    """``A^T (h(x)/mu + lam)``, the smooth coupling term of the x-gradient."""
    h = prog.h(x)
    return prog.A.rmatvec(h / mu + np.asarray(lam, dtype=float))


def x_subdifferential(prog: ConvexProgram, params, x, lam) -> MinkowskiSum:
    """Partial subdifferential of L in x.

    ``params`` may be a :class:`LagrangianParams` or a bare ``mu`` (then the
    penalty is dropped, giving ``-F`` of the projected dynamics).
    Upper-bound penalties are folded into the per-coordinate box exactly;
    other active constraints contribute segments.
    """
    kappa, mu = _kappa_mu(params)
    x = np.asarray(x, dtype=float)
    c = affine_part(prog, mu, x, lam)
    lo = np.empty(prog.n)
    hi = np.empty(prog.n)
    for i, can in enumerate(prog.canonical):
        a, b = canonical_interval(can, float(x[i]))
        lo[i] = c[i] + a
        hi[i] = c[i] + b
    segments = []
    if kappa > 0.0:
        for g in prog.ineqs:
            if isinstance(g, UpperBound):
                xi = x[g.index]
                if xi > g.u:
                    lo[g.index] += kappa
                    hi[g.index] += kappa
                elif xi == g.u:
                    hi[g.index] += kappa
                continue
            val = g.value(x)
            if val > 0.0:
                grad = kappa * g.gradient(x)
                lo += grad
                hi += grad
            elif val == 0.0:
                segments.append(Segment(np.zeros(prog.n), kappa * g.gradient(x)))
    return MinkowskiSum(box(lo, hi), tuple(segments))


def saddle_operator(prog: ConvexProgram, params, x, lam):
    """``(d_x L(x, lam), -d_lam L(x, lam))``: a set in R^n and the vector ``-h(x)``."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if len(x) != prog.n or len(lam) != prog.p:
        raise DimensionMismatch("state dims do not match program")
    return x_subdifferential(prog, params, x, lam), -prog.h(x)


def residual(prog: ConvexProgram, params, x, lam) -> float:
    """Norm of the least-norm element of the saddle operator; zero exactly on saddle points."""
    sx, mh = saddle_operator(prog, params, x, lam)
    s = sx.least_norm()
    return float(np.sqrt(s @ s + mh @ mh))


def lyapunov_V(prog: ConvexProgram, params: LagrangianParams, state, ref: ReferenceSaddle, sap_points=None) -> float:
    """Strict Lyapunov function; distance taken to the nearest listed saddle point."""
    if ref is None or ref.f_star is None:
        raise MissingReference("lyapunov_V needs a reference with f_star")
    points = list(sap_points) if sap_points else [ref]
    x, lam = state.x, state.lam
    dist = min(pt.distance(x, lam) for pt in points)
    return eval_L(prog, params, x, lam) - ref.f_star + 0.5 * dist * dist


def weak_lyapunov(state, ref: ReferenceSaddle) -> float:
    dx = state.x - ref.x_star
    dl = state.lam - ref.lambda_star
    return 0.5 * float(dx @ dx) + 0.5 * float(dl @ dl)


@dataclass(frozen=True, eq=False)
class MultiplierFit:
    lam: np.ndarray
    nu: np.ndarray
    xi: np.ndarray
    residual: float
    active: np.ndarray


def fit_multipliers(prog: ConvexProgram, x, active_tol: float = 1e-9) -> MultiplierFit:
    """Least-squares stationarity fit at a feasible ``x``.

    Finds ``xi`` in the subdifferential of f, free ``lam`` and ``nu >= 0`` on
    the active inequalities minimizing ``|xi + A^T lam + sum nu_k grad g_k|``.
    """
    x = np.asarray(x, dtype=float)
    n, p = prog.n, prog.p
    lo = np.empty(n)
    hi = np.empty(n)
    for i, can in enumerate(prog.canonical):
        lo[i], hi[i] = canonical_interval(can, float(x[i]))
    gvals = prog.g(x) if prog.m else np.zeros(0)
    scale = 1.0 + float(np.max(np.abs(x), initial=0.0))
    active = np.flatnonzero(np.abs(gvals) <= active_tol * scale) if prog.m else np.zeros(0, dtype=int)
    free = np.flatnonzero(hi > lo)
    cols = [np.eye(n)[:, free], prog.A.to_dense().T]
    if len(active):
        cols.append(np.column_stack([prog.ineqs[k].gradient(x) for k in active]))
    M = np.hstack(cols) if sum(c.shape[1] for c in cols) else np.zeros((n, 0))
    lb = np.concatenate([np.zeros(len(free)), np.full(p, -np.inf), np.zeros(len(active))])
    ub = np.concatenate([(hi - lo)[free], np.full(p, np.inf), np.full(len(active), np.inf)])
    rhs = -lo
    if M.shape[1] == 0:
        sol = np.zeros(0)
    else:
        sol = lsq_linear(M, rhs, bounds=(lb, ub), method="bvls", tol=1e-15).x
    xi = lo.copy()
    xi[free] += sol[: len(free)]
    lam = sol[len(free): len(free) + p]
    nu_act = sol[len(free) + p:]
    nu = np.zeros(prog.m)
    nu[active] = nu_act
    r = float(np.linalg.norm(M @ sol - rhs)) if M.shape[1] else float(np.linalg.norm(lo))
    return MultiplierFit(lam, nu, xi, r, active)
