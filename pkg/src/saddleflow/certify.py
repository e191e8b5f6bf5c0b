"""Positive-definiteness certificates and exponential-rate constants.

For an equality-constrained program with C^{1,1} objective, the distance of
the SPD state to the saddle point obeys

    dist(t) <= sqrt(vartheta / lambda_min(P)) * dist(0) * exp(-(eta / vartheta) t)

where ``eta`` bounds ``lambda_min(Q(H))`` from below and ``vartheta`` bounds
``lambda_max(R(H))`` from above over the diagonal mean-value Hessians ``H``
met along the run.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import eigh

from .calculus import HessianHull, mean_value_hull
from .errors import InequalityPresent, MissingReference, NotC11, NotPositiveDefinite
from .lagrangian import ReferenceSaddle, fit_multipliers
from .problem import ConvexProgram, SparseMatrix

SAFETY = 1.5
SLACK = 1.05
MAX_CORNER_DIM = 12
KAPPA_FLOOR = 1e-6


def _dense(A) -> np.ndarray:
    if isinstance(A, SparseMatrix):
        return A.to_dense()
    return np.atleast_2d(np.asarray(A, dtype=float))


def _eig_extremes(M):
    w = eigh(M, eigvals_only=True)
    return float(w[0]), float(w[-1])


def matrix_P(A, mu: float):
    """``[[A^T A / mu + I, A^T], [A, I]]`` and its smallest eigenvalue."""
    if not 0 < mu <= 1:
        raise ValueError("mu must lie in (0, 1]")
    A = _dense(A)
    p, n = A.shape
    AtA = A.T @ A
    P = np.block([[AtA / mu + np.eye(n), A.T], [A, np.eye(p)]])
    lmin, _ = _eig_extremes(P)
    if lmin <= 0:
        raise NotPositiveDefinite(f"lambda_min(P) = {lmin:.3e}")
    return P, lmin


def _diag(H, n):
    H = np.asarray(H, dtype=float)
    if H.ndim == 2:
        H = np.diag(H).copy()
    if H.shape != (n,):
        raise ValueError(f"H must be a diagonal of length {n}")
    return H


def _Q(A, AtA, AAt, mu, h):
    n = len(h)
    M = AtA / mu
    M[np.diag_indices(n)] += h
    Q11 = M.T @ M + (1.0 / mu - 1.0) * AtA
    Q11[np.diag_indices(n)] += h
    Q21 = A @ M
    return np.block([[Q11, Q21.T], [Q21, AAt]])


def _R(A, AtA, mu, h):
    n, p = len(h), A.shape[0]
    R11 = AtA / mu
    R11[np.diag_indices(n)] += 2.0 * h + 1.0
    return np.block([[R11, A.T], [A, np.eye(p)]])


def matrix_Q(A, mu: float, H):
    """Lower-bound matrix of the Lyapunov derivative for the diagonal Hessian ``H``."""
    A = _dense(A)
    h = _diag(H, A.shape[1])
    Q = _Q(A, A.T @ A, A @ A.T, mu, h)
    lmin, _ = _eig_extremes(Q)
    if lmin <= 0:
        raise NotPositiveDefinite(f"lambda_min(Q) = {lmin:.3e}")
    return Q, lmin


def matrix_R(A, mu: float, H):
    """Upper-bound matrix of the Lyapunov function for the diagonal Hessian ``H``."""
    A = _dense(A)
    h = _diag(H, A.shape[1])
    R = _R(A, A.T @ A, mu, h)
    _, lmax = _eig_extremes(R)
    return R, lmax


def projection_matrix(A) -> np.ndarray:
    """``I - A^T (A A^T)^{-1} A``, the orthogonal projector onto ker A."""
    A = _dense(A)
    return np.eye(A.shape[1]) - A.T @ np.linalg.solve(A @ A.T, A)


def idempotency_error(M) -> float:
    return float(np.max(np.abs(M @ M - M)))


@dataclass(frozen=True)
class RateCertificate:
    lambda_min_P: float
    eta: float
    vartheta: float
    envelope_coeff: float
    rate: float
    sample_count: int
    exhaustive: bool = True

    def __post_init__(self):
        for name in ("lambda_min_P", "eta", "vartheta", "envelope_coeff", "rate"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise NotPositiveDefinite(f"certificate field {name} = {v!r} is not finite and positive")

    def to_dict(self, slack: float = SLACK, passed: bool | None = None) -> dict:
        d = asdict(self)
        d["slack"] = slack
        d["pass"] = passed
        return d

    def to_json(self, path, slack: float = SLACK, passed: bool | None = None) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(slack, passed), fh, indent=2)


class _Sweeper:
    def __init__(self, A, mu):
        self.A = A
        self.AtA = A.T @ A
        self.AAt = A @ A.T
        self.mu = mu
        self.cache = {}

    def q_min(self, h):
        return _eig_extremes(_Q(self.A, self.AtA, self.AAt, self.mu, h))[0]

    def r_max(self, h):
        return _eig_extremes(_R(self.A, self.AtA, self.mu, h))[1]

    def hull(self, hull: HessianHull):
        """``(min lambda_min(Q), max lambda_max(R), exhaustive)`` over the hull."""
        key = hull.key()
        if key in self.cache:
            return self.cache[key]
        free = hull.free
        if len(free) <= MAX_CORNER_DIM:
            qs, rs = [], []
            for d in hull.corners():
                qs.append(self.q_min(d))
                rs.append(self.r_max(d))
            out = (min(qs), max(rs), True)
        else:
            out = self._coordinate_sweep(hull, free)
        self.cache[key] = out
        return out

    def _coordinate_sweep(self, hull, free):
        mid = hull.midpoint()
        qmin, rmax = self.q_min(mid), self.r_max(mid)
        q_end = {}
        r_end = {}
        for k in free:
            for side, val in (("lo", hull.lo[k]), ("hi", hull.hi[k])):
                d = mid.copy()
                d[k] = val
                q, r = self.q_min(d), self.r_max(d)
                q_end[k, side] = q
                r_end[k, side] = r
                qmin, rmax = min(qmin, q), max(rmax, r)
        # combine the per-coordinate worst endpoints
        dq = mid.copy()
        dr = mid.copy()
        for k in free:
            dq[k] = hull.lo[k] if q_end[k, "lo"] <= q_end[k, "hi"] else hull.hi[k]
            dr[k] = hull.lo[k] if r_end[k, "lo"] >= r_end[k, "hi"] else hull.hi[k]
        qmin = min(qmin, self.q_min(dq), self.q_min(hull.lo), self.q_min(hull.hi))
        rmax = max(rmax, self.r_max(dr), self.r_max(hull.lo), self.r_max(hull.hi))
        return qmin, rmax, False


def rate_constants(prog: ConvexProgram, mu: float, trajectory=None, ref: ReferenceSaddle | None = None
                   ) -> RateCertificate:
    """Rate constants restricted to the Hessian hulls met along ``trajectory``.

    Without a trajectory only the Hessian hull at ``x*`` itself is used.
    """
    if prog.m > 0:
        raise InequalityPresent("rate certificates cover equality-constrained programs only")
    if ref is None:
        raise MissingReference("rate_constants needs the saddle point")
    bad = [i for i, c in enumerate(prog.canonical) if c.w1 > 0]
    if bad:
        raise NotC11(f"objective terms {bad[:5]} are not C^1,1")
    A = prog.A.to_dense()
    _, lmin_P = matrix_P(A, mu)
    sw = _Sweeper(A, mu)
    xs = ref.x_star
    samples = [xs] if trajectory is None else list(trajectory.x)
    eta, vartheta, exhaustive = math.inf, 0.0, True
    for x in samples:
        q, r, ex = sw.hull(mean_value_hull(prog, x, xs))
        eta = min(eta, q)
        vartheta = max(vartheta, r)
        exhaustive = exhaustive and ex
    if eta <= 0:
        raise NotPositiveDefinite(f"eta = {eta:.3e}")
    return RateCertificate(
        lambda_min_P=lmin_P, eta=eta, vartheta=vartheta,
        envelope_coeff=math.sqrt(vartheta / lmin_P), rate=eta / vartheta,
        sample_count=len(samples), exhaustive=exhaustive,
    )


@dataclass(frozen=True)
class EnvelopeReport:
    passed: bool
    max_ratio: float
    worst_time: float
    dist: np.ndarray
    bound: np.ndarray
    slack: float


def envelope(cert: RateCertificate, dist0: float, t) -> np.ndarray:
    return cert.envelope_coeff * dist0 * np.exp(-cert.rate * np.asarray(t, dtype=float))


def check_envelope(trajectory, ref: ReferenceSaddle, cert: RateCertificate, slack: float = SLACK) -> EnvelopeReport:
    """Compare the distance to ``ref`` at each sample with the certified envelope."""
    dist = np.array([ref.distance(x, l) for x, l in zip(trajectory.x, trajectory.lam)])
    t = np.asarray(trajectory.t, dtype=float) - float(trajectory.t[0])
    bound = slack * envelope(cert, float(dist[0]), t)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, dist / bound, np.where(dist > 0, np.inf, 0.0))
    j = int(np.argmax(ratio))
    return EnvelopeReport(
        passed=bool(np.all(dist <= bound)), max_ratio=float(ratio[j]),
        worst_time=float(trajectory.t[j]), dist=dist, bound=bound, slack=slack,
    )


def estimate_kappa(prog: ConvexProgram, ref: ReferenceSaddle | None, trajectory=None,
                   safety: float = SAFETY) -> float:
    """Penalty weight large enough for exactness, times ``safety``.

    The larger of the fitted inequality multipliers at ``x*`` and the
    boundary bound recorded by a projected-dynamics ``trajectory``.
    """
    if ref is None:
        raise MissingReference("estimate_kappa needs a reference saddle point")
    if prog.m == 0:
        return 0.0
    nu = fit_multipliers(prog, ref.x_star).nu
    val = float(np.max(nu, initial=0.0))
    if trajectory is not None:
        val = max(val, float(trajectory.kappa_bound))
    return safety * val


def auto_kappa(prog: ConvexProgram, ref: ReferenceSaddle, trajectory=None) -> float:
    """:func:`estimate_kappa` floored to a small positive value, usable as an SPD parameter."""
    return max(estimate_kappa(prog, ref, trajectory), KAPPA_FLOOR)
