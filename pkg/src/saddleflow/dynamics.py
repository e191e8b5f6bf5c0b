"""Forward-Euler discretization of the saddle-point dynamics (SPD) and the
projected saddle-point-like dynamics (SPLD).

Both use the least-norm element of the set-valued field. A step that would
carry a coordinate across a kink of its objective term (or, for SPD, across
an upper bound where the exact penalty kinks) stops at the kink instead, so
sliding motions along kinks are resolved exactly rather than by chattering.

Programs whose inequalities are all single-variable upper bounds run
through the compiled kernel (``kernels``); anything else uses the generic
NumPy path built on :mod:`saddleflow.calculus`.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog, nnls

from . import kernels
from .calculus import kinks
from .errors import DegenerateCone, InfeasibleStart, NonFiniteState
from .lagrangian import (
    LagrangianParams,
    PrimalDualState,
    ReferenceSaddle,
    fit_multipliers,
    x_subdifferential,
)
from .problem import AffineHalfspace, ConvexProgram, UpperBound, numerical_rank

log = logging.getLogger(__name__)

SPD = "spd"
SPLD = "spld"
FEAS_TOL = 1e-12


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    t_end: float = 10.0
    selection: str = "least-norm"
    # relative: a constraint is active when |g_k| <= activity_tol * (1 + max |x_j| over its support)
    activity_tol: float = 1e-8
    record_every: int = 1
    # stop once the residual drops below this; 0 disables
    tol: float = 0.0
    snap_kinks: bool = True
    engine: str = "auto"
    backend: str | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.activity_tol > 0:
            raise ValueError("activity_tol must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.selection != "least-norm":
            raise ValueError("only the least-norm selection is implemented")
        if self.engine not in ("auto", "kernel", "generic"):
            raise ValueError(f"unknown engine {self.engine!r}")

    @property
    def nsteps(self) -> int:
        return max(0, int(round(self.t_end / self.dt)))


@dataclass(eq=False)
class Trajectory:
    mode: str
    t: np.ndarray
    x: np.ndarray
    lam: np.ndarray
    V: np.ndarray
    weakV: np.ndarray
    residual: np.ndarray
    max_g: np.ndarray
    proj_active: np.ndarray
    status: str
    steps: int
    kappa_bound: float = 0.0
    engine: str = "generic"
    params: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def state(self, j: int = -1) -> PrimalDualState:
        return PrimalDualState(self.x[j], self.lam[j], float(self.t[j]))

    @property
    def final(self) -> PrimalDualState:
        return self.state(-1)

    def columns(self) -> list:
        n, p = self.x.shape[1], self.lam.shape[1]
        return (["t"] + [f"x_{i + 1}" for i in range(n)] + [f"lambda_{l + 1}" for l in range(p)]
                + ["V", "weakV", "residual", "max_g", "proj_active"])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns())
            for j in range(len(self.t)):
                row = [self.t[j], *self.x[j], *self.lam[j], self.V[j], self.weakV[j],
                       self.residual[j], self.max_g[j]]
                w.writerow([format(float(v), ".17g") for v in row] + [int(bool(self.proj_active[j]))])


def read_trajectory_csv(path) -> dict:
    """Columns of a trajectory CSV as float arrays keyed by header name."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, len(header)))
    return {name: data[:, k] for k, name in enumerate(header)}


# ---------------------------------------------------------------------------
# cone geometry


def maximizer_normal(active_gradients, xi):
    """Unit normal in ``cone(active_gradients)`` best aligned with ``xi``.

    Returns ``(n_star, value)`` when the supremum is positive, else ``None``.
    Computed as the normalized Euclidean projection of ``xi`` onto the cone.
    """
    xi = np.asarray(xi, dtype=float)
    grads = [np.asarray(g, dtype=float) for g in active_gradients]
    if not grads:
        return None
    for k, g in enumerate(grads):
        if np.linalg.norm(g) <= 1e-14:
            raise DegenerateCone(f"active gradient {k} is numerically zero")
    G = np.column_stack(grads)
    w, _ = nnls(G, xi, maxiter=max(50, 3 * G.shape[1]))
    proj = G @ w
    val = float(np.linalg.norm(proj))
    if val <= 1e-15 * max(1.0, float(np.linalg.norm(xi))):
        return None
    n_star = proj / val
    value = float(xi @ n_star)
    if value <= 0.0:
        return None
    return n_star, value


def sigma_star(active_gradients, n_star) -> float:
    """Smallest ``s`` with ``n_star / s`` in the sum of segments ``[0, grad g_k]``."""
    G = np.column_stack([np.asarray(g, dtype=float) for g in active_gradients])
    k = G.shape[1]
    if k == 1:
        return 1.0 / float(np.linalg.norm(G[:, 0]))
    c = np.r_[np.zeros(k), 1.0]
    A_eq = np.hstack([G, np.zeros((G.shape[0], 1))])
    A_ub = np.hstack([np.eye(k), -np.ones((k, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(k), A_eq=A_eq, b_eq=n_star,
                  bounds=[(0, None)] * (k + 1), method="highs")
    if res.status == 0:
        return float(res.x[-1])
    w, _ = nnls(G, n_star)
    return float(np.max(w))


def activity_eps(prog: ConvexProgram, x, rel: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.array([rel * (1.0 + max(abs(float(x[j])) for j in g.support)) for g in prog.ineqs])


def active_set(prog: ConvexProgram, x, eps_act) -> list:
    if prog.m == 0:
        return []
    eps = np.broadcast_to(np.asarray(eps_act, dtype=float), (prog.m,))
    g = prog.g(x)
    return [k for k in range(prog.m) if abs(g[k]) <= eps[k]]


def _project(prog, x, xi, eps_act):
    act = active_set(prog, x, eps_act)
    if not act:
        return xi, False, None, act
    grads = [prog.ineqs[k].gradient(x) for k in act]
    r = maximizer_normal(grads, xi)
    if r is None:
        return xi, False, None, act
    n_star, value = r
    return xi - max(0.0, value) * n_star, True, (n_star, value, grads), act


def tangent_project(prog: ConvexProgram, x, xi, eps_act) -> np.ndarray:
    """Project ``xi`` onto the (polyhedral approximation of the) tangent cone of G at ``x``."""
    out, _, _, _ = _project(prog, np.asarray(x, dtype=float), np.asarray(xi, dtype=float), eps_act)
    return out


def clip_to_G(prog: ConvexProgram, x, tol: float = 1e-12) -> np.ndarray:
    """Euclidean projection onto the inequality set (exact for bounds and halfspaces)."""
    y = np.array(x, dtype=float)
    if prog.m == 0:
        return y
    lin = [g for g in prog.ineqs if isinstance(g, (UpperBound, AffineHalfspace))]
    other = [g for g in prog.ineqs if not isinstance(g, (UpperBound, AffineHalfspace))]
    if lin and any(g.value(y) > 0.0 for g in lin):
        halfspaces = [g for g in lin if isinstance(g, AffineHalfspace)]
        bounds = [g for g in lin if isinstance(g, UpperBound)]
        if not halfspaces:
            for g in bounds:
                y[g.index] = min(y[g.index], g.u)
        else:
            y = _hildreth(y, [g.gradient(y) for g in lin], [g.gradient(y) @ y - g.value(y) for g in lin])
            for g in lin:
                v = g.value(y)
                if v > 0.0:
                    c = g.gradient(y)
                    y = y - (v / (c @ c)) * (1.0 + 1e-12) * c
            for g in bounds:
                y[g.index] = min(y[g.index], g.u)
    for g in other:
        for _ in range(50):
            v = g.value(y)
            if v <= 0.0:
                break
            d = g.gradient(y)
            y = y - (v / max(float(d @ d), 1e-300)) * (1.0 + 1e-12) * d
    return y


def _hildreth(x, C, d, sweeps: int = 10000, tol: float = 1e-15):
    C = np.asarray(C, dtype=float)
    d = np.asarray(d, dtype=float)
    nrm = np.einsum("ij,ij->i", C, C)
    nu = np.zeros(len(d))
    y = x.copy()
    for _ in range(sweeps):
        change = 0.0
        for k in range(len(d)):
            delta = (C[k] @ y - d[k]) / nrm[k]
            new = max(0.0, nu[k] + delta)
            step = new - nu[k]
            if step != 0.0:
                y -= step * C[k]
                nu[k] = new
                change = max(change, abs(step))
        if change <= tol * (1.0 + np.max(np.abs(y))):
            break
    return y


# ---------------------------------------------------------------------------
# generic single steps


def _snap(prog: ConvexProgram, x, y, include_bounds: bool) -> np.ndarray:
    y = y.copy()
    bounds = {}
    if include_bounds:
        for g in prog.ineqs:
            if isinstance(g, UpperBound):
                bounds.setdefault(g.index, []).append(g.u)
    for i, can in enumerate(prog.canonical):
        pts = list(kinks(can)) + bounds.get(i, [])
        xi = x[i]
        for z in pts:
            if xi < z < y[i] or y[i] < z < xi:
                y[i] = z
    return y


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteState("non-finite state after step")


def _spd_field(prog, params, x, lam):
    s = x_subdifferential(prog, params, x, lam).least_norm()
    h = prog.h(x)
    return s, h


def spd_step(prog: ConvexProgram, params: LagrangianParams, state: PrimalDualState,
             cfg: IntegratorConfig) -> PrimalDualState:
    """One explicit Euler step of the saddle-point dynamics."""
    state.check(prog)
    s, h = _spd_field(prog, params, state.x, state.lam)
    y = state.x - cfg.dt * s
    if cfg.snap_kinks:
        y = _snap(prog, state.x, y, include_bounds=True)
    lam = state.lam + cfg.dt * h
    _check_finite(y, lam)
    return PrimalDualState(y, lam, state.t + cfg.dt)


def _spld_field(prog, mu, x, lam, cfg):
    xi = -x_subdifferential(prog, mu, x, lam).least_norm()
    eps = activity_eps(prog, x, cfg.activity_tol) if prog.m else np.zeros(0)
    v, fired, info, _ = _project(prog, x, xi, eps)
    return v, prog.h(x), fired, info


def spld_step(prog: ConvexProgram, mu, state: PrimalDualState, cfg: IntegratorConfig) -> PrimalDualState:
    """One explicit Euler step of the projected dynamics, followed by an exact return to G."""
    state.check(prog)
    mu = mu.mu if isinstance(mu, LagrangianParams) else float(mu)
    if prog.m and np.max(prog.g(state.x)) > FEAS_TOL:
        raise InfeasibleStart("projected dynamics need g(x) <= 0")
    v, h, _, _ = _spld_field(prog, mu, state.x, state.lam, cfg)
    y = state.x + cfg.dt * v
    if cfg.snap_kinks:
        y = _snap(prog, state.x, y, include_bounds=False)
    y = clip_to_G(prog, y)
    lam = state.lam + cfg.dt * h
    _check_finite(y, lam)
    return PrimalDualState(y, lam, state.t + cfg.dt)


# ---------------------------------------------------------------------------
# full runs


def _normalize_mode(mode) -> str:
    m = str(getattr(mode, "value", mode)).lower()
    if m not in (SPD, SPLD):
        raise ValueError(f"mode must be 'spd' or 'spld', got {mode!r}")
    return m


def kernel_arrays(prog: ConvexProgram) -> dict:
    """Flat arrays describing a box-constrained program for the kernels."""
    rowptr, rowcol, rowval = prog.A.csr()
    colptr, colrow, colval = prog.A.csc()
    can = np.array(prog.canonical, dtype=float).reshape(prog.n, 4)
    per = [[] for _ in range(prog.n)]
    for g in prog.ineqs:
        per[g.index].append(float(g.u))
    bptr = np.zeros(prog.n + 1, dtype=np.intp)
    bptr[1:] = np.cumsum([len(v) for v in per])
    bval = np.array([u for v in per for u in sorted(v)], dtype=float)
    c = np.ascontiguousarray
    return dict(
        rowptr=c(rowptr, dtype=np.intp), rowcol=c(rowcol, dtype=np.intp), rowval=c(rowval),
        colptr=c(colptr, dtype=np.intp), colrow=c(colrow, dtype=np.intp), colval=c(colval),
        b=c(prog.b, dtype=float),
        w1=c(can[:, 0]), w4=c(can[:, 1]), cp=c(can[:, 2]), cm=c(can[:, 3]),
        bptr=bptr, bval=bval,
    )


def _run_kernel(prog, mode, mu, kappa, x0, lam0, cfg, ref):
    arrs = kernel_arrays(prog)
    nsteps = cfg.nsteps
    cap = nsteps // cfg.record_every + 3
    n, p = prog.n, prog.p
    T = np.zeros(cap)
    X = np.zeros((cap, n))
    LAM = np.zeros((cap, p))
    V = np.zeros(cap)
    WV = np.zeros(cap)
    RES = np.zeros(cap)
    MG = np.zeros(cap)
    PA = np.zeros(cap, dtype=np.uint8)
    have_ref = ref is not None and ref.f_star is not None
    xs = np.ascontiguousarray(ref.x_star if have_ref else np.zeros(n), dtype=float)
    ls = np.ascontiguousarray(ref.lambda_star if have_ref else np.zeros(p), dtype=float)
    fstar = float(ref.f_star) if have_ref else 0.0
    backend = cfg.backend or kernels.BACKEND
    run = kernels.get(backend)
    nrec, status, kb, steps = run(
        0 if mode == SPD else 1, float(cfg.dt), int(nsteps), int(cfg.record_every), float(cfg.tol),
        float(cfg.activity_tol), bool(cfg.snap_kinks), float(mu), float(kappa),
        arrs["rowptr"], arrs["rowcol"], arrs["rowval"], arrs["colptr"], arrs["colrow"], arrs["colval"],
        arrs["b"], arrs["w1"], arrs["w4"], arrs["cp"], arrs["cm"], arrs["bptr"], arrs["bval"],
        np.ascontiguousarray(x0, dtype=float), np.ascontiguousarray(lam0, dtype=float),
        have_ref, xs, ls, fstar, T, X, LAM, V, WV, RES, MG, PA,
    )
    status_name = {0: "budget", 1: "converged", 2: "error"}[status]
    return Trajectory(
        mode=mode, t=T[:nrec], x=X[:nrec], lam=LAM[:nrec], V=V[:nrec], weakV=WV[:nrec],
        residual=RES[:nrec], max_g=MG[:nrec], proj_active=PA[:nrec].astype(bool),
        status=status_name, steps=int(steps), kappa_bound=float(kb), engine=f"kernel:{backend}",
    )


def _run_generic(prog, mode, mu, kappa, x0, lam0, cfg, ref):
    params = LagrangianParams(kappa, mu) if mode == SPD and kappa > 0 else mu
    have_ref = ref is not None and ref.f_star is not None
    rows = {k: [] for k in ("t", "x", "lam", "V", "weakV", "residual", "max_g", "proj")}
    x = np.array(x0, dtype=float)
    lam = np.array(lam0, dtype=float)
    nsteps = cfg.nsteps
    status = "budget"
    kb = 0.0
    k = 0
    while True:
        if mode == SPD:
            s, h = _spd_field(prog, params, x, lam)
            vel, fired = -s, False
        else:
            vel, h, fired, info = _spld_field(prog, mu, x, lam, cfg)
            if fired:
                n_star, value, grads = info
                kb = max(kb, sigma_star(grads, n_star) * value)
        res = float(np.sqrt(vel @ vel + h @ h))
        converged = cfg.tol > 0.0 and res < cfg.tol
        last = k == nsteps
        if k % cfg.record_every == 0 or converged or last:
            g = prog.g(x) if prog.m else np.zeros(0)
            rows["t"].append(k * cfg.dt)
            rows["x"].append(x.copy())
            rows["lam"].append(lam.copy())
            rows["residual"].append(res)
            rows["max_g"].append(float(np.max(g)) if prog.m else -np.inf)
            rows["proj"].append(fired)
            if have_ref:
                dx = x - ref.x_star
                dl = lam - ref.lambda_star
                dd = float(dx @ dx + dl @ dl)
                pen = float(np.sum(np.maximum(g, 0.0))) if prog.m else 0.0
                val = prog.f(x) - ref.f_star + h @ h / (2.0 * mu) + lam @ h + kappa * pen + 0.5 * dd
                rows["V"].append(float(val))
                rows["weakV"].append(0.5 * dd)
            else:
                rows["V"].append(np.nan)
                rows["weakV"].append(np.nan)
        if converged:
            status = "converged"
            break
        if last:
            break
        y = x + cfg.dt * vel
        if cfg.snap_kinks:
            y = _snap(prog, x, y, include_bounds=(mode == SPD))
        if mode == SPLD:
            y = clip_to_G(prog, y)
        lam = lam + cfg.dt * h
        x = y
        k += 1
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(lam))):
            status = "error"
            for key, val in (("t", k * cfg.dt), ("x", x), ("lam", lam), ("V", np.nan), ("weakV", np.nan),
                             ("residual", np.nan), ("max_g", np.nan), ("proj", False)):
                rows[key].append(val)
            break
    return Trajectory(
        mode=mode, t=np.array(rows["t"]), x=np.array(rows["x"]).reshape(-1, prog.n),
        lam=np.array(rows["lam"]).reshape(-1, prog.p), V=np.array(rows["V"]),
        weakV=np.array(rows["weakV"]), residual=np.array(rows["residual"]),
        max_g=np.array(rows["max_g"]), proj_active=np.array(rows["proj"], dtype=bool),
        status=status, steps=k, kappa_bound=kb, engine="generic",
    )


def integrate(prog: ConvexProgram, params_or_mu, x0, lambda0, cfg: IntegratorConfig, mode=SPD,
              ref: ReferenceSaddle | None = None) -> Trajectory:
    """Iterate SPD or SPLD steps until ``cfg.t_end`` or until the residual drops below ``cfg.tol``.

    ``params_or_mu`` is a :class:`LagrangianParams`, a ``(kappa, mu)`` pair
    (which admits ``kappa = 0`` for diagnostic SPD runs) or a bare ``mu`` for
    SPLD. With ``ref`` given, the Lyapunov columns are filled.
    A non-finite state ends the run with status ``"error"`` and the partial
    trajectory.
    """
    mode = _normalize_mode(mode)
    if isinstance(params_or_mu, LagrangianParams):
        mu, kappa = params_or_mu.mu, params_or_mu.kappa
    elif isinstance(params_or_mu, tuple):
        kappa, mu = (float(v) for v in params_or_mu)
        if kappa < 0 or not 0 < mu < 1:
            raise ValueError("need kappa >= 0 and mu in (0, 1)")
    else:
        if mode == SPD:
            raise TypeError("SPD needs LagrangianParams (kappa and mu)")
        mu, kappa = float(params_or_mu), 0.0
        if not 0 < mu < 1:
            raise ValueError("mu must lie in (0, 1)")
    if mode == SPLD:
        # the projected dynamics carry no penalty; V is evaluated without it
        kappa = 0.0
    x0 = np.asarray(x0, dtype=float).ravel()
    lambda0 = np.asarray(lambda0, dtype=float).ravel()
    PrimalDualState(x0, lambda0).check(prog)
    if mode == SPLD and prog.m and np.max(prog.g(x0)) > FEAS_TOL:
        raise InfeasibleStart(f"initial point violates inequalities by {np.max(prog.g(x0)):.3e}")
    engine = cfg.engine
    if engine == "auto":
        engine = "kernel" if prog.box_only else "generic"
    if engine == "kernel" and not prog.box_only:
        raise ValueError("kernel engine supports upper-bound inequalities only")
    runner = _run_kernel if engine == "kernel" else _run_generic
    traj = runner(prog, mode, mu, kappa, x0, lambda0, cfg, ref)
    traj.params = {"mu": mu, "kappa": kappa, "dt": cfg.dt, "t_end": cfg.t_end}
    if traj.status == "error":
        log.warning("integration stopped on a non-finite state at t=%g", traj.t[-1])
    return traj


# ---------------------------------------------------------------------------
# reference saddle points


def feasible_start(prog: ConvexProgram) -> np.ndarray:
    if prog.slater_point is not None:
        return np.array(prog.slater_point, dtype=float)
    return clip_to_G(prog, np.zeros(prog.n))


def reference_saddle(prog: ConvexProgram, mu: float = 0.5, tol: float = 1e-11, t_max: float = 2000.0,
                     dt: float = 1e-3, x0=None) -> ReferenceSaddle:
    """A verified primal-dual solution.

    Square nonsingular ``A`` pins ``x*`` analytically; otherwise the projected
    dynamics are run until the residual drops below ``tol``. Multipliers come
    from a least-squares stationarity fit at ``x*``.
    """
    x_star = None
    source = "long-run"
    resid = 0.0
    if prog.p == prog.n and numerical_rank(prog.A.to_dense()) == prog.n:
        cand = np.linalg.solve(prog.A.to_dense(), prog.b)
        if prog.m == 0 or np.max(prog.g(cand)) <= FEAS_TOL:
            x_star = cand
            source = "analytic"
    if x_star is None:
        start = feasible_start(prog) if x0 is None else np.asarray(x0, dtype=float)
        cfg = IntegratorConfig(dt=dt, t_end=t_max, tol=tol, record_every=max(1, int(round(t_max / dt))))
        traj = integrate(prog, mu, start, np.zeros(prog.p), cfg, SPLD)
        x_star = traj.x[-1]
        resid = float(traj.residual[-1])
        if not traj.converged:
            log.warning("reference run stopped at residual %.3e > %.1e", resid, tol)
    fit = fit_multipliers(prog, x_star)
    strictly_convex = all(c.w4 > 0 or (c.cp > 0 and c.cm > 0) for c in prog.canonical)
    return ReferenceSaddle(
        x_star=x_star, lambda_star=fit.lam, f_star=prog.f(x_star), source=source,
        tol=max(resid, fit.residual), approximate=not strictly_convex, nu_star=fit.nu,
    )


def with_engine(cfg: IntegratorConfig, engine: str, backend: str | None = None) -> IntegratorConfig:
    return replace(cfg, engine=engine, backend=backend)
