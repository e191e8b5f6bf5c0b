"""Agents on a communication graph running the projected dynamics locally.

Agent ``i`` owns ``x_i`` and its objective term. Equality row ``l`` is owned
by the lowest-index agent with a nonzero entry in it; that agent integrates
``lambda_l``. Each round:

1. every agent sends ``x_i`` to its neighbors;
2. every agent evaluates the residuals of its rows from received states,
   picks the least-norm element of its partial subdifferential and projects
   it against its active bounds (clusters of coupled inequalities are
   handled by their lowest-index member);
3. primal states move, owners step their multipliers and send the new values
   to the other agents in the row.

All reductions run in ascending index order, matching the centralized kernel,
so box-constrained runs reproduce it bit for bit.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .dynamics import FEAS_TOL, IntegratorConfig, Trajectory, clip_to_G, maximizer_normal, sigma_star
from .errors import IncompatibleTopology, InfeasibleStart, LocalityViolation, UncoveredRow
from .lagrangian import LagrangianParams, ReferenceSaddle
from .problem import ConvexProgram, UpperBound

BYTES_PER_SCALAR = 8


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    edges: frozenset

    def __post_init__(self):
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) outside 0..{self.n - 1}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))
        adj = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        object.__setattr__(self, "adjacency", tuple(tuple(sorted(a)) for a in adj))

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def neighbors(self, i: int) -> tuple:
        return self.adjacency[i]  # type: ignore[attr-defined]

    @property
    def components(self) -> int:
        if self.n == 0:
            return 0
        if not self.edges:
            return self.n
        e = np.array(sorted(self.edges))
        M = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(self.n, self.n))
        return int(connected_components(M, directed=False)[0])

    @property
    def connected(self) -> bool:
        return self.components == 1

    @classmethod
    def path(cls, n: int) -> "Graph":
        return cls(n, frozenset((i, i + 1) for i in range(n - 1)))

    @classmethod
    def cycle(cls, n: int) -> "Graph":
        return cls(n, frozenset((i, (i + 1) % n) for i in range(n)) if n > 2 else frozenset())

    @classmethod
    def complete(cls, n: int) -> "Graph":
        return cls(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))

    @classmethod
    def from_program(cls, prog: ConvexProgram) -> "Graph":
        """The smallest graph on which every constraint is a clique."""
        edges = set()
        for sup in _supports(prog):
            for a in sup:
                for b in sup:
                    if a < b:
                        edges.add((a, b))
        return cls(prog.n, frozenset(edges))


def _supports(prog):
    out = [("equality", l, prog.A.row_support(l)) for l in range(prog.p)]
    out += [("inequality", k, tuple(g.support)) for k, g in enumerate(prog.ineqs)]
    return [s for _, _, s in out]


@dataclass(frozen=True)
class CompatibilityReport:
    compatible: bool
    violations: tuple = ()  # (kind, index, missing edges)


def check_compatibility(prog: ConvexProgram, graph: Graph) -> CompatibilityReport:
    """Each constraint's variables must span a complete subgraph."""
    if graph.n != prog.n:
        raise ValueError(f"graph has {graph.n} vertices, program has {prog.n} variables")
    bad = []
    items = [("equality", l, prog.A.row_support(l)) for l in range(prog.p)]
    items += [("inequality", k, tuple(g.support)) for k, g in enumerate(prog.ineqs)]
    for kind, idx, sup in items:
        missing = tuple((a, b) for a in sup for b in sup if a < b and not graph.has_edge(a, b))
        if missing:
            bad.append((kind, idx, missing))
    return CompatibilityReport(not bad, tuple(bad))


def assign_multipliers(prog: ConvexProgram, graph: Graph | None = None) -> dict:
    """Row -> owning agent: the lowest-index agent with a nonzero entry."""
    owners = {}
    for l in range(prog.p):
        sup = prog.A.row_support(l)
        if not sup:
            raise UncoveredRow(f"equality row {l} has no nonzero entry")
        owners[l] = min(sup)
    return owners


@dataclass(eq=False)
class AgentView:
    """Everything agent ``i`` may read; any other access raises :class:`LocalityViolation`."""

    i: int
    term: tuple  # canonical (w1, w4, cp, cm)
    rows: dict  # l -> (((j, a_lj), ...) ascending j, b_l)
    col: tuple  # ((l, a_li), ...) ascending l
    owned: tuple
    bounds: tuple  # sorted upper bounds on x_i
    neighbors: frozenset
    clusters: tuple = ()
    inbox: dict = field(default_factory=dict)
    lam: dict = field(default_factory=dict)
    reads: int = 0

    def state(self, j: int) -> float:
        if j not in self.inbox:
            raise LocalityViolation(f"agent {self.i} read x_{j}, which is outside its view")
        self.reads += 1
        return self.inbox[j]

    def multiplier(self, l: int) -> float:
        if l not in self.rows:
            raise LocalityViolation(f"agent {self.i} read lambda_{l}, which is outside its view")
        return self.lam[l]

    def row(self, l: int):
        if l not in self.rows:
            raise LocalityViolation(f"agent {self.i} read row {l}, which is outside its view")
        return self.rows[l]

    def residual(self, l: int) -> float:
        entries, b_l = self.row(l)
        s = 0.0
        for j, a in entries:
            s += a * self.state(j)
        return s - b_l


def build_views(prog: ConvexProgram, graph: Graph, lam0) -> list:
    owners = assign_multipliers(prog, graph)
    rows_of = [dict() for _ in range(prog.n)]
    col_of = [[] for _ in range(prog.n)]
    for l in range(prog.p):
        entries = prog.A.row_entries(l)
        entries = tuple(sorted((int(j), float(a)) for j, a in zip(*entries)))
        for j, a in entries:
            rows_of[j][l] = (entries, float(prog.b[l]))
            col_of[j].append((l, a))
    bounds = [[] for _ in range(prog.n)]
    for g in prog.ineqs:
        if isinstance(g, UpperBound):
            bounds[g.index].append(float(g.u))
    views = []
    for i in range(prog.n):
        views.append(AgentView(
            i=i, term=tuple(float(v) for v in prog.canonical[i]), rows=rows_of[i],
            col=tuple(sorted(col_of[i])), owned=tuple(l for l, o in owners.items() if o == i),
            bounds=tuple(sorted(bounds[i])), neighbors=frozenset(graph.neighbors(i)),
            lam={l: float(lam0[l]) for l in rows_of[i]},
        ))
    return views


@dataclass
class MessageStats:
    rounds: list = field(default_factory=list)  # (round, scalars_sent)

    def add(self, k: int, scalars: int) -> None:
        self.rounds.append((k, scalars))

    @property
    def per_round(self) -> np.ndarray:
        return np.array([s for _, s in self.rounds], dtype=int)

    @property
    def total(self) -> int:
        return int(sum(s for _, s in self.rounds))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "scalars_sent", "bytes_equiv"])
            for k, s in self.rounds:
                w.writerow([k, s, s * BYTES_PER_SCALAR])


def messages_per_round(prog: ConvexProgram, graph: Graph) -> int:
    """Scalars sent in a round without boundary corrections: states over every
    edge in both directions plus each new multiplier to the other agents of its row."""
    return 2 * len(graph.edges) + sum(len(prog.A.row_support(l)) - 1 for l in range(prog.p))


def _clusters(prog: ConvexProgram):
    """Connected components of the inequalities under shared variables."""
    m = prog.m
    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    owner = {}
    for k, g in enumerate(prog.ineqs):
        for j in g.support:
            if j in owner:
                parent[find(k)] = find(owner[j])
            else:
                owner[j] = k
    groups = {}
    for k in range(m):
        groups.setdefault(find(k), []).append(k)
    out = []
    for ks in groups.values():
        vs = sorted({j for k in ks for j in prog.ineqs[k].support})
        out.append((tuple(sorted(ks)), tuple(vs)))
    return sorted(out, key=lambda c: c[1][0])


def run_distributed(prog: ConvexProgram, graph: Graph, mu, x0, lambda0, cfg: IntegratorConfig,
                    ref: ReferenceSaddle | None = None):
    """Projected dynamics as synchronous per-agent rounds; returns ``(Trajectory, MessageStats)``."""
    mu = mu.mu if isinstance(mu, LagrangianParams) else float(mu)
    rep = check_compatibility(prog, graph)
    if not rep.compatible:
        raise IncompatibleTopology(f"constraints not cliques of the graph: {rep.violations[:3]}")
    x0 = np.asarray(x0, dtype=float).ravel()
    lambda0 = np.asarray(lambda0, dtype=float).ravel()
    if len(x0) != prog.n or len(lambda0) != prog.p:
        raise ValueError("initial state has wrong dimensions")
    if prog.m and np.max(prog.g(x0)) > FEAS_TOL:
        raise InfeasibleStart("distributed projected dynamics need a feasible start")
    views = build_views(prog, graph, lambda0)
    if prog.box_only:
        return _run_box(prog, graph, views, mu, x0, cfg, ref)
    return _run_general(prog, graph, views, mu, x0, cfg, ref)


class _Recorder:
    def __init__(self, n, p):
        self.n, self.p = n, p
        self.cols = {k: [] for k in ("t", "x", "lam", "V", "weakV", "residual", "max_g", "proj")}

    def add(self, t, x, lam, V, WV, res, mg, proj):
        c = self.cols
        c["t"].append(t)
        c["x"].append(list(x))
        c["lam"].append(list(lam))
        c["V"].append(V)
        c["weakV"].append(WV)
        c["residual"].append(res)
        c["max_g"].append(mg)
        c["proj"].append(bool(proj))

    def trajectory(self, status, steps, kb, engine):
        c = self.cols
        return Trajectory(
            mode="spld", t=np.array(c["t"], dtype=float),
            x=np.array(c["x"], dtype=float).reshape(-1, self.n),
            lam=np.array(c["lam"], dtype=float).reshape(-1, self.p),
            V=np.array(c["V"], dtype=float), weakV=np.array(c["weakV"], dtype=float),
            residual=np.array(c["residual"], dtype=float), max_g=np.array(c["max_g"], dtype=float),
            proj_active=np.array(c["proj"], dtype=bool), status=status, steps=steps,
            kappa_bound=kb, engine=engine,
        )


def _exchange(views, x, graph):
    """Round phase 1: every agent sends its state to each neighbor."""
    sent = 0
    for v in views:
        v.inbox = {v.i: x[v.i]}
    for v in views:
        for j in graph.neighbors(v.i):
            views[j].inbox[v.i] = x[v.i]
            sent += 1
    return sent


def _local_field(view: AgentView, inv_mu: float, h_local: dict):
    """Interval of the partial subdifferential at x_i and its least-norm selection."""
    w1, w4, cp, cm = view.term
    c = 0.0
    for l, a in view.col:
        c += a * (h_local[l] * inv_mu + view.multiplier(l))
    xi = view.state(view.i)
    qc = cp if xi >= 0.0 else cm
    d = c + (w4 * xi * xi * xi + qc * xi)
    if xi > 0.0:
        lo = d + w1
        hi = lo
    elif xi < 0.0:
        lo = d - w1
        hi = lo
    else:
        lo = d - w1
        hi = d + w1
    if lo > 0.0:
        return lo
    if hi < 0.0:
        return hi
    return 0.0


def _diagnostics(prog, views, x, lam_owner, h_owner, ref):
    """Recorded columns, summed in the same order as the centralized kernel."""
    n, p = prog.n, prog.p
    mg = -math.inf
    pen = 0.0
    fx = 0.0
    for i in range(n):
        w1, w4, cp, cm = views[i].term
        xi = x[i]
        qc = cp if xi >= 0.0 else cm
        fx += w1 * abs(xi) + 0.25 * w4 * xi * xi * xi * xi + 0.5 * qc * xi * xi
        for u in views[i].bounds:
            gv = xi - u
            if gv > mg:
                mg = gv
            if gv > 0.0:
                pen += gv
    if ref is None:
        return mg, math.nan, math.nan
    hh = 0.0
    lh = 0.0
    dd = 0.0
    for l in range(p):
        hh += h_owner[l] * h_owner[l]
        lh += lam_owner[l] * h_owner[l]
        e = lam_owner[l] - ref.lambda_star[l]
        dd += e * e
    for i in range(n):
        e = x[i] - ref.x_star[i]
        dd += e * e
    return mg, fx, (pen, hh, lh, dd)


def _run_box(prog, graph, views, mu, x0, cfg, ref):
    n, p = prog.n, prog.p
    inv_mu = 1.0 / mu
    half_inv_mu = 0.5 * inv_mu
    dt = cfg.dt
    act_rel = cfg.activity_tol
    nsteps = cfg.nsteps
    have_ref = ref is not None and ref.f_star is not None
    owners = assign_multipliers(prog, graph)
    x = [float(v) for v in x0]
    stats = MessageStats()
    rec = _Recorder(n, p)
    kb = 0.0
    status = "budget"
    k = 0
    while True:
        sent = _exchange(views, x, graph)
        # each agent evaluates the residuals of its own rows from received states
        h_local = [{l: v.residual(l) for l in v.rows} for v in views]
        h = [h_local[owners[l]][l] for l in range(p)]
        vel = [0.0] * n
        proj = 0
        res2 = 0.0
        for v in views:
            sel = _local_field(v, inv_mu, h_local[v.i])
            vi = -sel
            xi = v.state(v.i)
            if vi > 0.0:
                eps = act_rel * (1.0 + abs(xi))
                if any(abs(xi - u) <= eps for u in v.bounds):
                    if vi > kb:
                        kb = vi
                    vi = 0.0
                    proj = 1
            vel[v.i] = vi
            res2 += vi * vi
        for l in range(p):
            res2 += h[l] * h[l]
        res = math.sqrt(res2)
        converged = cfg.tol > 0.0 and res < cfg.tol
        last = k == nsteps
        lam = [views[owners[l]].lam[l] for l in range(p)]
        if k % cfg.record_every == 0 or converged or last:
            mg, fx, parts = _diagnostics(prog, views, x, lam, h, ref if have_ref else None)
            if have_ref:
                pen, hh, lh, dd = parts
                WV = 0.5 * dd
                V = fx - ref.f_star + half_inv_mu * hh + lh + 0.0 * pen + 0.5 * dd
            else:
                V = WV = math.nan
            rec.add(k * dt, x, lam, V, WV, res, mg, proj)
        if converged:
            status = "converged"
            break
        if last:
            break
        finite = True
        xn = [0.0] * n
        for v in views:
            w1 = v.term[0]
            xi = v.state(v.i)
            y = xi + dt * vel[v.i]
            if cfg.snap_kinks:
                if y > xi:
                    if w1 > 0.0 and xi < 0.0 < y:
                        y = 0.0
                elif y < xi:
                    if w1 > 0.0 and y < 0.0 < xi:
                        y = 0.0
            for u in v.bounds:
                if y > u:
                    y = u
            if not math.isfinite(y):
                finite = False
            xn[v.i] = y
        sent += _dual_round(prog, views, h_local, dt)
        for l in range(p):
            if not math.isfinite(views[owners[l]].lam[l]):
                finite = False
        stats.add(k, sent)
        x = xn
        k += 1
        if not finite:
            status = "error"
            lam = [views[owners[l]].lam[l] for l in range(p)]
            rec.add(k * dt, x, lam, math.nan, math.nan, math.nan, math.nan, False)
            break
    return rec.trajectory(status, k, kb, "distributed"), stats


def _dual_round(prog, views, h_local, dt):
    """Owners step their multipliers and send the new value to the rest of the row."""
    sent = 0
    for v in views:
        for l in v.owned:
            v.lam[l] = v.lam[l] + dt * h_local[v.i][l]
            entries, _ = v.row(l)
            for j, _a in entries:
                if j != v.i:
                    views[j].lam[l] = v.lam[l]
                    sent += 1
    return sent


def _run_general(prog, graph, views, mu, x0, cfg, ref):
    """Projected dynamics with arbitrary inequalities, coupled ones solved per cluster by its leader."""
    n, p = prog.n, prog.p
    inv_mu = 1.0 / mu
    dt = cfg.dt
    clusters = _clusters(prog)
    for ks, vs in clusters:
        leader = vs[0]
        far = [j for j in vs[1:] if not graph.has_edge(leader, j)]
        if far:
            raise IncompatibleTopology(
                f"inequality cluster {ks} spans agents {far} not adjacent to its leader {leader}")
    owners = assign_multipliers(prog, graph)
    have_ref = ref is not None and ref.f_star is not None
    x = np.array(x0, dtype=float)
    stats = MessageStats()
    rec = _Recorder(n, p)
    kb = 0.0
    status = "budget"
    k = 0
    while True:
        sent = _exchange(views, list(x), graph)
        h_local = [{l: v.residual(l) for l in v.rows} for v in views]
        h = np.array([h_local[owners[l]][l] for l in range(p)])
        xi_vec = np.array([-_local_field(v, inv_mu, h_local[v.i]) for v in views])
        vel = xi_vec.copy()
        proj = False
        for ks, vs in clusters:
            leader = views[vs[0]]
            xl = np.zeros(n)
            for j in vs:
                xl[j] = leader.state(j)
            act = []
            for kk in ks:
                g = prog.ineqs[kk]
                eps = cfg.activity_tol * (1.0 + max(abs(xl[j]) for j in g.support))
                if abs(g.value(xl)) <= eps:
                    act.append(kk)
            if not act:
                continue
            xi_c = np.zeros(n)
            xi_c[list(vs)] = xi_vec[list(vs)]
            sent += len(vs) - 1
            r = maximizer_normal([prog.ineqs[kk].gradient(xl) for kk in act], xi_c)
            if r is None:
                continue
            n_star, value = r
            kb = max(kb, sigma_star([prog.ineqs[kk].gradient(xl) for kk in act], n_star) * value)
            for j in vs:
                vel[j] = xi_vec[j] - value * n_star[j]
            sent += len(vs) - 1
            proj = True
        res = float(np.sqrt(vel @ vel + h @ h))
        converged = cfg.tol > 0.0 and res < cfg.tol
        last = k == cfg.nsteps
        lam = np.array([views[owners[l]].lam[l] for l in range(p)])
        if k % cfg.record_every == 0 or converged or last:
            g = prog.g(x)
            if have_ref:
                dd = float((x - ref.x_star) @ (x - ref.x_star) + (lam - ref.lambda_star) @ (lam - ref.lambda_star))
                V = prog.f(x) - ref.f_star + h @ h / (2.0 * mu) + lam @ h + 0.5 * dd
                WV = 0.5 * dd
            else:
                V = WV = math.nan
            rec.add(k * dt, x, lam, V, WV, res, float(np.max(g)), proj)
        if converged:
            status = "converged"
            break
        if last:
            break
        y = x + dt * vel
        if cfg.snap_kinks:
            for i, can in enumerate(prog.canonical):
                if can.w1 > 0.0 and (x[i] < 0.0 < y[i] or y[i] < 0.0 < x[i]):
                    y[i] = 0.0
        for ks, vs in clusters:
            sub = ConvexProgram(prog.terms, prog.A, prog.b, tuple(prog.ineqs[kk] for kk in ks))
            if np.max(sub.g(y)) > 0.0:
                y = clip_to_G(sub, y)
                sent += 2 * (len(vs) - 1)
        sent += _dual_round(prog, views, h_local, dt)
        stats.add(k, sent)
        x = y
        k += 1
        lam = np.array([views[owners[l]].lam[l] for l in range(p)])
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(lam))):
            status = "error"
            rec.add(k * dt, x, lam, math.nan, math.nan, math.nan, math.nan, False)
            break
    return rec.trajectory(status, k, kb, "distributed"), stats
