"""Command-line entry point: ``saddleflow run | compare | bench``.

Exit codes: 0 when the run reached the residual tolerance, 2 when the time
budget ran out first, 1 on any error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import plots
from .bench import format_report, run_benchmark
from .certify import (
    SLACK, auto_kappa, check_envelope, envelope, estimate_kappa, rate_constants,
)
from .dynamics import SPD, SPLD, IntegratorConfig, clip_to_G, integrate, reference_saddle
from .errors import SaddleflowError
from .lagrangian import LagrangianParams
from .network import Graph, check_compatibility, run_distributed
from .problem import BUILTINS, validate_assumptions
from .problemfile import load_problem

log = logging.getLogger("saddleflow")

DEFAULT_RANGES = {"example1": (-1.5, 0.5), "example2": (0.0, 1.0)}
EXIT_OK, EXIT_ERROR, EXIT_BUDGET = 0, 1, 2


@dataclass
class ScenarioConfig:
    builtin: str | None = None
    problem: str | None = None
    n: int = 10
    mode: str = SPD
    mu: float = 0.5
    kappa: str = "auto"
    dt: float = 1e-3
    t_end: float = 100.0
    tol: float = 1e-6
    seed: int = 0
    init_range: tuple | None = None
    out: str = "out"
    record_every: int = 10
    slack: float = SLACK

    def load(self):
        if (self.builtin is None) == (self.problem is None):
            raise SaddleflowError("give exactly one of --builtin or --problem")
        if self.builtin is not None:
            return BUILTINS[self.builtin](self.n)
        return load_problem(self.problem)

    def initial_range(self):
        if self.init_range is not None:
            return self.init_range
        return DEFAULT_RANGES.get(self.builtin, (-1.0, 1.0))

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(dt=self.dt, t_end=self.t_end, tol=self.tol, record_every=self.record_every)


def _range(text: str) -> tuple:
    try:
        a, b = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b, got {text!r}") from None
    if not a < b:
        raise argparse.ArgumentTypeError("init range needs a < b")
    return a, b


def initial_state(prog, cfg: ScenarioConfig):
    """Seeded uniform draw (PCG64) over the configured interval, returned to G when needed."""
    a, b = cfg.initial_range()
    x0 = np.random.default_rng(cfg.seed).uniform(a, b, prog.n)
    if prog.m and np.max(prog.g(x0)) > 0:
        log.info("initial point moved onto the inequality set")
        x0 = clip_to_G(prog, x0)
    return x0, np.zeros(prog.p)


def _kappa(prog, cfg, ref, x0, lam0):
    if cfg.kappa != "auto":
        return float(cfg.kappa)
    if prog.m == 0:
        return 1.0
    pre = integrate(prog, cfg.mu, x0, lam0, cfg.integrator(), SPLD)
    return auto_kappa(prog, ref, pre)


def _write_svgs(out, traj, cert=None, ref=None):
    t = traj.t
    plots.write(os.path.join(out, "states.svg"), plots.line_chart(
        t, list(traj.x.T), title="agent states", ylabel="x_i"))
    if traj.lam.shape[1]:
        plots.write(os.path.join(out, "multipliers.svg"), plots.line_chart(
            t, list(traj.lam.T), title="multipliers", ylabel="lambda_l"))
    if np.all(np.isfinite(traj.weakV)):
        dist = np.sqrt(2.0 * traj.weakV)
        series, labels = [dist], ["dist"]
        if cert is not None:
            series.append(envelope(cert, float(dist[0]), t - t[0]))
            labels.append("envelope")
        plots.write(os.path.join(out, "convergence.svg"), plots.line_chart(
            t, series, title="distance to saddle point", ylabel="dist", log_y=True, labels=labels, dashed=(1,)))


def run_scenario(cfg: ScenarioConfig) -> int:
    prog = cfg.load()
    rep = validate_assumptions(prog)
    if not rep.full_row_rank:
        log.warning("A has rank %d < p = %d", rep.rank, rep.p)
    if rep.slater_holds is False:
        log.warning("given Slater point is not strictly feasible")
    os.makedirs(cfg.out, exist_ok=True)
    x0, lam0 = initial_state(prog, cfg)
    ref = reference_saddle(prog, cfg.mu)
    icfg = cfg.integrator()
    cert = None
    summary = {"mode": cfg.mode, "n": prog.n, "p": prog.p, "m": prog.m}
    if cfg.mode == SPD:
        kappa = _kappa(prog, cfg, ref, x0, lam0)
        summary["kappa"] = kappa
        traj = integrate(prog, LagrangianParams(kappa, cfg.mu), x0, lam0, icfg, SPD, ref)
    elif cfg.mode == SPLD:
        traj = integrate(prog, cfg.mu, x0, lam0, icfg, SPLD, ref)
    else:
        graph = Graph.from_program(prog)
        if not graph.connected:
            log.info("constraint graph has %d components; each runs independently", graph.components)
        traj, stats = run_distributed(prog, graph, cfg.mu, x0, lam0, icfg, ref)
        stats.to_csv(os.path.join(cfg.out, "messages.csv"))
        summary["scalars_per_round"] = int(stats.per_round[0]) if stats.rounds else 0
    traj.to_csv(os.path.join(cfg.out, "trajectory.csv"))
    if cfg.mode == SPD and prog.m == 0 and all(c.w1 == 0 for c in prog.canonical):
        cert = rate_constants(prog, cfg.mu, traj, ref)
        env = check_envelope(traj, ref, cert, cfg.slack)
        cert.to_json(os.path.join(cfg.out, "certificate.json"), cfg.slack, env.passed)
        summary["certificate_pass"] = env.passed
        summary["rate"] = cert.rate
    _write_svgs(cfg.out, traj, cert, ref)
    summary.update(status=traj.status, t=float(traj.t[-1]), residual=float(traj.residual[-1]),
                   max_g=float(np.max(traj.max_g)) if prog.m else None)
    print(json.dumps(summary))
    if traj.status == "converged":
        return EXIT_OK
    return EXIT_BUDGET if traj.status == "budget" else EXIT_ERROR


def compare_modes(cfg: ScenarioConfig) -> dict:
    """SPLD, then SPD with the estimated (or given) penalty; reports both limits and their gap."""
    prog = cfg.load()
    x0, lam0 = initial_state(prog, cfg)
    ref = reference_saddle(prog, cfg.mu)
    icfg = cfg.integrator()
    a = integrate(prog, cfg.mu, x0, lam0, icfg, SPLD, ref)
    kappa = auto_kappa(prog, ref, a) if cfg.kappa == "auto" else float(cfg.kappa)
    b = integrate(prog, (kappa, cfg.mu), x0, lam0, icfg, SPD, ref)
    gap = float(np.max(np.abs(a.x[-1] - b.x[-1])))
    needed = estimate_kappa(prog, ref, a, safety=1.0)
    spd_viol = float(np.max(prog.g(b.x[-1]))) if prog.m else -np.inf
    return {
        "kappa": kappa, "kappa_needed": needed, "gap": gap,
        "spld_limit": a.x[-1].tolist(), "spd_limit": b.x[-1].tolist(),
        "spld_status": a.status, "spd_status": b.status,
        "spd_max_g": spd_viol if prog.m else None,
        "kappa_inexact": bool(prog.m and (kappa < needed or spd_viol > 1e-6)),
    }


def _parser():
    ap = argparse.ArgumentParser(prog="saddleflow", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def scenario(p):
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--builtin", choices=sorted(BUILTINS))
        src.add_argument("--problem", help="JSON problem file")
        p.add_argument("--n", type=int, default=10, help="size of a builtin (default 10)")
        p.add_argument("--mu", type=float, default=0.5)
        p.add_argument("--kappa", default="auto", help="penalty weight or 'auto'")
        p.add_argument("--dt", type=float, default=1e-3)
        p.add_argument("--t-end", type=float, default=100.0)
        p.add_argument("--tol", type=float, default=1e-6, help="stop once the residual is below this")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--init-range", type=_range, default=None, metavar="A:B")
        p.add_argument("--out", default="out")
        p.add_argument("--record-every", type=int, default=10)
        p.add_argument("--slack", type=float, default=SLACK)

    run = sub.add_parser("run", help="integrate one scenario and write its artifacts")
    scenario(run)
    run.add_argument("--mode", choices=(SPD, SPLD, "distributed"), default=SPD)
    cmp_ = sub.add_parser("compare", help="penalized against projected dynamics")
    scenario(cmp_)
    bench = sub.add_parser("bench", help="compiled kernel against the Python fallback")
    bench.add_argument("--builtin", choices=sorted(BUILTINS), default="example1")
    bench.add_argument("--n", type=int, default=10)
    bench.add_argument("--steps", type=int, default=5000)
    bench.add_argument("--repeats", type=int, default=3)
    bench.add_argument("--mode", choices=(SPD, SPLD), default=SPD)
    return ap


def _scenario_from(args) -> ScenarioConfig:
    kappa = args.kappa
    if kappa != "auto":
        try:
            float(kappa)
        except ValueError:
            raise SaddleflowError(f"--kappa must be a number or 'auto', got {kappa!r}") from None
    return ScenarioConfig(
        builtin=args.builtin, problem=args.problem, n=args.n, mode=getattr(args, "mode", SPD),
        mu=args.mu, kappa=kappa, dt=args.dt, t_end=args.t_end, tol=args.tol, seed=args.seed,
        init_range=args.init_range, out=args.out, record_every=args.record_every, slack=args.slack,
    )


def _join_ranges(argv):
    # argparse would read a negative range like "-1.5:0.5" as an option
    out = []
    it = iter(argv)
    for a in it:
        if a == "--init-range":
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = _parser().parse_args(_join_ranges(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.command == "bench":
            print(format_report(run_benchmark(args.builtin, args.n, args.steps, args.repeats, args.mode)))
            return EXIT_OK
        cfg = _scenario_from(args)
        if args.command == "run":
            return run_scenario(cfg)
        report = compare_modes(cfg)
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, "compare.json"), "w") as fh:
            json.dump(report, fh, indent=2)
        print(json.dumps({k: v for k, v in report.items() if not k.endswith("_limit")}))
        return EXIT_OK
    except (SaddleflowError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
