"""Timing of the compiled kernel against the pure-Python fallback."""
from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from . import kernels
from .dynamics import SPD, SPLD, IntegratorConfig, integrate
from .lagrangian import LagrangianParams
from .problem import BUILTINS


def _time(fn, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run_benchmark(builtin: str = "example1", n: int = 10, steps: int = 5000, repeats: int = 3,
                  mode: str = SPD, seed: int = 0) -> dict:
    """Best-of-``repeats`` wall time per backend and whether their outputs agree bit for bit."""
    prog = BUILTINS[builtin](n)
    x0 = np.random.default_rng(seed).uniform(-1.5, 0.5, n)
    if prog.m:
        x0 = np.minimum(x0, [g.u for g in prog.ineqs])
    cfg = IntegratorConfig(dt=1e-3, t_end=steps * 1e-3, record_every=max(1, steps // 100))
    params = LagrangianParams(1.0, 0.5) if mode == SPD else 0.5
    results = {}
    outs = {}
    for name in sorted(kernels.BACKENDS):
        c = replace(cfg, engine="kernel", backend=name)
        sec, tr = _time(lambda: integrate(prog, params, x0, np.zeros(prog.p), c, mode), repeats)
        results[name] = sec
        outs[name] = tr
    report = {"builtin": builtin, "n": n, "steps": steps, "mode": mode, "seconds": results}
    if "compiled" in outs:
        a, b = outs["compiled"], outs["python"]
        report["identical"] = bool(np.array_equal(a.x, b.x) and np.array_equal(a.lam, b.lam)
                                   and np.array_equal(a.residual, b.residual))
        report["speedup"] = results["python"] / results["compiled"]
    return report


def format_report(rep: dict) -> str:
    lines = [f"{rep['builtin']} n={rep['n']} mode={rep['mode']} steps={rep['steps']}"]
    for name, sec in sorted(rep["seconds"].items()):
        lines.append(f"  {name:9s} {sec * 1e3:10.2f} ms  ({sec / rep['steps'] * 1e6:.2f} us/step)")
    if "speedup" in rep:
        lines.append(f"  speedup   {rep['speedup']:.1f}x, identical output: {rep['identical']}")
    return "\n".join(lines)


if __name__ == "__main__":
    for mode in (SPD, SPLD):
        print(format_report(run_benchmark(mode=mode)))
