import os
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from saddleflow import kernels
from saddleflow.bench import format_report, run_benchmark
from saddleflow.dynamics import SPD, SPLD, IntegratorConfig, integrate, reference_saddle
from saddleflow.lagrangian import LagrangianParams
from saddleflow.problem import example1, example2

needs_compiled = pytest.mark.skipif("compiled" not in kernels.BACKENDS, reason="extension not built")


@needs_compiled
@pytest.mark.parametrize("builtin,mode", [(example1, SPD), (example1, SPLD), (example2, SPD), (example2, SPLD)])
def test_backends_bitwise_equal(builtin, mode):
    P = builtin(8)
    ref = reference_saddle(P)
    x0 = np.minimum(np.random.default_rng(11).uniform(-1.5, 0.5, 8), 0.5)
    par = LagrangianParams(1.0, 0.5) if mode == SPD else 0.5
    cfg = IntegratorConfig(t_end=3.0, record_every=7, engine="kernel")
    a = integrate(P, par, x0, np.zeros(8), replace(cfg, backend="compiled"), mode, ref)
    b = integrate(P, par, x0, np.zeros(8), replace(cfg, backend="python"), mode, ref)
    for name in ("t", "x", "lam", "V", "weakV", "residual", "max_g", "proj_active"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name
    assert a.kappa_bound == b.kappa_bound


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get("fortran")


def test_environment_forces_fallback():
    code = "from saddleflow import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, SADDLEFLOW_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_compiled
def test_default_backend_is_compiled_when_available():
    if os.environ.get("SADDLEFLOW_BACKEND", "").lower() == "python":
        pytest.skip("fallback forced by environment")
    assert kernels.BACKEND == "compiled"


def test_benchmark_report():
    rep = run_benchmark(n=6, steps=200, repeats=1)
    assert set(rep["seconds"]) == set(kernels.BACKENDS)
    if "compiled" in rep["seconds"]:
        assert rep["identical"]
    text = format_report(rep)
    assert "us/step" in text and "python" in text
