import numpy as np
import pytest
from dataclasses import replace

from saddleflow.dynamics import (
    SPD, SPLD, IntegratorConfig, clip_to_G, integrate, maximizer_normal, read_trajectory_csv,
    reference_saddle, sigma_star, spd_step, spld_step, tangent_project,
)
from saddleflow.errors import DegenerateCone, InfeasibleStart
from saddleflow.lagrangian import LagrangianParams, PrimalDualState, residual
from saddleflow.problem import (
    AffineHalfspace, Quadratic, Quartic, SmoothConvex, UpperBound, as_program, example1, example2,
)

ZERO = as_program((Quadratic(0.0),), [[1.0]], [0.0])
P1 = LagrangianParams(1.0, 0.5)


def e(i, n=4):
    v = np.zeros(n)
    v[i] = 1.0
    return v


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0)
    with pytest.raises(ValueError):
        IntegratorConfig(activity_tol=0)
    with pytest.raises(ValueError):
        IntegratorConfig(record_every=0)


def test_spd_step_scalar():
    s = spd_step(ZERO, P1, PrimalDualState([1.0], [0.0]), IntegratorConfig(dt=0.1))
    assert s.x[0] == pytest.approx(0.8)
    assert s.lam[0] == pytest.approx(0.1)
    assert s.t == pytest.approx(0.1)


def test_spd_step_at_saddle_is_stationary():
    P = example2(6)
    ref = reference_saddle(P)
    s = spd_step(P, P1, PrimalDualState(ref.x_star, ref.lambda_star), IntegratorConfig())
    np.testing.assert_allclose(s.x, ref.x_star, atol=1e-15)
    np.testing.assert_allclose(s.lam, ref.lambda_star, atol=1e-15)


def test_ex1_origin_is_held_by_the_kink():
    # the affine part lies inside [-1, 1], so the least-norm selection is 0 and x stays put
    P = example1(6)
    s = spd_step(P, P1, PrimalDualState(np.zeros(6), np.zeros(6)), IntegratorConfig(dt=0.01))
    np.testing.assert_array_equal(s.x, 0.0)
    np.testing.assert_allclose(s.lam, -0.01 * 0.2)


def test_maximizer_normal_cases():
    ns, v = maximizer_normal([e(1)], e(1))
    np.testing.assert_allclose(ns, e(1))
    assert v == pytest.approx(1.0)
    assert maximizer_normal([e(1)], -e(1)) is None
    xi = (e(0) + e(1)) / np.sqrt(2)
    ns, v = maximizer_normal([e(0), e(1)], xi)
    np.testing.assert_allclose(ns, xi)
    assert v == pytest.approx(1.0)
    with pytest.raises(DegenerateCone):
        maximizer_normal([np.zeros(4)], e(0))


def test_sigma_star_box():
    ns = (e(0) + e(1)) / np.sqrt(2)
    # n*/s = w1 e0 + w2 e1 with w <= 1 needs s >= 1/sqrt(2)
    assert sigma_star([e(0), e(1)], ns) == pytest.approx(1 / np.sqrt(2))


def test_tangent_project_cases():
    P = as_program((Quartic(),) * 4, None, None, tuple(UpperBound(i, 0.5) for i in range(4)))
    x = np.array([0.0, 0.5, 0.1, 0.5])
    xi = np.array([1.0, 2.0, -1.0, -3.0])
    out = tangent_project(P, x, xi, 1e-8)
    np.testing.assert_allclose(out, [1.0, 0.0, -1.0, -3.0])
    np.testing.assert_array_equal(tangent_project(P, np.zeros(4), xi, 1e-8), xi)


def test_tangent_project_halfspace_lands_in_cone(rng):
    c = np.array([1.0, 2.0, -1.0])
    P = as_program((Quartic(),) * 3, None, None, (AffineHalfspace(tuple(c), 1.0), UpperBound(0, 1.0)))
    x = np.array([1.0, 0.25, 0.5])  # both active
    for _ in range(50):
        xi = rng.normal(size=3)
        out = tangent_project(P, x, xi, 1e-8)
        assert out @ c <= 1e-9 and out[0] <= 1e-9


def test_clip_to_G():
    P = as_program((Quartic(),) * 2, None, None, (UpperBound(0, 0.5), AffineHalfspace((1.0, 1.0), 1.0)))
    y = clip_to_G(P, [2.0, 2.0])
    assert np.all(P.g(y) <= 1e-12)
    # projection of (2, 2) onto {x0 <= 0.5, x0 + x1 <= 1} is (0.5, 0.5)
    np.testing.assert_allclose(y, [0.5, 0.5], atol=1e-9)
    ball = SmoothConvex(lambda x: x @ x - 1.0, lambda x: 2 * x, (0, 1))
    Pb = as_program((Quartic(),) * 2, None, None, (ball,))
    assert Pb.g(clip_to_G(Pb, [3.0, 4.0]))[0] <= 1e-12


def test_spld_step_holds_face_and_rejects_infeasible():
    P = example1(6)
    x = np.full(6, 0.5)
    cfg = IntegratorConfig(dt=0.01)
    s = spld_step(P, 0.5, PrimalDualState(x, np.full(6, -5.0)), cfg)
    assert np.all(P.g(s.x) <= 1e-12)
    with pytest.raises(InfeasibleStart):
        spld_step(P, 0.5, PrimalDualState(np.full(6, 0.7), np.zeros(6)), cfg)
    with pytest.raises(InfeasibleStart):
        integrate(P, 0.5, np.full(6, 0.7), np.zeros(6), cfg, SPLD)


def test_constant_trajectory_from_saddle():
    P = example2(5)
    ref = reference_saddle(P)
    tr = integrate(P, P1, ref.x_star, ref.lambda_star, IntegratorConfig(t_end=0.5), SPD, ref)
    assert np.max(np.abs(tr.x - ref.x_star)) < 1e-12


def test_ex2_reference_run():
    P = example2(10)
    ref = reference_saddle(P)
    x0 = np.random.default_rng(0).uniform(0, 1, 10)
    tr = integrate(P, P1, x0, np.zeros(10), IntegratorConfig(t_end=50, record_every=1000), SPD, ref)
    # residual threshold chosen from the contraction rate seen at t=50
    assert tr.residual[-1] < 1e-4
    assert np.all(np.diff(tr.t) > 0)


def test_generic_and_kernel_agree(rng):
    P = example1(6)
    ref = reference_saddle(P)
    x0 = rng.uniform(-1.5, 0.5, 6)
    cfg = IntegratorConfig(t_end=2.0, record_every=50)
    for mode, par in ((SPD, LagrangianParams(2.0, 0.5)), (SPLD, 0.5)):
        a = integrate(P, par, x0, np.zeros(6), cfg, mode, ref)
        b = integrate(P, par, x0, np.zeros(6), replace(cfg, engine="generic"), mode, ref)
        np.testing.assert_allclose(a.x, b.x, atol=1e-12)
        np.testing.assert_allclose(a.V, b.V, atol=1e-12)


def test_generic_step_functions_match_integrate(rng):
    P = example1(5)
    x0 = rng.uniform(-1.5, 0.5, 5)
    cfg = IntegratorConfig(dt=1e-3, t_end=0.05)
    s = PrimalDualState(x0, np.zeros(5))
    for _ in range(50):
        s = spld_step(P, 0.5, s, cfg)
    tr = integrate(P, 0.5, x0, np.zeros(5), cfg, SPLD)
    np.testing.assert_allclose(tr.x[-1], s.x, atol=1e-14)


def test_general_constraints_stay_feasible(rng):
    c = (1.0, 1.0, 0.0)
    P = as_program((Quadratic(1.0),) * 3, [[1.0, -1.0, 1.0]], [2.0], (AffineHalfspace(c, 0.5), UpperBound(2, 0.2)))
    tr = integrate(P, 0.5, [0.0, 0.0, 0.0], [0.0], IntegratorConfig(t_end=200, tol=1e-8, record_every=100), SPLD)
    assert tr.status == "converged"
    assert np.max(tr.max_g) <= 1e-9
    # hand KKT: x_2 sits on its bound, the halfspace is slack, min x0^2 + x1^2 on x0 - x1 = 1.8
    np.testing.assert_allclose(tr.x[-1], [0.9, -0.9, 0.2], atol=1e-7)


def test_snap_kinks_prevents_chatter():
    P = example1(10)
    ref = reference_saddle(P)
    x0 = np.random.default_rng(2).uniform(-1.5, 0.5, 10)
    cfg = IntegratorConfig(t_end=20)
    on = integrate(P, P1, x0, np.zeros(10), cfg, SPD, ref)
    assert np.max(np.diff(on.V)) <= 1e-9


def test_weak_lyapunov_nonincreasing():
    P = example2(10)
    ref = reference_saddle(P)
    x0 = np.random.default_rng(4).uniform(0, 1, 10)
    tr = integrate(P, P1, x0, np.zeros(10), IntegratorConfig(t_end=20), SPD, ref)
    assert np.max(np.diff(tr.weakV)) <= 1e-9


def test_spd_spld_equivalence_box():
    P = example1(6)
    ref = reference_saddle(P)
    x0 = np.random.default_rng(5).uniform(-1.5, 0.5, 6)
    cfg = IntegratorConfig(t_end=30, record_every=100)
    a = integrate(P, 0.5, x0, np.zeros(6), cfg, SPLD, ref)
    b = integrate(P, LagrangianParams(1.0, 0.5), x0, np.zeros(6), cfg, SPD, ref)
    assert np.max(np.abs(a.x - b.x)) <= 10 * cfg.dt


def test_step_consistency():
    P = example2(4)
    x0 = np.array([0.3, 0.9, 0.1, 0.6])
    ends = []
    for dt in (4e-3, 2e-3, 1e-3):
        tr = integrate(P, P1, x0, np.zeros(4), IntegratorConfig(dt=dt, t_end=2.0, record_every=10 ** 6), SPD)
        ends.append(np.concatenate([tr.x[-1], tr.lam[-1]]))
    ratio = np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2])
    assert 1.5 <= ratio <= 2.5


def test_nonfinite_state_returns_partial_error():
    P = as_program((Quartic(),), [[1.0]], [0.0])
    tr = integrate(P, P1, [1e3], [0.0], IntegratorConfig(dt=1.0, t_end=50), SPD)
    assert tr.status == "error"
    assert not np.all(np.isfinite(tr.x[-1]))


def test_csv_roundtrip(tmp_path):
    P = example1(3) if False else example2(3)
    ref = reference_saddle(P)
    tr = integrate(P, P1, [0.1, 0.2, 0.3], np.zeros(3), IntegratorConfig(t_end=0.1, record_every=10), SPD, ref)
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "t,x_1,x_2,x_3,lambda_1,lambda_2,lambda_3,V,weakV,residual,max_g,proj_active"
    cols = read_trajectory_csv(path)
    np.testing.assert_array_equal(cols["x_2"], tr.x[:, 1])
    np.testing.assert_array_equal(cols["V"], tr.V)


def test_converged_status_and_residual():
    P = example1(5)
    tr = integrate(P, 0.5, np.zeros(5), np.zeros(5), IntegratorConfig(t_end=100, tol=1e-7), SPLD)
    assert tr.status == "converged"
    assert residual(P, 0.5, tr.x[-1], tr.lam[-1]) < 2e-7
