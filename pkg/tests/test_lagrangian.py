import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from saddleflow.certify import matrix_P
from saddleflow.dynamics import reference_saddle
from saddleflow.errors import DimensionMismatch, MissingReference
from saddleflow.lagrangian import (
    LagrangianParams, PrimalDualState, ReferenceSaddle, eval_L, fit_multipliers, lyapunov_V, residual,
    saddle_operator, weak_lyapunov,
)
from saddleflow.problem import Quadratic, UpperBound, as_program, example1, example2

ZERO = as_program((Quadratic(0.0),), [[1.0]], [0.0])
P1 = LagrangianParams(1.0, 0.5)
ZERO_REF = ReferenceSaddle([0.0], [0.0], 0.0)


def test_params_validated():
    for kappa, mu in ((0.0, 0.5), (1.0, 0.0), (1.0, 1.0), (-1.0, 0.5)):
        with pytest.raises(ValueError):
            LagrangianParams(kappa, mu)


def test_L_scalar():
    assert eval_L(ZERO, P1, [1.0], [2.0]) == pytest.approx(3.0)


def test_L_at_feasible_point_is_f():
    P = example1(8)
    x = np.full(8, 2 / 15)
    assert eval_L(P, P1, x, np.arange(8.0)) == pytest.approx(P.f(x), abs=1e-14)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        eval_L(ZERO, P1, [1.0], [1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        saddle_operator(ZERO, P1, [1.0, 2.0], [0.0])


def test_residual_scalar():
    assert residual(ZERO, P1, [1.0], [0.0]) == pytest.approx(math.sqrt(5))


def test_smooth_operator_is_singleton():
    sx, mh = saddle_operator(ZERO, P1, [1.0], [0.5])
    assert sx.least_norm()[0] == pytest.approx(2.0 + 0.5)
    assert mh[0] == -1.0


def test_ex1_kink_at_origin():
    P = example1(6)
    sx, _ = saddle_operator(P, P1, np.zeros(6), np.zeros(6))
    # affine part is -A^T b / mu = -2 * 0.2 * 1.5 = -0.6 per coordinate, inside [-1, 1]
    np.testing.assert_allclose(sx.least_norm(), 0.0, atol=1e-15)


def test_lyapunov_scalar_and_weak():
    st_ = PrimalDualState([1.0], [2.0])
    assert lyapunov_V(ZERO, P1, st_, ZERO_REF) == pytest.approx(5.5)
    assert lyapunov_V(ZERO, P1, PrimalDualState([0.0], [0.0]), ZERO_REF) == 0.0
    ref = ReferenceSaddle([0.0, 0.0], [0.0], 0.0)
    assert weak_lyapunov(PrimalDualState([1.0, 0.0], [1.0]), ref) == 1.0
    with pytest.raises(MissingReference):
        lyapunov_V(ZERO, P1, st_, ReferenceSaddle([0.0], [0.0], None))


def test_reference_residuals_vanish():
    for P in (example1(10), example2(10)):
        ref = reference_saddle(P)
        assert residual(P, LagrangianParams(1.0, 0.5), ref.x_star, ref.lambda_star) <= 1e-8


def test_saddle_inequality_spot_check(rng):
    P = example2(6)
    ref = reference_saddle(P)
    L = lambda x, l: eval_L(P, P1, x, l)
    mid = L(ref.x_star, ref.lambda_star)
    for _ in range(100):
        x = ref.x_star + rng.normal(size=6)
        lam = ref.lambda_star + rng.normal(size=6)
        assert L(ref.x_star, lam) <= mid + 1e-12
        assert mid <= L(x, ref.lambda_star) + 1e-12


def test_V_positive_and_coercive(rng):
    P = example2(5)
    ref = reference_saddle(P)
    _, lmin = matrix_P(P.A, 0.5)
    for _ in range(100):
        d = rng.normal(size=10)
        s = PrimalDualState(ref.x_star + d[:5], ref.lambda_star + d[5:])
        v = lyapunov_V(P, P1, s, ref)
        assert v > 0
        assert v >= 0.5 * lmin * (d @ d) - 1e-12
    d = rng.normal(size=10)
    for r in (1.0, 2.0, 4.0, 8.0):
        s = PrimalDualState(ref.x_star + r * d[:5], ref.lambda_star + r * d[5:])
        assert lyapunov_V(P, P1, s, ref) >= 0.5 * lmin * r * r * (d @ d) - 1e-9


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 1))
def test_convex_concave(a, b, s):
    P = example1(4)
    lam = np.array([0.3, -1.0, 2.0, 0.1])
    x, y = np.full(4, a) + np.arange(4) * 0.1, np.full(4, b)
    z = s * x + (1 - s) * y
    assert eval_L(P, P1, z, lam) <= s * eval_L(P, P1, x, lam) + (1 - s) * eval_L(P, P1, y, lam) + 1e-9
    l2 = lam + 1.0
    lm = s * lam + (1 - s) * l2
    assert eval_L(P, P1, x, lm) == pytest.approx(s * eval_L(P, P1, x, lam) + (1 - s) * eval_L(P, P1, x, l2),
                                                 rel=1e-10, abs=1e-10)


def test_fit_multipliers_hand_kkt():
    P = as_program((Quadratic(2.0),), None, None, (UpperBound(0, -1.0),))
    fit = fit_multipliers(P, [-1.0])
    assert fit.nu[0] == pytest.approx(2.0)
    assert fit.residual < 1e-12


def test_strict_convexity_multiplier_formula():
    P = example2(10)
    ref = reference_saddle(P)
    A = P.A.to_dense()
    lam = -np.linalg.solve(A @ A.T, A @ P.grad_f(ref.x_star))
    np.testing.assert_allclose(ref.lambda_star, lam, atol=1e-12)
