import numpy as np
import pytest
from hypothesis import given, strategies as st

from saddleflow.errors import DimensionMismatch, InvalidSize
from saddleflow.problem import (
    AbsValue, AffineHalfspace, ConvexProgram, LinearCombination, PiecewiseQuadratic, Quadratic,
    Quartic, SparseMatrix, UpperBound, as_program, constraint_supports, example1, example2,
    generate_circulant, generate_tridiag_toeplitz, numerical_rank, validate_assumptions,
)


def test_circulant_n3_by_hand():
    A = generate_circulant(3, 0.0, 1.0, 0.5).to_dense()
    np.testing.assert_array_equal(A, [[0, 1, 0.5], [0.5, 0, 1], [1, 0.5, 0]])


def test_circulant_identity_and_row_sums():
    np.testing.assert_array_equal(generate_circulant(7, 1.0, 0.0, 0.0).to_dense(), np.eye(7))
    A = generate_circulant(50, 0.0, 1.0, 0.5).to_dense()
    np.testing.assert_allclose(A.sum(axis=1), 1.5)


def test_toeplitz_small():
    A = generate_tridiag_toeplitz(3, 0.5, 1.0, -0.1).to_dense()
    np.testing.assert_array_equal(A, [[1, -0.1, 0], [0.5, 1, -0.1], [0, 0.5, 1]])


@pytest.mark.parametrize("gen,n", [(generate_circulant, 2), (generate_tridiag_toeplitz, 1)])
def test_generators_reject_small_sizes(gen, n):
    with pytest.raises(InvalidSize):
        gen(n, 1.0, 1.0, 1.0)


@given(st.integers(3, 30), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_generated_rows_have_at_most_three_nonzeros(n, a0, a1, a2):
    for A in (generate_circulant(n, a0, a1, a2), generate_tridiag_toeplitz(n, a0, a1, a2)):
        assert all(len(A.row_support(l)) <= 3 for l in range(n))


@given(st.integers(3, 20))
def test_circulant_pattern_transposes(n):
    A = generate_circulant(n, 0.0, 1.0, 0.5).to_dense()
    assert np.array_equal(A != 0, (A != 0).T)


def test_triplets_are_canonical():
    A = SparseMatrix.from_triplets((2, 3), [1, 0, 1, 0], [2, 1, 2, 0], [1.0, 2.0, 3.0, 0.0])
    assert A.rows.tolist() == [0, 1]
    assert A.cols.tolist() == [1, 2]
    assert A.vals.tolist() == [2.0, 4.0]


def test_sparse_products_match_dense(rng):
    M = rng.normal(size=(4, 6)) * (rng.random((4, 6)) < 0.5)
    A = SparseMatrix.from_dense(M)
    x, y = rng.normal(size=6), rng.normal(size=4)
    np.testing.assert_allclose(A.matvec(x), M @ x)
    np.testing.assert_allclose(A.rmatvec(y), M.T @ y)


def test_rank_of_example_matrices():
    assert numerical_rank(generate_circulant(50, 0, 1, 0.5).to_dense()) == 50
    assert numerical_rank(np.array([[1.0, 1.0], [2.0, 2.0]])) == 1


def test_example1_values():
    P = example1(10)
    # each agent contributes 1/4 + 1 at x_i = 1
    assert P.f(np.ones(10)) == pytest.approx(12.5)
    assert UpperBound(0, 0.5).value(np.array([0.7])) == pytest.approx(0.2)


def test_example1_feasible_point():
    P = example1(50)
    rep = validate_assumptions(P)
    assert rep.full_row_rank and rep.slater_holds
    np.testing.assert_allclose(P.h(np.full(50, 2 / 15)), 0, atol=1e-15)
    # the uniform point 0.1 does not satisfy the equality rows
    assert np.max(np.abs(P.h(np.full(50, 0.1)))) == pytest.approx(0.05)


def test_validate_assumptions_flags_rank_and_slater():
    P = as_program((Quadratic(1.0),) * 2, [[1.0, 1.0], [2.0, 2.0]], [1.0, 2.0],
                   (UpperBound(0, 0.0),), slater_point=[0.0, 1.0])
    rep = validate_assumptions(P)
    assert rep.rank == 1 and not rep.full_row_rank
    assert rep.slater_holds is False  # g_0 = 0 is not strict
    assert validate_assumptions(P) == rep


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        ConvexProgram((Quartic(),), SparseMatrix.from_dense(np.eye(2)), np.ones(2))
    with pytest.raises(DimensionMismatch):
        as_program((Quartic(),) * 2, np.eye(2), np.ones(3))
    with pytest.raises(DimensionMismatch):
        as_program((Quartic(),), None, None, (UpperBound(3, 0.0),))


def test_h_trivial():
    P = as_program((Quadratic(1.0),) * 2, np.eye(2), [1.0, 1.0])
    np.testing.assert_array_equal(P.h([1.0, 1.0]), [0.0, 0.0])


def test_term_validation():
    with pytest.raises(ValueError):
        Quadratic(-1.0)
    with pytest.raises(ValueError):
        PiecewiseQuadratic(1.0, 0.0)
    with pytest.raises(ValueError):
        LinearCombination((Quartic(),), (-1.0,))


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_objective_is_separable(xs):
    terms = (LinearCombination((Quartic(), AbsValue(1.0))), Quadratic(3.0), PiecewiseQuadratic(2.0, 1.0), AbsValue(0.5))
    P = as_program(terms, None, None)
    assert P.f(xs) == pytest.approx(sum(t.value(x) for t, x in zip(terms, xs)), rel=1e-12, abs=1e-12)


def test_piecewise_quadratic_values():
    t = PiecewiseQuadratic(2.0, 1.0)
    assert t.value(3.0) == 9.0
    assert t.value(-2.0) == 2.0


def test_constraint_supports():
    P = as_program((Quartic(),) * 3, [[1.0, 0.0, 1.0]], [0.0], (AffineHalfspace((0.0, 1.0, 1.0), 1.0),))
    assert constraint_supports(P) == [(0, 2), (1, 2)]


def test_example2_structure():
    P = example2(4)
    assert P.m == 0 and P.p == 4
    np.testing.assert_array_equal(P.b, 1.0)
