import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from saddleflow.calculus import (
    Box, HessianHull, MinkowskiSum, Point, Segment, box, hessian_interval, least_norm,
    mean_value_hull, secant_diagonal, subdiff, subdiff_plus,
)
from saddleflow.errors import NotC11, UnsupportedTerm
from saddleflow.problem import (
    AbsValue, LinearCombination, ObjectiveTerm, PiecewiseQuadratic, Quadratic, Quartic, UpperBound,
    as_program,
)

EX1 = LinearCombination((Quartic(), AbsValue(1.0)))
EX2 = PiecewiseQuadratic(2.0, 1.0)
TERMS = [EX1, EX2, Quadratic(3.0), Quartic(), AbsValue(2.0),
         LinearCombination((Quadratic(1.0), PiecewiseQuadratic(1.0, 4.0)), (0.5, 2.0))]
reals = st.floats(-4, 4, allow_nan=False)


def test_ex1_subdiff_away_from_kink():
    s = subdiff(EX1, 2.0)
    assert isinstance(s, Point)
    assert s.least_norm()[0] == 9.0


def test_ex1_subdiff_at_kink():
    s = subdiff(EX1, 0.0)
    assert isinstance(s, Box)
    assert (s.lo[0], s.hi[0]) == (-1.0, 1.0)
    assert least_norm(s)[0] == 0.0


@given(reals)
def test_ex2_gradient_is_max(x):
    s = subdiff(EX2, x)
    assert isinstance(s, Point)
    assert s.v[0] == pytest.approx(max(x, 2 * x), abs=1e-15)


def test_unsupported_term():
    class Weird(ObjectiveTerm):
        def value(self, x):
            return x * x

    with pytest.raises(UnsupportedTerm):
        subdiff(Weird(), 1.0)


def test_subdiff_plus_cases():
    g = UpperBound(0, 0.5)
    assert isinstance(subdiff_plus(g, [0.0]), Point) and subdiff_plus(g, [0.0]).v[0] == 0.0
    seg = subdiff_plus(g, [0.5])
    assert isinstance(seg, Segment)
    np.testing.assert_array_equal(seg.v0, [0.0])
    np.testing.assert_array_equal(seg.v1, [1.0])
    assert subdiff_plus(g, [0.8]).v[0] == 1.0


def test_least_norm_closed_forms():
    assert least_norm(box([-1.0], [1.0]))[0] == 0.0
    assert least_norm(Point([9.0]))[0] == 9.0
    np.testing.assert_array_equal(least_norm(Segment([0.0, 0.0], [1.0, 0.0])), [0.0, 0.0])
    # projection of 0 onto a segment that misses it
    np.testing.assert_allclose(least_norm(Segment([1.0, -1.0], [1.0, 1.0])), [1.0, 0.0])


def test_degenerate_box_is_point():
    assert isinstance(box([2.0, 3.0], [2.0, 3.0]), Point)


@given(st.lists(st.tuples(reals, st.floats(0, 3)), min_size=1, max_size=4),
       st.lists(st.tuples(reals, reals), min_size=0, max_size=2))
def test_minkowski_least_norm_beats_samples(boxes, seg_dirs):
    lo = np.array([a for a, _ in boxes])
    hi = lo + np.array([w for _, w in boxes])
    d = len(lo)
    segs = tuple(Segment(np.zeros(d), np.resize(np.array(v), d)) for v in seg_dirs)
    S = MinkowskiSum(box(lo, hi), segs)
    v = S.least_norm()
    assert S.contains(v, tol=1e-7)
    r = np.random.default_rng(0)
    for _ in range(20):
        assert np.linalg.norm(v) <= np.linalg.norm(S.sample(r)) + 1e-9


def test_hessian_intervals():
    assert hessian_interval(EX2, 0.0) == (1.0, 2.0)
    assert hessian_interval(EX2, -3.0) == (1.0, 1.0)
    assert hessian_interval(Quartic(), 1.5) == (3 * 1.5 ** 2, 3 * 1.5 ** 2)
    with pytest.raises(NotC11):
        hessian_interval(AbsValue(1.0), 1.0)


def test_mean_value_hull_examples():
    P = as_program((EX2, Quadratic(2.5), Quartic()), None, None)
    H = mean_value_hull(P, [-1.0, -7.0, 1.0], [1.0, 3.0, 2.0])
    np.testing.assert_array_equal(H.lo, [1.0, 2.5, 3.0])
    np.testing.assert_array_equal(H.hi, [2.0, 2.5, 12.0])
    with pytest.raises(NotC11):
        mean_value_hull(as_program((EX1,), None, None), [0.0], [1.0])


@given(reals, reals)
def test_mean_value_containment(x, y):
    assume(abs(x - y) > 1e-6)
    smooth = [t for t in TERMS if t.canonical().w1 == 0]
    P = as_program(smooth, None, None)
    xs, ys = np.full(len(smooth), x), np.full(len(smooth), y)
    H = mean_value_hull(P, xs, ys)
    assert H.contains_diagonal(secant_diagonal(P, xs, ys), tol=1e-9 * (1 + x * x + y * y))


@given(reals, reals)
def test_subgradient_inequality(x, y):
    for t in TERMS:
        s = subdiff(t, x)
        for xi in (s.least_norm()[0], s.support([1.0]), -s.support([-1.0])):
            assert t.value(y) >= t.value(x) + xi * (y - x) - 1e-9 * (1 + abs(t.value(y)))


@given(reals, reals)
def test_monotone(x, y):
    for t in TERMS:
        sx, sy = subdiff(t, x), subdiff(t, y)
        lo_x, hi_x = -sx.support([-1.0]), sx.support([1.0])
        lo_y, hi_y = -sy.support([-1.0]), sy.support([1.0])
        if x < y:
            assert lo_y >= hi_x - 1e-9
        elif y < x:
            assert lo_x >= hi_y - 1e-9


@given(st.floats(0.01, 4), st.booleans())
def test_finite_difference(a, neg):
    x = -a if neg else a
    e = 1e-6
    for t in TERMS:
        fd = (t.value(x + e) - t.value(x - e)) / (2 * e)
        assert subdiff(t, x).least_norm()[0] == pytest.approx(fd, abs=1e-6 * (1 + abs(fd)))


def test_hull_corners_and_pd():
    H = HessianHull(np.array([1.0, 2.0, 3.0]), np.array([2.0, 2.0, 4.0]))
    assert H.positive_definite
    assert len(list(H.corners())) == 4
    assert not HessianHull(np.array([0.0]), np.array([1.0])).positive_definite
    with pytest.raises(ValueError):
        HessianHull(np.array([2.0]), np.array([1.0]))


@given(reals, reals)
def test_positive_hull(x, y):
    P = as_program((EX2, Quartic()), None, None)
    H = mean_value_hull(P, [x, x], [y, y])
    samples = np.linspace(min(x, y), max(x, y), 7)
    if all(hessian_interval(EX2, s)[0] > 0 for s in samples):
        assert H.lo[0] > 0
