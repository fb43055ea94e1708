"""Chain algebra: boundary, subdivision, prism homotopy.

The derived oracle values below were computed by hand from the alternating-sum
definitions before the implementation was written, and are frozen here.
"""

from fractions import Fraction as Fr
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from crkernels.simplicial import (
    Chain,
    barycenter,
    boundary,
    cone,
    diameter,
    independent,
    prism,
    shrink_depth,
    simplex,
    subdivide,
)


A = simplex((0, 0), (2, 0))          # segment in R^2
TRI = simplex((0, 0), (2, 0), (0, 2))


def test_simplex_coercion():
    s = simplex((1, 2), (Fr(1, 3), 0))
    assert s == (((Fr(1), Fr(2))), (Fr(1, 3), Fr(0)))
    assert all(isinstance(x, Fr) for v in s for x in v)


def test_boundary_of_point_is_zero():
    c = Chain.of(simplex((1, 1)))
    assert boundary(c).is_zero()


def test_boundary_of_segment():
    # d[a,b] = -d_1 + d_2 = [a] - [b]
    a, b = simplex((0, 0)), simplex((2, 0))
    got = boundary(Chain.of(A))
    assert got == Chain.of(a) - Chain.of(b)


def test_boundary_single_face():
    c = Chain.of(TRI)
    assert boundary(c, 1) == Chain.of(simplex((2, 0), (0, 2)))
    assert boundary(c, 3) == Chain.of(simplex((0, 0), (2, 0)))
    with pytest.raises(ValueError):
        boundary(c, 4)
    with pytest.raises(ValueError):
        boundary(c, 0)


def test_boundary_squared_triangle():
    c = Chain.of(TRI)
    assert boundary(boundary(c)).is_zero()


def test_mixed_grades_rejected():
    with pytest.raises(ValueError):
        Chain.of(A) + Chain.of(simplex((5, 5)))


def test_barycenter_values():
    assert barycenter(simplex((3, 7))) == (Fr(3), Fr(7))
    assert barycenter(A) == (Fr(1), Fr(0))
    assert barycenter(TRI) == (Fr(2, 3), Fr(2, 3))
    with pytest.raises(ValueError):
        barycenter(())


def test_subdivide_point_and_segment():
    pt = Chain.of(simplex((4, 4)))
    assert subdivide(pt) == pt
    m = simplex((1, 0))
    got = subdivide(Chain.of(A))
    want = Chain.of(m + simplex((2, 0))) - Chain.of(m + simplex((0, 0)))
    assert got == want


def test_subdivide_term_count_is_factorial():
    for p, s in [(2, A), (3, TRI), (4, simplex((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)))]:
        c = subdivide(Chain.of(s))
        assert sum(abs(k) for k in c.coefficients()) == math.factorial(p)


def test_subdivide_iterates():
    c = Chain.of(TRI)
    assert subdivide(c, 0) == c
    assert subdivide(c, 2) == subdivide(subdivide(c))


def test_prism_point_and_segment():
    assert prism(Chain.of(simplex((9, 9)))).is_zero()
    m = simplex((1, 0))
    assert prism(Chain.of(A)) == Chain.of(m + A)


def test_prism_homotopy_segment_frozen():
    # dT[a,b] + T(d[a,b]) = [m,b] - [m,a] - [a,b], with T(d[a,b]) = 0.
    c = Chain.of(A)
    lhs = boundary(prism(c)) + prism(boundary(c))
    assert lhs == subdivide(c) - c


def test_cone_linearity():
    v = (Fr(9), Fr(9))
    c = 2 * Chain.of(A) - Chain.of(simplex((1, 1), (3, 3)))
    got = cone(v, c)
    want = 2 * Chain.of((v,) + A) - Chain.of((v,) + simplex((1, 1), (3, 3)))
    assert got == want
    assert cone(v, Chain()).is_zero()
    with pytest.raises(ValueError):
        cone((Fr(1),), c)


def test_diameter_values():
    assert diameter(simplex((5, 5))) == 0
    assert diameter(simplex((0, 0), (3, 4))) == 25
    # halving a length-2 segment: every piece has squared diameter 1
    pieces = subdivide(Chain.of(A))
    assert max(diameter(s) for s in pieces.simplices()) == 1


def test_independent():
    assert independent(simplex((1, 0), (0, 1)))
    assert not independent(simplex((1, 0), (2, 0)))
    assert not independent(simplex((1, 0), (0, 1), (1, 1)))


def _random_vertex(rng, dim):
    return tuple(Fr(rng.randint(-8, 8), rng.randint(1, 5)) for _ in range(dim))


def _random_chain(rng, p, dim, nterms=2):
    c = Chain()
    for _ in range(nterms):
        s = tuple(_random_vertex(rng, dim) for _ in range(p))
        c = c + rng.choice([-2, -1, 1, 2]) * Chain.of(s)
    return c


def test_boundary_squared_random():
    rng = random.Random(7)
    for _ in range(40):
        p = rng.randint(2, 5)
        c = _random_chain(rng, p, rng.randint(p, p + 2))
        assert boundary(boundary(c)).is_zero()


def test_subdivision_commutes_with_boundary_random():
    rng = random.Random(11)
    for _ in range(30):
        p = rng.randint(2, 4)
        c = _random_chain(rng, p, rng.randint(p, p + 2))
        assert subdivide(boundary(c)) == boundary(subdivide(c))


def test_prism_homotopy_random():
    rng = random.Random(13)
    for p in (2, 3, 4):
        for _ in range(8):
            c = _random_chain(rng, p, p + 1)
            lhs = boundary(prism(c)) + prism(boundary(c))
            assert lhs == subdivide(c) - c


@given(st.lists(st.tuples(st.integers(-6, 6), st.integers(-6, 6), st.integers(-6, 6)),
                min_size=3, max_size=3))
@settings(max_examples=60, deadline=None)
def test_prism_homotopy_hypothesis(vertices):
    c = Chain.of(simplex(*vertices))
    assert boundary(prism(c)) + prism(boundary(c)) == subdivide(c) - c


@given(st.lists(st.tuples(st.integers(-6, 6), st.integers(-6, 6)),
                min_size=2, max_size=2))
@settings(max_examples=60, deadline=None)
def test_sd_boundary_commute_hypothesis(vertices):
    c = Chain.of(simplex(*vertices))
    assert subdivide(boundary(c)) == boundary(subdivide(c))


def test_max_diameter_nonincreasing():
    c = Chain.of(TRI)
    prev = max(diameter(s) for s in c.simplices())
    for _ in range(3):
        c = subdivide(c)
        cur = max(diameter(s) for s in c.simplices())
        assert cur <= prev
        prev = cur


def _naive_depth(s, eps_sq):
    c = Chain.of(s)
    m = 0
    while max(diameter(t) for t in c.simplices()) >= eps_sq:
        c = subdivide(c)
        m += 1
    return m


def test_shrink_depth_matches_naive():
    seg = simplex((0, 0), (2, 0))
    for eps_sq in (Fr(5), Fr(3, 2), Fr(1, 3), Fr(1, 17)):
        assert shrink_depth(seg, eps_sq) == _naive_depth(seg, eps_sq)
    for eps_sq in (Fr(9), Fr(1), Fr(1, 4)):
        assert shrink_depth(TRI, eps_sq) == _naive_depth(TRI, eps_sq)


def test_shrink_depth_borderline_is_strict():
    # exact tie: squared diameter 1 after one halving must NOT count as < 1
    seg = simplex((0, 0), (2, 0))
    assert shrink_depth(seg, Fr(1)) == 2
    assert shrink_depth(seg, Fr(1, 1) + Fr(1, 10**12)) == 1


def test_shrink_depth_rejects_bad_eps():
    with pytest.raises(ValueError):
        shrink_depth(A, Fr(0))
