import random

import numpy as np
import pytest
from gmpy2 import mpq
from hypothesis import given, settings, strategies as st

from pwreg.errors import DenominatorZero, NonFinite, RankDeficient
from pwreg.polyalg import (MultiPoly, Q, RationalFn, evaluate, face_ideal_generator, least_squares_fit,
                           monomial_exponents, restrict_to_hull, snap, snap_to_exact)
from pwreg.simplicial import AffineHull, affine_hull, build_complex

# near-minimax error of degree-9 Chebyshev interpolation of sin(pi x) on [0, 1]
# (numpy.polynomial.chebyshev on a 20001-point grid)
CHEB9_SIN_PI = 4.697e-08

X, Y = MultiPoly.var(2, 0), MultiPoly.var(2, 1)


def rand_poly(rng, nv=2, deg=3, terms=5):
    p = MultiPoly.constant(nv, 0)
    for _ in range(terms):
        m = MultiPoly.constant(nv, mpq(rng.randint(-9, 9), rng.randint(1, 8)))
        for _ in range(rng.randint(0, deg)):
            m = m * MultiPoly.var(nv, rng.randrange(nv))
        p = p + m
    return p


polys = st.integers(0, 2**32).map(lambda s: rand_poly(random.Random(s)))
rat_points = st.tuples(st.fractions(max_denominator=50), st.fractions(max_denominator=50)).map(
    lambda t: tuple(Q(v) for v in t))


class TestEvaluate:
    def test_product(self):
        assert evaluate(X * Y, (Q(2), Q(3))) == 6

    def test_rational(self):
        x = MultiPoly.var(1, 0)
        f = RationalFn(x, MultiPoly.constant(1, 1) + x * x)
        assert evaluate(f, (Q(1),)) == mpq(1, 2)

    def test_pole(self):
        x = MultiPoly.var(1, 0)
        with pytest.raises(DenominatorZero):
            evaluate(RationalFn(MultiPoly.constant(1, 1), x), (Q(0),))

    def test_zero_denominator_polynomial(self):
        with pytest.raises(DenominatorZero):
            RationalFn(X, MultiPoly.constant(2, 0))

    @settings(max_examples=200, deadline=None)
    @given(polys, polys, rat_points)
    def test_ring_axioms(self, f, g, x):
        assert evaluate(f * g, x) == evaluate(f, x) * evaluate(g, x)
        assert evaluate(f + g, x) == evaluate(f, x) + evaluate(g, x)

    def test_ring_axioms_bulk(self):
        rng = random.Random(11)
        for _ in range(1000):
            f, g = rand_poly(rng), rand_poly(rng)
            x = (mpq(rng.randint(-20, 20), rng.randint(1, 9)), mpq(rng.randint(-20, 20), rng.randint(1, 9)))
            assert (f * g).eval_exact(x) == f.eval_exact(x) * g.eval_exact(x)
            assert (f + g).eval_exact(x) == f.eval_exact(x) + g.eval_exact(x)

    def test_json_round_trip(self):
        p = rand_poly(random.Random(2))
        assert MultiPoly.from_json(p.to_json()) == p


class TestRestrictToHull:
    def _edge(self, a, b):
        K = build_complex([[tuple(Q(c) for c in a), tuple(Q(c) for c in b)]])
        return affine_hull(K.simplex((0, 1)))

    def test_vanishing_coordinate(self):
        h = self._edge((0, 0), (1, 0))
        assert restrict_to_hull(Y, h).is_zero()

    def test_constant_on_antidiagonal(self):
        h = self._edge((0, 1), (1, 0))
        assert restrict_to_hull(X + Y, h) == MultiPoly.constant(1, 1)

    def test_square_on_scaled_line(self):
        x = MultiPoly.var(1, 0)
        h = AffineHull((Q(0),), ((Q(2),),), ())
        assert restrict_to_hull(x * x, h) == x * x * 4

    @settings(max_examples=50, deadline=None)
    @given(polys, polys)
    def test_homomorphism(self, f, g):
        h = self._edge((1, 2), (3, -1))
        assert restrict_to_hull(f * g, h) == restrict_to_hull(f, h) * restrict_to_hull(g, h)


class TestFaceIdeal:
    def test_interval(self):
        t = MultiPoly.var(1, 0)
        assert face_ideal_generator(1) == t * (MultiPoly.constant(1, 1) - t)

    def test_triangle(self):
        one = MultiPoly.constant(2, 1)
        assert face_ideal_generator(2) == X * Y * (one - X - Y)

    def test_barycenter_value(self):
        assert face_ideal_generator(1).eval_exact((mpq(1, 2),)) == mpq(1, 4)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_vanishes_on_facets(self, d):
        from pwreg.extend import restrict_facet
        q = face_ideal_generator(d)
        for k in range(d + 1):
            assert restrict_facet(q, d, k).is_zero()
        assert q.eval_exact(tuple(mpq(1, d + 1) for _ in range(d))) > 0


class TestSnap:
    def test_half(self):
        assert snap(0.5) == mpq(1, 2)

    def test_tenth_bit_pattern(self):
        assert snap(0.1) == mpq(3602879701896397, 2**55)

    @pytest.mark.parametrize("bad", [float("nan"), float("inf")])
    def test_non_finite(self, bad):
        with pytest.raises(NonFinite):
            snap(bad)

    def test_round_trip_evaluation(self):
        rng = np.random.default_rng(0)
        coef = rng.normal(size=6)
        exps = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
        p = snap_to_exact(coef, exps)
        for _ in range(50):
            x, y = rng.uniform(-1, 1, size=2)
            fl = coef @ np.array([1, x, y, x * x, x * y, y * y])
            ex = float(p.eval_exact((snap(x), snap(y))))
            assert abs(fl - ex) <= 1e-12 * max(1.0, abs(ex))


class TestLeastSquares:
    def test_exact_quadratic(self):
        x = np.linspace(0, 1, 21)
        p = least_squares_fit(x, x ** 2, 2)
        assert np.abs(p.eval_float(x[:, None]) - x ** 2).max() < 1e-12

    def test_sin_degree_nine(self):
        x = np.linspace(0, 1, 41)
        p = least_squares_fit(x, np.sin(np.pi * x), 9)
        g = np.linspace(0, 1, 5001)
        err = np.abs(p.eval_float(g[:, None]) - np.sin(np.pi * g)).max()
        assert err < 1e-4
        # least squares on a uniform lattice sits within a small factor of near-minimax
        assert err < 10 * CHEB9_SIN_PI

    def test_too_few_samples(self):
        with pytest.raises(RankDeficient):
            least_squares_fit(np.array([0.0, 0.5, 1.0]), np.zeros(3), 5)

    def test_weighted(self):
        x = np.linspace(0, 1, 30)
        w = face_ideal_generator(1)
        target = x * (1 - x) * (2 + x)
        p = least_squares_fit(x, target, 1, weight=w)
        assert np.abs(w.eval_float(x[:, None]) * p.eval_float(x[:, None]) - target).max() < 1e-12

    def test_vector_values(self):
        x = np.linspace(0, 1, 10)
        ps = least_squares_fit(x, np.stack([x, 1 - x], axis=1), 1)
        assert len(ps) == 2
        assert np.abs((ps[0] + ps[1]).eval_float(x[:, None]) - 1).max() < 1e-14


def dense_poly(seed, nv, deg):
    rng = random.Random(seed)
    terms = {e: mpq(rng.randint(-10**6, 10**6), rng.randint(1, 97)) for e in monomial_exponents(nv, deg)
             if rng.random() < 0.8}
    return MultiPoly(nv, terms)


def naive_product(a, b):
    out = {}
    for ea, ca in a.terms.items():
        for eb, cb in b.terms.items():
            e = tuple(i + j for i, j in zip(ea, eb))
            out[e] = out.get(e, mpq(0)) + ca * cb
    return {e: c for e, c in out.items() if c}


class TestLargeProducts:
    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32), st.integers(0, 2**32), st.sampled_from([(2, 12), (3, 7), (4, 5)]))
    def test_matches_schoolbook(self, sa, sb, shape):
        a, b = dense_poly(sa, *shape), dense_poly(sb, *shape)
        assert len(a.terms) * len(b.terms) >= 4096
        assert (a * b).terms == naive_product(a, b)

    def test_cancellation_to_zero(self):
        a = dense_poly(1, 3, 7)
        assert not (a * (-a) + a * a).terms

    def test_evaluation(self):
        a, b = dense_poly(5, 2, 14), dense_poly(6, 2, 14)
        x = (mpq(3, 7), mpq(-2, 5))
        assert evaluate(a * b, x) == evaluate(a, x) * evaluate(b, x)
