import random

import numpy as np
import pytest
from gmpy2 import mpq
from hypothesis import given, settings, strategies as st

from pwreg.catalog import builtin_complex
from pwreg.errors import DegreeCapExceeded, IncompatibleFacetData
from pwreg.extend import (FitConfig, approximate_on_simplex, extend_from_boundary, restrict_facet,
                          sup_error_estimate)
from pwreg.polyalg import MultiPoly, RegularFnVector, face_ideal_generator, snap

EDGE = builtin_complex("interval").simplex((0, 1))
TRI = builtin_complex("triangle").simplex((0, 1, 2))
TET = builtin_complex("tetrahedron").simplex((0, 1, 2, 3))

# dense-grid (4001 pts) weighted least squares g = x(1-x) p in a Legendre basis,
# sup error on 100001 points; keyed by total degree of g
WLSQ_SIN_PI = {4: 8.8870e-04, 6: 1.0588e-05, 8: 7.8075e-08}


def const(nv, c):
    return RegularFnVector([MultiPoly.constant(nv, c)])


def facet_data_of(F, d):
    """Restrictions of a RegularFnVector to each facet."""
    return [RegularFnVector([restrict_facet(p, d, k) for p in F.numerators], restrict_facet(F.denominator, d, k))
            for k in range(d + 1)]


def boundary_exact(g, data, d):
    for k, dk in enumerate(data):
        num = [restrict_facet(p, d, k) for p in g.numerators]
        den = restrict_facet(g.denominator, d, k)
        if any(a * dk.denominator != b * den for a, b in zip(num, dk.numerators)):
            return False
    return True


def rand_poly(rng, nv, deg=3):
    p = MultiPoly.constant(nv, mpq(rng.randint(-5, 5), rng.randint(1, 4)))
    for _ in range(4):
        m = MultiPoly.constant(nv, mpq(rng.randint(-5, 5), rng.randint(1, 4)))
        for _ in range(rng.randint(1, deg)):
            m = m * MultiPoly.var(nv, rng.randrange(nv))
        p = p + m
    return p


class TestExtendFromBoundary:
    def test_interval_linear(self):
        a, b = mpq(3, 2), mpq(-1, 4)
        # facet k is opposite vertex k: data[0] is the value at vertex 1
        F = extend_from_boundary(EDGE, [const(0, b), const(0, a)])
        t = MultiPoly.var(1, 0)
        assert F.numerators[0] * 1 == (MultiPoly.constant(1, a) + t * (b - a)) * F.denominator

    def test_zero_data(self):
        F = extend_from_boundary(TRI, [const(1, 0)] * 3)
        assert F.numerators[0].is_zero()

    def test_affine_on_triangle(self):
        # x + 2y in local parameters of the standard triangle is t0 + 2 t1
        t0, t1 = MultiPoly.var(2, 0), MultiPoly.var(2, 1)
        G = RegularFnVector([t0 + t1 * 2])
        F = extend_from_boundary(TRI, facet_data_of(G, 2))
        assert F.numerators[0] == G.numerators[0] * F.denominator

    def test_incompatible(self):
        data = [const(1, 0), const(1, 0), RegularFnVector([MultiPoly.var(1, 0) + 1])]
        with pytest.raises(IncompatibleFacetData):
            extend_from_boundary(TRI, data)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32), st.sampled_from([1, 2, 3]))
    def test_restrictions_exact(self, seed, d):
        rng = random.Random(seed)
        G = RegularFnVector([rand_poly(rng, d), rand_poly(rng, d)])
        data = facet_data_of(G, d)
        sx = {1: EDGE, 2: TRI, 3: TET}[d]
        assert boundary_exact(extend_from_boundary(sx, data), data, d)

    def test_rational_data(self):
        t0, t1 = MultiPoly.var(2, 0), MultiPoly.var(2, 1)
        G = RegularFnVector([t0 * t1 + 1], t0 * t0 + t1 + 2)
        data = facet_data_of(G, 2)
        assert boundary_exact(extend_from_boundary(TRI, data), data, 2)


class TestFaceIdealAnnihilation:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32), st.sampled_from([1, 2, 3]))
    def test_q_times_p_vanishes_on_facets(self, seed, d):
        p = rand_poly(random.Random(seed), d)
        qp = face_ideal_generator(d) * p
        assert all(restrict_facet(qp, d, k).is_zero() for k in range(d + 1))


class TestApproximateOnSimplex:
    def f_sin(self, X):
        return np.sin(np.pi * X[:, :1])

    def test_bump_exact(self):
        f = lambda X: X[:, :1] * (1 - X[:, :1])
        g, rep = approximate_on_simplex(EDGE, f, [const(0, 0)] * 2, 1e-6)
        assert rep.achieved < 1e-12

    def test_sin_boundary_zero(self):
        g, rep = approximate_on_simplex(EDGE, self.f_sin, [const(0, 0)] * 2, 1e-3)
        assert rep.degree + 2 <= 9
        assert g.eval_exact((mpq(0),)) == [0] and g.eval_exact((mpq(1),)) == [0]

    @pytest.mark.parametrize("deg", sorted(WLSQ_SIN_PI))
    def test_matches_dense_oracle(self, deg):
        cfg = FitConfig(degree_start=deg - 2, degree_cap=deg - 2)
        g, rep = approximate_on_simplex(EDGE, self.f_sin, [const(0, 0)] * 2, 1e-30, cfg, raise_on_cap=False)
        assert rep.achieved <= 2 * WLSQ_SIN_PI[deg]

    def test_exp_snapped_endpoints(self):
        f = lambda X: np.exp(X[:, :1])
        a, b = snap(np.exp(0.0)), snap(np.exp(1.0))
        g, rep = approximate_on_simplex(EDGE, f, [const(0, b), const(0, a)], 1e-4)
        assert g.eval_exact((mpq(0),)) == [a] and g.eval_exact((mpq(1),)) == [b]
        assert rep.achieved < 1e-4

    def test_monotone_history(self):
        cfg = FitConfig(degree_cap=10)
        data = [RegularFnVector([MultiPoly.constant(1, 0)])] * 3
        _, rep = approximate_on_simplex(TRI, lambda X: X[:, :1] * X[:, 1:2] * (1 - X[:, :1] - X[:, 1:2])
                                        * np.cos(X[:, :1]), data, 1e-30, cfg, raise_on_cap=False)
        errs = [e for _, e in rep.history]
        assert all(b <= a for a, b in zip(errs, errs[1:]))

    def test_representable_idempotent(self):
        def f(X):
            x, y = X[:, 0], X[:, 1]
            return (x * y * (1 - x - y) * (1 + x) + 0.5)[:, None]
        data = [const(1, mpq(1, 2))] * 3
        _, rep = approximate_on_simplex(TRI, f, data, 1e-9)
        assert rep.achieved <= 1e-10

    def test_cap_exceeded(self):
        f = lambda X: np.sin(40 * X[:, :1])
        cfg = FitConfig(degree_cap=4)
        with pytest.raises(DegreeCapExceeded) as exc:
            approximate_on_simplex(EDGE, f, None, 1e-6, cfg)
        assert exc.value.details["achieved"] > 1e-6

    def test_vertex(self):
        g, rep = approximate_on_simplex(builtin_complex("interval").simplex((0,)), lambda X: X + 0.25, None, 1.0)
        assert g.numerators[0].constant_term() == mpq(1, 4)


class TestSupErrorEstimate:
    def test_polynomial_exact(self):
        t = MultiPoly.var(1, 0)
        g = RegularFnVector([t * t])
        assert sup_error_estimate(g, lambda X: X[:, :1] ** 2, EDGE, 16) == 0.0

    def test_zero_vs_one(self):
        g = RegularFnVector([MultiPoly.constant(1, 0)])
        assert sup_error_estimate(g, lambda X: np.ones((len(X), 1)), EDGE, 8) == 1.0

    def test_agrees_with_dense_grid(self):
        cfg = FitConfig(degree_start=7, degree_cap=7)
        f = lambda X: np.sin(np.pi * X[:, :1])
        g, rep = approximate_on_simplex(EDGE, f, None, 1e-30, cfg, raise_on_cap=False)
        x = np.linspace(0, 1, 20001)
        dense = np.abs(g.eval_float(x[:, None])[:, 0] - np.sin(np.pi * x)).max()
        assert rep.achieved < 1e-3
        assert abs(rep.achieved - dense) <= 0.1 * dense
