import random

import numpy as np
import pytest
from gmpy2 import mpq

from pwreg.catalog import builtin_complex
from pwreg.errors import ChartPole, NoChartFound
from pwreg.extend import restrict_facet
from pwreg.simplicial import barycentric_subdivide
from pwreg.sphere import (ChartPoint, SphereOracle, SpherePiece, all_charts, approximate_sphere_simplex, choose_chart,
                          inverse_stereographic, stereographic)

EDGE = builtin_complex("interval").simplex((0, 1))


def rational_sphere_point(rng, n):
    """Inverse stereographic image of a random rational point: exactly on S^n."""
    y = [mpq(rng.randint(-20, 20), rng.randint(1, 9)) for _ in range(n)]
    s = sum(v * v for v in y)
    return [2 * v / (s + 1) for v in y] + [(s - 1) / (s + 1)]


def quarter_arc(X):
    t = np.pi * X[:, 0] / 2
    return np.stack([np.cos(t), np.sin(t)], axis=1)


class TestCharts:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_rotation_is_signed_permutation(self, n):
        for c in all_charts(n):
            R = c.matrix()
            assert (R @ R.T == np.eye(n + 1, dtype=int)).all()
            north = np.zeros(n + 1)
            north[n] = 1
            assert np.array_equal(c.rotate(c.point), north)

    def test_antipode_maps_to_origin(self):
        c = ChartPoint(2, 0, 1)
        assert stereographic([-1, 0, 0], c) == [0, 0]

    def test_inverse_of_origin_is_antipode(self):
        c = ChartPoint(2, 1, -1)
        assert inverse_stereographic([0, 0], c) == [0, 1, 0]

    def test_pole(self):
        with pytest.raises(ChartPole):
            stereographic([0, 1], ChartPoint(1, 1, 1))

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_exact_round_trip(self, n):
        rng = random.Random(n)
        for _ in range(100):
            u = rational_sphere_point(rng, n)
            c = ChartPoint(n, rng.randrange(n + 1), rng.choice([1, -1]))
            if u == list(c.point):
                continue
            assert sum(v * v for v in u) == 1
            assert inverse_stereographic(stereographic(u, c), c) == u


class TestChooseChart:
    def test_near_first_axis(self):
        pts = np.array([[1, 0.01, 0], [0.999, 0, 0.02]])
        c = choose_chart(pts / np.linalg.norm(pts, axis=1, keepdims=True))
        assert (c.index, c.sign) == (0, -1)

    def test_small_cap_succeeds(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            center = rng.normal(size=3)
            center /= np.linalg.norm(center)
            pts = center + 0.25 * rng.uniform(-1, 1, size=(40, 3)) / np.sqrt(3)
            pts /= np.linalg.norm(pts, axis=1, keepdims=True)
            c = choose_chart(pts)
            assert np.linalg.norm(pts - c.point, axis=1).min() >= 0.3

    def test_dense_cover_fails(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(5000, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        with pytest.raises(NoChartFound):
            choose_chart(pts)


class TestApproximateSphereSimplex:
    def test_constant(self):
        f = SphereOracle(1, lambda X: np.tile([0.0, 1.0], (len(X), 1)))
        piece = approximate_sphere_simplex(EDGE, f, None, 1e-6)
        assert piece.report["achieved"] < 1e-15
        assert piece.unit_norm_exact()

    def test_quarter_arc(self):
        K = builtin_complex("interval")
        f = SphereOracle(1, quarter_arc)
        verts = [approximate_sphere_simplex(K.simplex((1 - k,)), f, None, 1e-3) for k in (0, 1)]
        piece = approximate_sphere_simplex(EDGE, f, verts, 1e-3)
        assert piece.report["degree"] <= 10 and piece.report["achieved"] < 1e-3
        assert piece.unit_norm_exact()
        for k in (0, 1):
            assert piece.restrict(1, k).same_map(verts[k])

    def test_chart_margin(self):
        f = SphereOracle(1, quarter_arc)
        piece = approximate_sphere_simplex(EDGE, f, None, 1e-3)
        assert piece.report["chart_margin"] >= 0.15

    def test_hemisphere_needs_subdivision(self):
        def wide(X):
            t = 1.9 * np.pi * X[:, 0]
            return np.stack([np.cos(t), np.sin(t)], axis=1)
        f = SphereOracle(1, wide)
        with pytest.raises(NoChartFound):
            approximate_sphere_simplex(EDGE, f, None, 1e-2)
        K = barycentric_subdivide(builtin_complex("interval"), 1)
        for s in K.of_dim(1):
            approximate_sphere_simplex(K.simplex(s), f, None, 1e-2)

    def test_json_round_trip(self):
        piece = approximate_sphere_simplex(EDGE, SphereOracle(1, quarter_arc), None, 1e-3)
        back = SpherePiece.from_json(piece.to_json(), 1)
        assert back.same_map(piece)

    def test_restriction_matches_polynomials(self):
        piece = approximate_sphere_simplex(EDGE, SphereOracle(1, quarter_arc), None, 1e-3)
        r = piece.restrict(1, 0)
        assert r.S == restrict_facet(piece.S, 1, 0)
