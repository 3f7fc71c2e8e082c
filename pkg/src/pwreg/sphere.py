"""Maps into the unit sphere S^n through exact stereographic charts.

A chart is a signed basis point a = sign * e_i of R^(n+1).  Its rotation is
an exact signed permutation sending a to the last basis vector, after which
rho(v) = v[:n] / (1 - v[n]) and rho^-1(y) = (2y, |y|^2 - 1) / (|y|^2 + 1).
On each simplex the map is stored chart-side as y = Y / S with polynomial
Y, S; the ambient form N / D then satisfies sum N_i^2 = D^2 identically.
"""
from dataclasses import dataclass, field as dc_field

import numpy as np
from gmpy2 import mpq

from .errors import ChartPole, NoChartFound
from .extend import FitConfig, approximate_on_simplex, restrict_facet
from .polyalg import MultiPoly, Q, RegularFnVector, snap

CHART_MARGIN = 0.3


class ChartPoint:
    """The point sign * e_index of S^n with its exact rotation to the north pole."""

    def __init__(self, n, index, sign):
        if not 0 <= index <= n or sign not in (1, -1):
            raise ValueError("bad chart")
        self.n, self.index, self.sign = n, index, sign
        # perm[k]: source coordinate read into slot k; signs[k] multiplies it
        perm = list(range(n + 1))
        perm[n], perm[index] = index, n
        signs = [1] * (n + 1)
        signs[n] = sign
        self.perm, self.signs = perm, signs

    @property
    def point(self):
        p = np.zeros(self.n + 1)
        p[self.index] = self.sign
        return p

    def rotate(self, u):
        """R u for vectors along the last axis (floats, mpq or MultiPoly lists)."""
        if isinstance(u, np.ndarray) and u.dtype != object:
            return u[..., self.perm] * np.array(self.signs, dtype=float)
        return [u[p] * s for p, s in zip(self.perm, self.signs)]

    def unrotate(self, v):
        """R^T v."""
        inv = [0] * (self.n + 1)
        for k, p in enumerate(self.perm):
            inv[p] = k
        if isinstance(v, np.ndarray) and v.dtype != object:
            return (v * np.array(self.signs, dtype=float))[..., inv]
        return [v[inv[p]] * self.signs[inv[p]] for p in range(self.n + 1)]

    def matrix(self):
        R = np.zeros((self.n + 1, self.n + 1), dtype=int)
        for k, (p, s) in enumerate(zip(self.perm, self.signs)):
            R[k, p] = s
        return R

    def key(self):
        return (self.index, 0 if self.sign > 0 else 1)

    def to_json(self):
        return {"index": self.index, "sign": self.sign}

    def __eq__(self, other):
        return isinstance(other, ChartPoint) and (self.n, self.index, self.sign) == (other.n, other.index, other.sign)

    def __hash__(self):
        return hash((self.n, self.index, self.sign))

    def __repr__(self):
        return f"ChartPoint({'+' if self.sign > 0 else '-'}e{self.index})"


def all_charts(n):
    return [ChartPoint(n, i, s) for i in range(n + 1) for s in (1, -1)]


def stereographic(u, chart):
    """Exact for rational input sequences, vectorized for float arrays (..., n+1)."""
    n = chart.n
    if isinstance(u, np.ndarray) and u.dtype != object:
        v = chart.rotate(u)
        den = 1.0 - v[..., n]
        if np.any(den == 0):
            raise ChartPole("point equals the chart point")
        return v[..., :n] / den[..., None]
    v = chart.rotate([Q(x) for x in u])
    den = 1 - v[n]
    if den == 0:
        raise ChartPole("point equals the chart point")
    return [x / den for x in v[:n]]


def inverse_stereographic(y, chart):
    if isinstance(y, np.ndarray) and y.dtype != object:
        s = (y * y).sum(axis=-1, keepdims=True)
        v = np.concatenate([2 * y, s - 1], axis=-1) / (s + 1)
        return chart.unrotate(v)
    y = [Q(x) for x in y]
    s = sum((x * x for x in y), mpq(0))
    v = [2 * x / (s + 1) for x in y] + [(s - 1) / (s + 1)]
    return chart.unrotate(v)


def choose_chart(samples, n=None, margin=CHART_MARGIN, prefer=()):
    """First chart (preferred ones, then by index with + before -) at distance >= margin from all samples."""
    S = np.atleast_2d(np.asarray(samples, dtype=float))
    if S.size == 0:
        raise ValueError("no samples")
    n = S.shape[1] - 1 if n is None else n
    seen = set()
    for c in list(prefer) + all_charts(n):
        if c in seen:
            continue
        seen.add(c)
        if np.linalg.norm(S - c.point, axis=1).min() >= margin:
            return c
    raise NoChartFound("every signed basis point is within the margin of the image",
                       spread=float(np.linalg.norm(S - S.mean(axis=0), axis=1).max()))


class SphereOracle:
    """Vectorized map (N, m) -> (N, n+1) unit vectors."""

    def __init__(self, n, fn, name="oracle"):
        self.n, self.fn, self.name = n, fn, name

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.asarray(self.fn(X), dtype=float).reshape(len(X), self.n + 1)


@dataclass
class SpherePiece:
    """Chart-side representation y = Y / S on one simplex."""
    chart: ChartPoint
    Y: list
    S: MultiPoly
    report: dict = dc_field(default_factory=dict)

    @property
    def n(self):
        return self.chart.n

    @property
    def num_vars(self):
        return self.S.num_vars

    def ambient(self):
        """Ambient numerators N and denominator D with g = N / D."""
        S = self.S
        s2 = sum((y * y for y in self.Y), MultiPoly.constant(S.num_vars, 0))
        v = [2 * y * S for y in self.Y] + [s2 - S * S]
        return self.chart.unrotate(v), s2 + S * S

    def ambient_fn(self):
        N, D = self.ambient()
        return RegularFnVector(N, D, None, f"sphere chart {self.chart!r}")

    def eval_float(self, T):
        T = np.atleast_2d(np.asarray(T, dtype=float))
        Svals = self.S.eval_float(T)
        Yv = np.stack([y.eval_float(T) for y in self.Y], axis=-1) / Svals[:, None]
        return inverse_stereographic(Yv, self.chart)

    def unit_norm_exact(self):
        N, D = self.ambient()
        return sum((x * x for x in N), MultiPoly.constant(D.num_vars, 0)) == D * D

    def restrict(self, d, k):
        return SpherePiece(self.chart, [restrict_facet(y, d, k) for y in self.Y], restrict_facet(self.S, d, k))

    def same_map(self, other):
        """Exact equality of the ambient rational maps."""
        N1, D1 = self.ambient()
        N2, D2 = other.ambient()
        return all(a * D2 == b * D1 for a, b in zip(N1, N2))

    def to_json(self):
        return {"chart": self.chart.to_json(), "Y": [y.to_json() for y in self.Y], "S": self.S.to_json()}

    @classmethod
    def from_json(cls, obj, n):
        c = ChartPoint(n, obj["chart"]["index"], obj["chart"]["sign"])
        return cls(c, [MultiPoly.from_json(y) for y in obj["Y"]], MultiPoly.from_json(obj["S"]))


def chart_data(piece, chart):
    """Facet data for `chart`: polynomial if the facet uses the same chart, rational otherwise."""
    if piece.chart == chart:
        return RegularFnVector(list(piece.Y), piece.S, None, "chart")
    N, D = piece.ambient()
    v = chart.rotate(N)
    return RegularFnVector(v[:chart.n], D - v[chart.n], None, "chart transition")


def _vertex_piece(simplex, f, margin, prefer):
    X = simplex.to_ambient_float(np.zeros((1, 0)))
    u = f(X)
    c = choose_chart(u, f.n, margin, prefer)
    y = stereographic(u, c)[0]
    Y = [MultiPoly.constant(0, snap(v)) for v in y]
    piece = SpherePiece(c, Y, MultiPoly.constant(0, 1))
    err = float(np.linalg.norm(piece.eval_float(np.zeros((1, 0))) - u, axis=1).max())
    piece.report = {"degree": 0, "achieved": err, "chart_margin": float(np.linalg.norm(u - c.point, axis=1).min())}
    return piece


def approximate_sphere_simplex(simplex, f, facet_data, eps, config=None, margin=CHART_MARGIN, prefer=(),
                               sample_pitch=8):
    """Boundary-exact approximation of a sphere-valued map on one simplex.

    facet_data: list of SpherePiece in facet parameters (indexed by opposite
    vertex) or None.  Charts used by the facets are tried first so that the
    boundary data stays polynomial when possible.
    """
    cfg = config or FitConfig()
    d = simplex.dim
    if d == 0:
        return _vertex_piece(simplex, f, margin, prefer)
    _, T, X = simplex.lattice(sample_pitch)
    U = f(X)
    pref = list(prefer)
    if facet_data is not None:
        pref += sorted({p.chart for p in facet_data}, key=lambda c: c.key())
    face_vals = []
    if facet_data is not None:
        from .simplicial import local_lattice
        for p in facet_data:
            Tf = local_lattice(d - 1, sample_pitch)[1] if d > 1 else np.zeros((1, 0))
            face_vals.append(p.eval_float(Tf))
    candidates = [c for c in pref + all_charts(f.n)]
    chart = None
    tried = set()
    for c in candidates:
        if c in tried:
            continue
        tried.add(c)
        if np.linalg.norm(U - c.point, axis=1).min() < margin:
            continue
        if face_vals and min(np.linalg.norm(v - c.point, axis=1).min() for v in face_vals) < margin - eps:
            continue
        chart = c
        break
    if chart is None:
        raise NoChartFound("no chart clears the image and the boundary data", simplex=simplex.index)

    def chart_oracle(Xa):
        return stereographic(f(Xa), chart)

    def metric(Xa, G):
        return np.linalg.norm(inverse_stereographic(G, chart) - f(Xa), axis=1)

    data = None if facet_data is None else [chart_data(p, chart) for p in facet_data]
    g, rep = approximate_on_simplex(simplex, chart_oracle, data, eps, cfg, metric=metric)
    den = g.denominator
    piece = SpherePiece(chart, list(g.numerators), den)
    _, Tc, _ = simplex.lattice(cfg.cert_pitch)
    G = piece.eval_float(Tc)
    report = rep.to_json()
    report["chart"] = chart.to_json()
    report["chart_margin"] = float(np.linalg.norm(G - chart.point, axis=1).min())
    piece.report = report
    return piece
