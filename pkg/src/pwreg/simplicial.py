"""Geometric simplicial complexes with exact rational coordinates.

Simplices are stored as sorted tuples of global vertex indices; the local
parameters of a simplex with vertices (v0, ..., vd) are t in R^d with
x = v0 + sum t_i (v_i - v0), so t_i is the barycentric coordinate of v_i.
Facet k of a simplex is the face opposite its k-th vertex.
"""
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from itertools import combinations, permutations

import numpy as np
from gmpy2 import mpq
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import exactla
from .errors import AffineDependence, BadIntersection, ComponentSplit, OutsideDomain, RefinementTooLarge
from .polyalg import ZERO, Q, fmt_q


def simplex_id(idx):
    return "-".join(str(i) for i in idx)


def parse_simplex_id(s):
    return tuple(int(v) for v in s.split("-"))


@lru_cache(maxsize=None)
def lattice_counts(d, pitch):
    """Integer vectors (k_0..k_d) with sum `pitch`, in a fixed order."""
    out = []

    def rec(prefix, left, slots):
        if slots == 1:
            out.append(tuple(prefix) + (left,))
            return
        for k in range(left, -1, -1):
            rec(prefix + [k], left - k, slots - 1)

    rec([], pitch, d + 1)
    return tuple(out)


@lru_cache(maxsize=64)
def local_lattice(d, pitch):
    """Barycentric lattice in local parameters: (exact tuple of tuples, read-only float array)."""
    counts = lattice_counts(d, pitch)
    exact = tuple(tuple(mpq(k, pitch) for k in c[1:]) for c in counts)
    flt = np.array([[k / pitch for k in c[1:]] for c in counts], dtype=float).reshape(len(counts), d)
    flt.setflags(write=False)
    return exact, flt


class Simplex:
    """A closed geometric simplex with exact rational vertices."""

    def __init__(self, vertices, index=None):
        self.vertices = tuple(tuple(Q(c) for c in v) for v in vertices)
        self.index = tuple(index) if index is not None else None
        self.dim = len(self.vertices) - 1
        self.ambient_dim = len(self.vertices[0])
        if self.dim > self.ambient_dim:
            raise AffineDependence(f"{self.dim + 1} points in R^{self.ambient_dim}")
        v0 = self.vertices[0]
        self.edges = [[a - b for a, b in zip(v, v0)] for v in self.vertices[1:]]
        if self.dim and exactla.rank(self.edges) < self.dim:
            raise AffineDependence(f"degenerate simplex {self.vertices}")
        self._proj = None

    def __repr__(self):
        return f"Simplex({self.index or self.vertices})"

    @property
    def id(self):
        return simplex_id(self.index) if self.index is not None else None

    def facet(self, k):
        verts = self.vertices[:k] + self.vertices[k + 1:]
        idx = self.index[:k] + self.index[k + 1:] if self.index is not None else None
        return Simplex(verts, idx)

    def facets(self):
        return [self.facet(k) for k in range(self.dim + 1)]

    def barycenter(self):
        n = self.dim + 1
        return tuple(sum(c) / n for c in zip(*self.vertices))

    def to_ambient(self, t):
        v0 = self.vertices[0]
        return tuple(v0[j] + sum((Q(ti) * e[j] for ti, e in zip(t, self.edges)), mpq(0))
                     for j in range(self.ambient_dim))

    def to_ambient_float(self, T):
        T = np.asarray(T, dtype=float)
        v0 = np.array([float(c) for c in self.vertices[0]])
        if self.dim == 0:
            return np.tile(v0, (max(len(T), 1) if T.ndim > 1 else 1, 1))
        T = T.reshape(-1, self.dim)
        E = np.array([[float(c) for c in e] for e in self.edges]).reshape(self.dim, self.ambient_dim)
        return v0 + T @ E

    def _projector(self):
        if self._proj is None:
            E = self.edges
            if self.dim == 0:
                self._proj = []
            else:
                G = exactla.matmul(E, exactla.transpose(E))
                self._proj = exactla.matmul(exactla.inverse(G), E)
        return self._proj

    def to_local(self, x):
        """Exact local parameters of a point of the affine hull (least squares otherwise)."""
        v0 = self.vertices[0]
        dx = [Q(a) - b for a, b in zip(x, v0)]
        return tuple(sum((p * c for p, c in zip(row, dx)), mpq(0)) for row in self._projector())

    def to_local_float(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.ambient_dim)
        if self.dim == 0:
            return np.zeros((X.shape[0], 0))
        P = np.array([[float(c) for c in r] for r in self._projector()])
        v0 = np.array([float(c) for c in self.vertices[0]])
        return (X - v0) @ P.T

    def barycentric(self, x):
        t = self.to_local(x)
        return (1 - sum(t, mpq(0)),) + t

    def contains(self, x):
        """Exact membership for rational points."""
        x = tuple(Q(c) for c in x)
        if self.to_ambient(self.to_local(x)) != x:
            return False
        return all(l >= 0 for l in self.barycentric(x))

    def contains_float(self, X, tol=1e-9):
        X = np.asarray(X, dtype=float).reshape(-1, self.ambient_dim)
        T = self.to_local_float(X)
        back = self.to_ambient_float(T)
        lam = np.column_stack([1 - T.sum(axis=1), T])
        scale = max(1.0, float(np.abs(back).max()) if back.size else 1.0)
        return (np.abs(back - X).max(axis=1) <= tol * scale) & (lam.min(axis=1) >= -tol)

    def lattice(self, pitch):
        """(exact local points, float local points, float ambient points)."""
        ex, fl = local_lattice(self.dim, pitch)
        return ex, fl, self.to_ambient_float(fl)

    def diameter(self):
        pts = np.array([[float(c) for c in v] for v in self.vertices])
        return max((float(np.linalg.norm(a - b)) for a, b in combinations(pts, 2)), default=0.0)


@dataclass(frozen=True)
class AffineHull:
    """Affine span as base + span(basis), with exact normal forms a.x + b = 0."""

    base_point: tuple
    basis: tuple
    normal_forms: tuple

    @property
    def dim(self):
        return len(self.basis)

    @cached_property
    def key(self):
        """Canonical description (rref of the normal forms), used for equality."""
        rows = [list(a) + [b] for a, b in self.normal_forms]
        R, _ = exactla.rref(rows)
        return tuple(tuple(r) for r in R)

    @cached_property
    def float_forms(self):
        """Unit-normalized float forms (A, b); only for prefiltering exact tests."""
        m = len(self.base_point)
        if not self.normal_forms:
            return np.zeros((0, m)), np.zeros(0)
        A = np.array([[float(c) for c in a] for a, _ in self.normal_forms]).reshape(-1, m)
        b = np.array([float(c) for _, c in self.normal_forms])
        scale = np.linalg.norm(A, axis=1)
        return A / scale[:, None], b / scale

    def float_distance_bound(self, X):
        """Largest |form| at each point: at most the distance from the point to the hull."""
        A, b = self.float_forms
        if not len(b):
            return np.zeros(len(X))
        return np.abs(np.asarray(X, dtype=float) @ A.T + b).max(axis=1)

    def evaluate_forms(self, x):
        x = [xi if type(xi) is type(ZERO) else Q(xi) for xi in x]
        return [sum((ai * xi for ai, xi in zip(a, x)), b) for a, b in self.normal_forms]

    def contains_point(self, x):
        return all(v == 0 for v in self.evaluate_forms(x))

    def contains_hull(self, other):
        if not self.contains_point(other.base_point):
            return False
        return all(sum((ai * bi for ai, bi in zip(a, vec)), mpq(0)) == 0
                   for a, _ in self.normal_forms for vec in other.basis)

    def equations(self):
        """Human-readable hull equations."""
        out = []
        for a, b in self.normal_forms:
            terms = [f"{fmt_q(ai)}*x{i}" for i, ai in enumerate(a) if ai]
            if b:
                terms.append(fmt_q(b))
            out.append(" + ".join(terms) + " = 0")
        return out or ["(all of R^m)"]

    def to_json(self):
        return {"base": [fmt_q(c) for c in self.base_point],
                "basis": [[fmt_q(c) for c in v] for v in self.basis],
                "normal_forms": [{"a": [fmt_q(c) for c in a], "b": fmt_q(b)} for a, b in self.normal_forms]}


def full_hull(m):
    return AffineHull(tuple(mpq(0) for _ in range(m)),
                      tuple(tuple(mpq(int(i == j)) for j in range(m)) for i in range(m)), ())


def affine_hull(simplex):
    v0 = simplex.vertices[0]
    m = simplex.ambient_dim
    if simplex.dim == m:
        return full_hull(m) if m else AffineHull(v0, (), ())
    ann = exactla.nullspace(simplex.edges, m)
    R, _ = exactla.rref(ann)
    forms = tuple((tuple(a), -sum((ai * vi for ai, vi in zip(a, v0)), mpq(0))) for a in R)
    return AffineHull(v0, tuple(tuple(e) for e in simplex.edges), forms)


class SimplicialComplex:
    """Finite geometric complex: vertex coordinates plus face-closed index tuples."""

    def __init__(self, ambient_dim, vertices, simplices):
        self.ambient_dim = ambient_dim
        self.vertices = [tuple(Q(c) for c in v) for v in vertices]
        closed = set()
        for s in simplices:
            s = tuple(sorted(s))
            for k in range(1, len(s) + 1):
                closed.update(combinations(s, k))
        self.simplices = sorted(closed, key=lambda s: (len(s), s))
        self._simplex_cache = {}

    def __len__(self):
        return len(self.simplices)

    def __contains__(self, idx):
        return tuple(sorted(idx)) in self._set

    @property
    def _set(self):
        if not hasattr(self, "_sset"):
            self._sset = set(self.simplices)
        return self._sset

    @property
    def dim(self):
        return max((len(s) - 1 for s in self.simplices), default=-1)

    def simplex(self, idx):
        idx = tuple(idx)
        if idx not in self._simplex_cache:
            self._simplex_cache[idx] = Simplex([self.vertices[i] for i in idx], idx)
        return self._simplex_cache[idx]

    def of_dim(self, d):
        return [s for s in self.simplices if len(s) == d + 1]

    def maximal(self):
        """Simplices that are not a proper face of another simplex."""
        faces = set()
        for s in self.simplices:
            for k in range(1, len(s)):
                faces.update(combinations(s, k))
        return [s for s in self.simplices if s not in faces]

    def used_vertices(self):
        return sorted({i for s in self.simplices for i in s})

    def edge_graph(self):
        return [s for s in self.simplices if len(s) == 2]

    def locate(self, x, tol=1e-9):
        """A maximal simplex containing x (exact for rational, tolerant for float points)."""
        is_float = any(isinstance(c, (float, np.floating)) for c in x)
        for s in self.maximal():
            sx = self.simplex(s)
            if is_float:
                if sx.contains_float(np.array(x, dtype=float), tol)[0]:
                    return s
            elif sx.contains(x):
                return s
        raise OutsideDomain(f"{x} is not in |K|")

    def to_json(self):
        used = self.used_vertices()
        remap = {old: new for new, old in enumerate(used)}
        return {"ambient_dim": self.ambient_dim,
                "vertices": [[fmt_q(c) for c in self.vertices[i]] for i in used],
                "simplices": [[remap[i] for i in s] for s in self.maximal()]}

    @classmethod
    def from_json(cls, obj, validate=True):
        verts = [tuple(Q(c) for c in v) for v in obj["vertices"]]
        m = int(obj.get("ambient_dim", len(verts[0]) if verts else 0))
        simplices = [tuple(sorted(int(i) for i in s)) for s in obj["simplices"]]
        for s in simplices:
            if len(set(s)) != len(s) or any(not 0 <= i < len(verts) for i in s):
                raise ValueError(f"bad simplex {s}")
        K = cls(m, verts, simplices)
        if validate:
            _validate(K)
        return K


def _intersection_exceeds_shared(a, b):
    """True iff conv(a) meets conv(b) outside conv(shared vertices)."""
    shared = set(a.vertices) & set(b.vertices)
    na, nb, m = len(a.vertices), len(b.vertices), a.ambient_dim
    A = []
    for j in range(m):
        A.append([v[j] for v in a.vertices] + [-w[j] for w in b.vertices])
    A.append([1] * na + [0] * nb)
    A.append([0] * na + [1] * nb)
    rhs = [0] * m + [1, 1]
    c = [0 if v in shared else 1 for v in a.vertices] + [0] * nb
    res = exactla.lp_max(c, A, rhs)
    if res is None:
        return False
    value, x = res
    if value > 0:
        return True
    # symmetric side
    c2 = [0] * na + [0 if w in shared else 1 for w in b.vertices]
    value2, _ = exactla.lp_max(c2, A, rhs)
    return value2 > 0


def build_complex(simplex_list, ambient_dim=None, validate=True):
    """Face closure of a list of simplices given by vertex coordinate tuples."""
    verts = []
    index = {}
    simplices = []
    for s in simplex_list:
        idx = []
        for v in s:
            v = tuple(Q(c) for c in v)
            if v not in index:
                index[v] = len(verts)
                verts.append(v)
            idx.append(index[v])
        if len(set(idx)) != len(idx):
            raise AffineDependence(f"repeated vertex in {s}")
        simplices.append(tuple(sorted(idx)))
    m = ambient_dim if ambient_dim is not None else (len(verts[0]) if verts else 0)
    K = SimplicialComplex(m, verts, simplices)
    if validate:
        _validate(K)
    return K


def _validate(K):
    """Raise AffineDependence or BadIntersection if K is not a geometric complex."""
    top = K.maximal()
    for s in top:
        K.simplex(s)  # raises AffineDependence
    boxes = {}
    for s in top:
        pts = [K.vertices[i] for i in s]
        boxes[s] = ([min(c) for c in zip(*pts)], [max(c) for c in zip(*pts)])
    for s, t in combinations(top, 2):
        (lo1, hi1), (lo2, hi2) = boxes[s], boxes[t]
        if any(h1 < l2 or h2 < l1 for l1, h1, l2, h2 in zip(lo1, hi1, lo2, hi2)):
            continue
        if _intersection_exceeds_shared(K.simplex(s), K.simplex(t)):
            raise BadIntersection(f"simplices {s} and {t} meet outside a common face")


def skeleton(K, n):
    keep = [s for s in K.simplices if len(s) - 1 <= n]
    return SimplicialComplex(K.ambient_dim, K.vertices, keep)


def barycentric_subdivide(K, iterations=1):
    for _ in range(iterations):
        K = _subdivide_once(K)
    return K


def _subdivide_once(K):
    faces = K.simplices  # sorted by (dim, tuple): deterministic vertex numbering
    new_index = {f: i for i, f in enumerate(faces)}
    new_verts = [K.simplex(f).barycenter() for f in faces]
    tops = []
    for s in K.maximal():
        for perm in permutations(s):
            chain = [tuple(sorted(perm[:k])) for k in range(1, len(perm) + 1)]
            tops.append(tuple(sorted(new_index[c] for c in chain)))
    return SimplicialComplex(K.ambient_dim, new_verts, tops)


@dataclass
class Filtration:
    """Descending chain V_0 ⊇ ... ⊇ V_{m+1} = ∅; each level a list of hulls."""

    ambient_dim: int
    levels: list

    def to_json(self):
        return {"ambient_dim": self.ambient_dim,
                "levels": [[h.to_json() for h in lvl] for lvl in self.levels]}


@dataclass
class Stratification:
    """Strata positive \\ negative, each side a union of hulls."""

    ambient_dim: int
    strata: list
    filtration: Filtration = field(default=None, repr=False)

    def locate(self, x):
        """Index of the unique stratum containing x."""
        hits = [i for i, (pos, neg) in enumerate(self.strata)
                if any(h.contains_point(x) for h in pos) and not any(h.contains_point(x) for h in neg)]
        if len(hits) != 1:
            raise ValueError(f"point {x} lies in {len(hits)} strata")
        return hits[0]

    def to_json(self):
        return {"ambient_dim": self.ambient_dim,
                "strata": [{"positive": [h.to_json() for h in pos], "negative": [h.to_json() for h in neg]}
                           for pos, neg in self.strata]}

    def describe(self):
        lines = []
        for i, (pos, neg) in enumerate(self.strata):
            p = "; ".join(" & ".join(h.equations()) for h in pos) or "∅"
            n = "; ".join(" & ".join(h.equations()) for h in neg) or "∅"
            lines.append(f"S{i}: [{p}] minus [{n}]")
        return lines


def _dedupe(hulls):
    """Distinct hulls, dropping any contained in a larger one (same union)."""
    seen = {}
    for h in hulls:
        seen.setdefault(h.key, h)
    uniq = [seen[k] for k in sorted(seen, key=lambda k: (len(k), k))]
    if len(uniq) < 32:
        return [h for h in uniq if not any(g.dim > h.dim and g.contains_hull(h) for g in uniq)]
    # g can contain h only if h's base point is (numerically) on g
    bases = np.array([[float(c) for c in h.base_point] for h in uniq]).reshape(len(uniq), -1)
    maybe = np.array([g.float_distance_bound(bases) <= 1e-7 for g in uniq])
    return [h for j, h in enumerate(uniq)
            if not any(g.dim > h.dim and g.contains_hull(h) for g in (uniq[i] for i in np.flatnonzero(maybe[:, j])))]


def induced_filtration(K):
    m = K.ambient_dim
    hulls = {s: affine_hull(K.simplex(s)) for s in K.simplices}
    levels = [[full_hull(m)]]
    for d in range(1, m + 1):
        levels.append(_dedupe([h for s, h in hulls.items() if len(s) - 1 <= m - d]))
    levels.append([])
    return Filtration(m, levels)


def filtration_to_stratification(F):
    strata = [(list(F.levels[i]), list(F.levels[i + 1])) for i in range(len(F.levels) - 1)]
    return Stratification(F.ambient_dim, strata, F)


def stratification_to_filtration(S):
    if S.filtration is None:
        raise ValueError("only stratifications built from a filtration can be inverted")
    return S.filtration


def induced_stratification(K):
    return filtration_to_stratification(induced_filtration(K))


def hull_from_forms(rows, m):
    """The flat {x : a.x + b = 0} for rational rows (a, b); None when empty."""
    R, piv = exactla.rref([list(a) + [b] for a, b in rows])
    if m in piv:
        return None
    base = [mpq(0)] * m
    for r, p in zip(R, piv):
        base[p] = -r[m]
    A = [r[:m] for r in R]
    basis = exactla.nullspace(A, m) if A else [[mpq(int(i == j)) for j in range(m)] for i in range(m)]
    return AffineHull(tuple(base), tuple(tuple(v) for v in basis), tuple((tuple(r[:m]), r[m]) for r in R))


def intersect_hulls(g, h):
    if not g.normal_forms:
        return h
    if not h.normal_forms:
        return g
    return hull_from_forms(list(g.normal_forms) + list(h.normal_forms), len(g.base_point))


def hull_meets_simplex(h, sx):
    """Exact test that the flat h meets the closed simplex sx."""
    vals = [h.evaluate_forms(v) for v in sx.vertices]
    for k in range(len(h.normal_forms)):
        col = [row[k] for row in vals]
        if all(c > 0 for c in col) or all(c < 0 for c in col):
            return False
    if len(h.normal_forms) <= 1:
        return True
    rows = [[mpq(1)] * len(vals)] + [[row[k] for row in vals] for k in range(len(h.normal_forms))]
    return exactla.lp_max([0] * len(vals), rows, [1] + [0] * len(h.normal_forms)) is not None


REFINE_BUDGET = 5_000_000


def refined_filtration(K, budget=REFINE_BUDGET):
    """Hulls of K closed under intersection wherever the intersection meets |K|.

    Level d collects every flat of dimension <= m - d.  When the hull of one
    simplex crosses another simplex transversally inside |K|, the plain
    filtration can join pieces of two simplices into one stratum component;
    the crossing flats cut those components apart.  Equals the plain
    filtration when no such crossing exists.  Raises RefinementTooLarge once
    more than `budget` candidate pairs would be examined.
    """
    m = K.ambient_dim
    base = induced_filtration(K)
    flats = {}
    for lvl in base.levels[1:-1]:
        for h in lvl:
            flats.setdefault(h.key, h)
    cells = [K.simplex(s) for s in K.maximal()]
    if not cells:
        return base
    D = max(sx.dim for sx in cells)
    # pad every cell to D + 1 vertices by repeating its first vertex
    V = np.array([[[float(c) for c in v] for v in sx.vertices + (sx.vertices[0],) * (D - sx.dim)] for sx in cells])

    def cells_meeting(h):
        A, b = h.float_forms
        if len(b):
            F = V @ A.T + b
            miss = ((F > 1e-7).all(axis=1) | (F < -1e-7).all(axis=1)).any(axis=1)
            cand = np.flatnonzero(~miss)
        else:
            cand = range(len(cells))
        return [int(ci) for ci in cand if hull_meets_simplex(h, cells[ci])]

    # a point flat never yields a new intersection, so only flats of dim >= 1 are paired.
    # In a pure m-dimensional complex every face hull is an intersection of facet
    # hyperplanes, so intersecting with hyperplanes alone reaches the same closure.
    hyper_only = all(sx.dim == m for sx in cells)
    local = [[] for _ in cells]
    fresh = [[] for _ in cells]
    for k, h in flats.items():
        if h.dim >= 1:
            for ci in cells_meeting(h):
                local[ci].append(k)
                fresh[ci].append(k)
    pair = {}

    def meet(a, b):
        if (a, b) not in pair:
            g, h = flats[a], flats[b]
            x = None
            if not (g.contains_hull(h) or h.contains_hull(g)):
                x = intersect_hulls(g, h)
            pair[a, b] = pair[b, a] = x
        return pair[a, b]

    work = 0
    while any(fresh):
        work += sum(len(f) * len(loc) for f, loc in zip(fresh, local))
        if work > budget:
            raise RefinementTooLarge(f"more than {budget} hull pairs to intersect", budget=budget)
        found = {}
        for ci, sx in enumerate(cells):
            for a in fresh[ci]:
                for b in local[ci]:
                    if a == b or (hyper_only and flats[a].dim != m - 1 and flats[b].dim != m - 1):
                        continue
                    x = meet(a, b)
                    if x is None or x.key in flats or x.key in found:
                        continue
                    if hull_meets_simplex(x, sx):
                        found[x.key] = x
        flats.update(found)
        fresh = [[] for _ in cells]
        for k, h in found.items():
            if h.dim >= 1:
                for ci in cells_meeting(h):
                    fresh[ci].append(k)
        for ci in range(len(cells)):
            local[ci].extend(fresh[ci])
    hulls = list(flats.values())
    levels = [[full_hull(m)]]
    for d in range(1, m + 1):
        levels.append(_dedupe([h for h in hulls if h.dim <= m - d]))
    levels.append([])
    return Filtration(m, levels)


def refined_stratification(K, budget=REFINE_BUDGET):
    return filtration_to_stratification(refined_filtration(K, budget))


def complex_samples(K, pitch):
    """Exact lattice points of |K| (deduplicated) with their float coordinates."""
    seen = {}
    for s in K.maximal():
        sx = K.simplex(s)
        ex, _ = local_lattice(sx.dim, pitch)
        for t in ex:
            x = sx.to_ambient(t)
            seen.setdefault(x, None)
    pts = list(seen)
    flt = np.array([[float(c) for c in p] for p in pts]).reshape(len(pts), K.ambient_dim)
    return pts, flt


def carrier(K, x, candidates=None):
    """The smallest simplex of K containing the rational point x.

    candidates, if given, restricts the search to these maximal simplices.
    """
    for s in (K.maximal() if candidates is None else candidates):
        sx = K.simplex(s)
        if sx.contains(x):
            lam = sx.barycentric(x)
            return tuple(i for i, l in zip(s, lam) if l != 0)
    raise OutsideDomain(f"{x} is not in |K|")


def component_containment_check(points, K, S, pitch, raise_on_split=True):
    """Group sample points into stratum components and check each lies in one simplex.

    Two samples are adjacent when they are within h = 2 * (max edge length /
    pitch), their carriers span a simplex of K, one hull of their level
    contains both, and the segment misses every hull of the next level; the
    segment then lies in |K| ∩ stratum.
    """
    pts = [tuple(Q(c) for c in p) for p in points]
    levels = S.filtration.levels if S.filtration is not None else [pos for pos, _ in S.strata] + [[]]
    n = len(pts)
    report = {"num_points": n, "components": [], "splits": 0, "pitch": pitch}
    if n == 0 or not K.simplices:
        return report
    all_hulls = []
    hull_pos = {}
    for lvl in levels:
        for h in lvl:
            if h.key not in hull_pos:
                hull_pos[h.key] = len(all_hulls)
                all_hulls.append(h)
    level_members = [{hull_pos[h.key] for h in lvl} for lvl in levels]
    XYZ = np.array([[float(c) for c in p] for p in pts]).reshape(n, K.ambient_dim)
    edge_len = max((K.simplex(e).diameter() for e in K.edge_graph()), default=1.0)
    h = 2.0 * edge_len / pitch * (1 + 1e-9)
    near = _near_hulls(XYZ, all_hulls, h)
    close = _near_hulls(XYZ, all_hulls, 1e-9)
    inside = [{k for k in close[i] if all_hulls[k].contains_point(pts[i])} for i in range(n)]
    label = [max(li for li, mem in enumerate(level_members) if inside[i] & mem) for i in range(n)]
    carriers = _carriers(K, pts, XYZ)
    values = {}

    def form_values(i, k):
        if (i, k) not in values:
            values[i, k] = all_hulls[k].evaluate_forms(pts[i])
        return values[i, k]

    pairs = cKDTree(XYZ).query_pairs(h, output_type="ndarray") if n > 1 else np.zeros((0, 2), int)
    rows, cols = [], []
    for i, j in pairs:
        li = label[i]
        if label[j] != li:
            continue
        if tuple(sorted(set(carriers[i]) | set(carriers[j]))) not in K:
            continue
        if not inside[i] & inside[j] & level_members[li]:
            continue
        # a hull the segment meets passes within h of both ends
        nxt = level_members[li + 1] & near[i] & near[j] if li + 1 < len(level_members) else ()
        if any(_segment_meets(form_values(i, k), form_values(j, k)) for k in nxt):
            continue
        rows.append(i)
        cols.append(j)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, comp = connected_components(graph, directed=False)
    for c in range(ncomp):
        members = np.flatnonzero(comp == c)
        verts = tuple(sorted(set().union(*(carriers[i] for i in members))))
        ok = verts in K
        entry = {"stratum": label[members[0]], "size": int(len(members)),
                 "simplex": simplex_id(verts) if ok else None, "members": members.tolist()}
        report["components"].append(entry)
        if not ok:
            report["splits"] += 1
            if raise_on_split:
                raise ComponentSplit(f"component of stratum {entry['stratum']} spans vertices {verts}",
                                     component=entry["size"])
    report["labels"] = label
    report["carriers"] = [simplex_id(c) for c in carriers]
    return report


def _near_hulls(X, hulls, radius, chunk=512):
    """For each point, the hulls whose unit-normalized forms are all at most radius in size there.

    This contains every hull within distance radius of the point.
    """
    m = X.shape[1]
    A, b, owner = [], [], []
    always = set()
    for k, hl in enumerate(hulls):
        if not hl.normal_forms:
            always.add(k)
        for a, c in hl.normal_forms:
            a = np.array([float(v) for v in a])
            scale = np.linalg.norm(a)
            A.append(a / scale)
            b.append(float(c) / scale)
            owner.append(k)
    if not A:
        return [set(always) for _ in range(len(X))]
    A = np.array(A).reshape(-1, m)
    b = np.array(b)
    owner = np.array(owner)
    order = np.argsort(owner, kind="stable")
    A, b, owner = A[order], b[order], owner[order]
    starts = np.flatnonzero(np.r_[True, owner[1:] != owner[:-1]])
    ids = owner[starts]
    tol = radius * (1 + 1e-6) + 1e-9
    out = []
    for lo in range(0, len(X), chunk):
        V = np.abs(X[lo:lo + chunk] @ A.T + b) <= tol
        ok = np.minimum.reduceat(V.astype(np.uint8), starts, axis=1).astype(bool)
        for row in ok:
            out.append(set(ids[row].tolist()) | always)
    return out


def _carriers(K, pts, XYZ):
    # a loose float test picks candidate simplices; the exact test decides
    near = [(s, K.simplex(s).contains_float(XYZ, 1e-7)) for s in K.maximal()]
    out = []
    for i, p in enumerate(pts):
        cand = [s for s, mask in near if mask[i]]
        try:
            out.append(carrier(K, p, cand))
        except OutsideDomain:
            out.append(carrier(K, p))
    return out


def _segment_meets(fa, fb):
    """Does the segment from a to b meet {all forms = 0}?  fa, fb: form values at a, b."""
    s = None
    for a, b in zip(fa, fb):
        beta = b - a
        if beta == 0:
            if a != 0:
                return False
            continue
        sk = -a / beta
        if sk < 0 or sk > 1:
            return False
        if s is None:
            s = sk
        elif sk != s:
            return False
    return True
