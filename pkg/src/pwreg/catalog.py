"""Built-in complexes and test oracles, plus the piecewise-linear table oracle.

Oracle specs are strings ``name`` or ``name:param``; parametric families
are seeded explicitly so reruns are bit-identical.
"""
import json

import numpy as np

from .errors import BadInput
from .fmatrix import field_dim
from .grassmann import GrassmannOracle, orthonormal_frame, span_projections
from .pipeline import Target
from .polyalg import Q
from .simplicial import SimplicialComplex, build_complex
from .sphere import SphereOracle


def _pts(rows):
    return [tuple(Q(c) for c in r) for r in rows]


def builtin_complex(name):
    """interval, triangle, triangle-boundary, tetrahedron, four-triangles."""
    if name == "interval":
        V = _pts([[0], [1]])
        return build_complex([[V[0], V[1]]])
    if name == "triangle":
        V = _pts([[0, 0], [1, 0], [0, 1]])
        return build_complex([V])
    if name == "triangle-boundary":
        V = _pts([[0, 0], [1, 0], [0, 1]])
        return build_complex([[V[0], V[1]], [V[1], V[2]], [V[2], V[0]]])
    if name == "tetrahedron":
        V = _pts([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
        return build_complex([V])
    if name == "four-triangles":
        # a square split through its center
        V = _pts([[0, 0], [1, 0], [1, 1], [0, 1], ["1/2", "1/2"]])
        c = V[4]
        return build_complex([[V[0], V[1], c], [V[1], V[2], c], [V[2], V[3], c], [V[3], V[0], c]])
    raise BadInput(f"unknown built-in complex {name!r}")


def load_complex(spec):
    """'builtin:<name>' or a JSON file {"ambient_dim", "vertices", "simplices"}."""
    if spec.startswith("builtin:"):
        return builtin_complex(spec.split(":", 1)[1])
    try:
        with open(spec) as fh:
            obj = json.load(fh)
        return SimplicialComplex.from_json(obj, validate=True)
    except (OSError, ValueError, KeyError, TypeError, IndexError) as exc:
        raise BadInput(f"cannot read complex from {spec!r}: {exc}") from exc


def _centroid(K):
    used = K.used_vertices()
    return np.array([[float(c) for c in K.vertices[i]] for i in used]).mean(axis=0)


def _phase(X, rate):
    return rate * X.sum(axis=1)


def _rotation(target, K, rate):
    if target.kind == "sphere":
        def fn(X):
            th = _phase(X, rate)
            out = np.zeros((len(X), target.n + 1))
            out[:, 0], out[:, 1] = np.cos(th), np.sin(th)
            return out
        return SphereOracle(target.n, fn, "rotation")
    n, r, d = target.n, target.r, field_dim(target.field)
    if n < 2 * r:
        raise BadInput("rotation oracle needs n >= 2r")
    unit = min(1, d - 1)

    def frames(X):
        th = _phase(X, rate)
        A = np.zeros((len(X), n, r, d))
        for j in range(r):
            A[:, j, j, 0] = np.cos(th)
            A[:, j + r, j, unit] = np.sin(th)
        return A
    return GrassmannOracle.from_frames(target.field, n, r, frames, "rotation")


def _radial(target, K):
    c = _centroid(K)
    m = len(c)
    if target.kind == "sphere":
        if m != target.n + 1:
            raise BadInput(f"radial map to S^{target.n} needs ambient dimension {target.n + 1}")

        def fn(X):
            v = X - c
            return v / np.linalg.norm(v, axis=1, keepdims=True)
        return SphereOracle(target.n, fn, "radial")
    if target.r != 1 or target.n != m:
        raise BadInput("radial Grassmann oracle needs r = 1 and n = ambient dimension")

    def frames(X):
        A = np.zeros((len(X), m, 1, field_dim(target.field)))
        A[:, :, 0, 0] = X - c
        return A
    return GrassmannOracle.from_frames(target.field, m, 1, frames, "radial")


def _mobius(target, K):
    if (target.kind, target.field, target.n, target.r) != ("grassmann", "R", 2, 1):
        raise BadInput("mobius oracle needs target grassmann:R:2:1")
    c = _centroid(K)
    if K.ambient_dim == 1:
        lo = min(float(v[0]) for v in K.vertices)
        hi = max(float(v[0]) for v in K.vertices)

        def angle(X):
            return np.pi * (X[:, 0] - lo) / (hi - lo)
    elif K.ambient_dim == 2:
        def angle(X):
            return np.arctan2(X[:, 1] - c[1], X[:, 0] - c[0]) / 2
    else:
        raise BadInput("mobius oracle needs ambient dimension 1 or 2")

    def frames(X):
        th = angle(X)
        return np.stack([np.cos(th), np.sin(th)], axis=-1)[:, :, None, None]
    return GrassmannOracle.from_frames("R", 2, 1, frames, "mobius")


def _constant(target):
    if target.kind == "sphere":
        def fn(X):
            out = np.zeros((len(X), target.n + 1))
            out[:, 0] = 1.0
            return out
        return SphereOracle(target.n, fn, "constant")
    n, r, d = target.n, target.r, field_dim(target.field)

    def frames(X):
        A = np.zeros((len(X), n, r, d))
        for j in range(r):
            A[:, j, j, 0] = 1.0
        return A
    return GrassmannOracle.from_frames(target.field, n, r, frames, "constant")


def _wave(target, K, amp, seed):
    """A smooth map with small image: base point plus seeded trigonometric perturbation."""
    rng = np.random.default_rng(seed)
    m = K.ambient_dim
    if target.kind == "sphere":
        dim = target.n + 1
    else:
        dim = target.n * target.r * field_dim(target.field)
    base = rng.normal(size=dim)
    if target.kind == "grassmann":
        base = base.reshape(target.n, target.r, field_dim(target.field))
        P, _ = span_projections(base[None], target.field)
        base = orthonormal_frame(P[0], target.r, target.field).ravel()
    else:
        base /= np.linalg.norm(base)
    k = 3
    W = rng.normal(size=(k, m)) * 1.5
    ph = rng.uniform(0, 2 * np.pi, size=k)
    C = rng.normal(size=(k, dim)) * amp / np.sqrt(k)

    def raw(X):
        return base + np.sin(X @ W.T + ph) @ C

    if target.kind == "sphere":
        def fn(X):
            v = raw(X)
            return v / np.linalg.norm(v, axis=1, keepdims=True)
        return SphereOracle(target.n, fn, f"wave:{amp}")
    shape = (target.n, target.r, field_dim(target.field))
    return GrassmannOracle.from_frames(target.field, target.n, target.r,
                                       lambda X: raw(X).reshape((len(X),) + shape), f"wave:{amp}")


class PLTable:
    """Values at the vertices of a complex, interpolated linearly on each simplex.

    Sphere values are renormalized; Grassmann values are frames whose span is
    taken after interpolation.
    """

    def __init__(self, K, values, target):
        self.K = K
        self.values = np.asarray(values, dtype=float)
        self.target = target

    def interpolate(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full((len(X), self.values.shape[1]), np.nan)
        done = np.zeros(len(X), dtype=bool)
        for s in self.K.maximal():
            sx = self.K.simplex(s)
            mask = sx.contains_float(X, 1e-9) & ~done
            if not mask.any():
                continue
            T = sx.to_local_float(X[mask])
            lam = np.column_stack([1 - T.sum(axis=1), T])
            out[mask] = lam @ self.values[list(s)]
            done |= mask
        if not done.all():
            raise BadInput("oracle evaluated outside the table's complex")
        return out

    def oracle(self):
        t = self.target
        if t.kind == "sphere":
            def fn(X):
                v = self.interpolate(X)
                return v / np.linalg.norm(v, axis=1, keepdims=True)
            return SphereOracle(t.n, fn, "pl")
        shape = (t.n, t.r, field_dim(t.field))
        return GrassmannOracle.from_frames(t.field, t.n, t.r,
                                           lambda X: self.interpolate(X).reshape((len(X),) + shape), "pl")


def load_pl_table(path, target):
    """JSON {"complex": {...}, "values": [[...] per vertex]}."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
        K = SimplicialComplex.from_json(obj["complex"], validate=True)
        vals = obj["values"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise BadInput(f"cannot read table {path!r}: {exc}") from exc
    want = target.n + 1 if target.kind == "sphere" else target.n * target.r * field_dim(target.field)
    if len(vals) != len(K.vertices) or any(len(v) != want for v in vals):
        raise BadInput(f"table needs {len(K.vertices)} rows of length {want}")
    return PLTable(K, vals, target).oracle()


ORACLES = ("constant", "rotation", "radial", "mobius", "wave", "pl")


def make_oracle(spec, target, K, seed=0):
    """Build an oracle from 'name[:param]' for the given target and domain complex."""
    if isinstance(target, str):
        target = Target.parse(target)
    name, _, param = spec.partition(":")
    try:
        if name == "constant":
            return _constant(target)
        if name == "rotation":
            return _rotation(target, K, float(param) if param else 1.0)
        if name == "radial":
            return _radial(target, K)
        if name == "mobius":
            return _mobius(target, K)
        if name == "wave":
            return _wave(target, K, float(param) if param else 0.3, seed)
        if name == "pl":
            return load_pl_table(param, target)
    except ValueError as exc:
        raise BadInput(f"bad oracle parameter in {spec!r}: {exc}") from exc
    raise BadInput(f"unknown oracle {spec!r}; choose from {', '.join(ORACLES)}")
