"""Skeleton-by-skeleton construction of piecewise regular maps on |K|.

Vertices are snapped exactly onto the target, then each k-simplex is fitted
with its boundary pinned to the already-built (k-1)-faces, using the budget
eps_k = eps * (k + 1) / (d + 1).  Faces of a simplex are indexed by the
opposite vertex, matching the local-parameter conventions of `extend`.
"""
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from itertools import combinations

import numpy as np

from .errors import (CertificateMismatch, DegreeCapExceeded, NoChartFound, OscillationTooLarge, OutsideDomain,
                     PwregError, RankLost, RefinementTooLarge, SubdivisionCapExceeded)
from .extend import FitConfig
from .fmatrix import batch_adjoint, batch_mul
from .grassmann import (TAU_RANK, GrassmannOracle, GrassmannPiece, ProjectionPiece, approximate_grassmann_simplex,
                        batch_distance, frame_margin, polar, snap_frame, span_contains)
from .polyalg import MultiPoly, fmt_q
from .simplicial import (SimplicialComplex, barycentric_subdivide, complex_samples, component_containment_check,
                         induced_stratification, local_lattice, refined_stratification, simplex_id,
                         REFINE_BUDGET)
from .sphere import SphereOracle, SpherePiece, approximate_sphere_simplex, choose_chart

SUBDIVISION_BOUND = 0.5
SUBDIVISION_CAP = 6
OSC_PITCH = 8
GLUE_TOL = 1e-9
RETRYABLE = (DegreeCapExceeded, RankLost, NoChartFound, OscillationTooLarge)


@dataclass(frozen=True)
class Target:
    kind: str
    n: int
    field: str = None
    r: int = None

    @classmethod
    def parse(cls, text):
        """'grassmann:F:n:r' or 'sphere:n'."""
        parts = text.split(":")
        try:
            if parts[0] == "grassmann" and len(parts) == 4 and parts[1] in ("R", "C", "H"):
                n, r = int(parts[2]), int(parts[3])
                if not 0 < r <= n:
                    raise ValueError
                return cls("grassmann", n, parts[1], r)
            if parts[0] == "sphere" and len(parts) == 2 and int(parts[1]) >= 1:
                return cls("sphere", int(parts[1]))
        except ValueError:
            pass
        raise ValueError(f"bad target {text!r}")

    @classmethod
    def of(cls, f):
        if isinstance(f, GrassmannOracle):
            return cls("grassmann", f.n, f.field, f.r)
        if isinstance(f, SphereOracle):
            return cls("sphere", f.n)
        raise TypeError("unknown oracle type")

    def __str__(self):
        if self.kind == "grassmann":
            return f"grassmann:{self.field}:{self.n}:{self.r}"
        return f"sphere:{self.n}"

    def to_json(self):
        out = {"kind": self.kind, "n": self.n}
        if self.kind == "grassmann":
            out.update(field=self.field, r=self.r)
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(obj["kind"], obj["n"], obj.get("field"), obj.get("r"))


# -- target-specific operations ------------------------------------------------

class _Ops:
    """Evaluation, distance and gluing checks for one target type."""

    def __init__(self, target):
        self.target = target
        self.grassmann = target.kind == "grassmann"

    def fit(self, simplex, f, facets, eps, cfg, prefer=()):
        if self.grassmann:
            frames = None if facets is None else [p.frame for p in facets]
            return approximate_grassmann_simplex(simplex, f, frames, eps, cfg)
        return approximate_sphere_simplex(simplex, f, facets, eps, cfg, prefer=prefer)

    def values(self, piece, T):
        if self.grassmann:
            P, _ = piece.eval_proj(T)
            return P
        return piece.eval_float(T)

    def distance(self, A, B):
        if self.grassmann:
            return batch_distance(A, B, self.target.field)
        return np.linalg.norm(A - B, axis=-1)

    def boundary_exact(self, piece, facet_piece, d, k):
        if isinstance(piece, ProjectionPiece):
            return piece.same_on_face(facet_piece, d, k)
        if self.grassmann:
            restricted = piece.restrict(d, k)
            if all(a == b for a, b in zip(restricted.ravel(), facet_piece.frame.ravel())):
                return True
            return self.target.r == 1 and span_contains(facet_piece.frame, restricted, self.target.field)
        return piece.restrict(d, k).same_map(facet_piece)

    def rank_margin(self, piece, T):
        if not isinstance(piece, GrassmannPiece):
            return None
        return frame_margin(piece.eval_frames(T), self.target.field)

    def load(self, obj):
        if self.grassmann:
            if obj.get("mode") == "projection":
                return ProjectionPiece.from_json(obj)
            return GrassmannPiece.from_json(obj)
        return SpherePiece.from_json(obj, self.target.n)


def image_oscillation(simplex, f, pitch=OSC_PITCH):
    """max distance from f(barycenter) over lattice samples (Grassmann or Euclidean)."""
    if simplex.dim == 0:
        return 0.0
    _, _, X = simplex.lattice(pitch)
    bc = np.array([[float(c) for c in simplex.barycenter()]])
    V, V0 = f(X), f(bc)
    if isinstance(f, GrassmannOracle):
        return float(batch_distance(V, np.broadcast_to(V0, V.shape), f.field).max())
    return float(np.linalg.norm(V - V0, axis=1).max())


def max_oscillation(K, f, pitch=OSC_PITCH):
    return max((image_oscillation(K.simplex(s), f, pitch) for s in K.maximal()), default=0.0)


def precondition_subdivide(K, f, bound=SUBDIVISION_BOUND, cap=SUBDIVISION_CAP, pitch=OSC_PITCH,
                           return_depth=False):
    """Smallest barycentric iterate of K on which every simplex has oscillation <= bound."""
    if not 0 < bound <= 1:
        raise ValueError("bound must lie in (0, 1]")
    depth = 0
    while True:
        osc = max_oscillation(K, f, pitch)
        if osc <= bound:
            return (K, depth) if return_depth else K
        if depth >= cap:
            raise SubdivisionCapExceeded(f"oscillation {osc:.3g} > {bound} after {cap} subdivisions",
                                         oscillation=osc, depth=depth)
        K = barycentric_subdivide(K, 1)
        depth += 1


# -- the piecewise map ---------------------------------------------------------

@dataclass
class Certificate:
    eps_target: float
    eps_achieved: float
    boundary_exact: dict = dc_field(default_factory=dict)
    rank_margins: dict = dc_field(default_factory=dict)
    unit_norm_exact: dict = dc_field(default_factory=dict)
    subdivision_depth: int = 0
    stratum_component_report: dict = dc_field(default_factory=dict)
    gluing_jump: float = 0.0
    pitch: int = 32

    @property
    def failures(self):
        """Names of failing structural fields."""
        bad = []
        if not all(self.boundary_exact.values()):
            bad.append("boundary_exact")
        if not all(self.unit_norm_exact.values()):
            bad.append("unit_norm_exact")
        if any(v < TAU_RANK for v in self.rank_margins.values()):
            bad.append("rank_margins")
        if self.gluing_jump >= GLUE_TOL:
            bad.append("gluing_jump")
        if self.stratum_component_report.get("splits", 0):
            bad.append("stratum_component_report")
        return bad

    @property
    def valid(self):
        return not self.failures and self.eps_achieved < self.eps_target

    def to_json(self):
        return {"eps_target": self.eps_target, "eps_achieved": self.eps_achieved,
                "boundary_exact": dict(sorted(self.boundary_exact.items())),
                "rank_margins": dict(sorted(self.rank_margins.items())),
                "unit_norm_exact": dict(sorted(self.unit_norm_exact.items())),
                "subdivision_depth": self.subdivision_depth,
                "stratum_component_report": self.stratum_component_report,
                "gluing_jump": self.gluing_jump, "pitch": self.pitch, "valid": self.valid}

    @classmethod
    def from_json(cls, obj):
        keys = ("eps_target", "eps_achieved", "boundary_exact", "rank_margins", "unit_norm_exact",
                "subdivision_depth", "stratum_component_report", "gluing_jump", "pitch")
        return cls(**{k: obj[k] for k in keys if k in obj})


def certifying_stratification(K, budget=REFINE_BUDGET):
    """Stratification used for the component check, with its kind.

    The hull-intersection refinement keeps every component inside one simplex;
    when it is too expensive the plain induced stratification is used instead.
    """
    try:
        return refined_stratification(K, budget), "refined"
    except RefinementTooLarge:
        return induced_stratification(K), "induced"


class PiecewiseRegularMap:
    """Regular pieces per simplex of K, glued exactly along shared faces."""

    def __init__(self, complex, target, per_simplex, eps, subdivision_depth=0, certificate=None,
                 stratification=None):
        self.complex = complex
        self.target = target
        self.per_simplex = per_simplex
        self.eps = eps
        self.subdivision_depth = subdivision_depth
        self.certificate = certificate
        self._strat = stratification
        self.stratification_kind = "given" if stratification is not None else None
        self.ops = _Ops(target)

    @property
    def stratification(self):
        if self._strat is None:
            self._strat, self.stratification_kind = certifying_stratification(self.complex)
        return self._strat

    def evaluate_on(self, s, X):
        """Evaluate the piece of simplex s at ambient points X lying in it."""
        sx = self.complex.simplex(s)
        T = sx.to_local_float(X) if sx.dim else np.zeros((len(X), 0))
        return self.ops.values(self.per_simplex[simplex_id(s)], T)

    def evaluate(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = None
        done = np.zeros(len(X), dtype=bool)
        for s in self.complex.maximal():
            mask = self.complex.simplex(s).contains_float(X, 1e-9) & ~done
            if not mask.any():
                continue
            vals = self.evaluate_on(s, X[mask])
            if out is None:
                out = np.full((len(X),) + vals.shape[1:], np.nan)
            out[mask] = vals
            done |= mask
        if not done.all():
            raise OutsideDomain(f"{int((~done).sum())} points outside |K|")
        return out

    def to_json(self):
        K = self.complex
        return {
            "complex": {"ambient_dim": K.ambient_dim,
                        "vertices": [[fmt_q(c) for c in v] for v in K.vertices],
                        "simplices": [list(s) for s in K.maximal()]},
            "target": self.target.to_json(),
            "eps": self.eps,
            "subdivision_depth": self.subdivision_depth,
            "per_simplex": {sid: self.per_simplex[sid].to_json() for sid in sorted(self.per_simplex)},
            "stratification": self.stratification.to_json(),
            "certificate": self.certificate.to_json() if self.certificate else None,
        }

    @classmethod
    def from_json(cls, obj):
        c = obj["complex"]
        K = SimplicialComplex(c["ambient_dim"], c["vertices"], c["simplices"])
        target = Target.from_json(obj["target"])
        ops = _Ops(target)
        pieces = {sid: ops.load(p) for sid, p in obj["per_simplex"].items()}
        cert = Certificate.from_json(obj["certificate"]) if obj.get("certificate") else None
        return cls(K, target, pieces, obj["eps"], obj.get("subdivision_depth", 0), cert)


# -- construction --------------------------------------------------------------

def _harmonize_vertex_frames(K, pieces, field):
    """Rotate vertex frames along a BFS tree of the 1-skeleton so neighbours are aligned."""
    nbrs = {v: [] for (v,) in K.of_dim(0)}
    for a, b in K.of_dim(1):
        nbrs[a].append(b)
        nbrs[b].append(a)
    frames = {v: _frame_float(pieces[simplex_id((v,))]) for v in nbrs}
    seen = set()
    for root in sorted(nbrs):
        if root in seen:
            continue
        seen.add(root)
        queue = deque([root])
        while queue:
            p = queue.popleft()
            for w in sorted(nbrs[p]):
                if w in seen:
                    continue
                seen.add(w)
                A = frames[w]
                M = batch_mul(batch_adjoint(A), frames[p], field)
                frames[w] = batch_mul(A, polar(M, field), field)
                piece = pieces[simplex_id((w,))]
                ex = snap_frame(frames[w])
                frame = np.empty(ex.shape, dtype=object)
                for idx in np.ndindex(ex.shape):
                    frame[idx] = MultiPoly.constant(0, ex[idx])
                piece.frame = frame
                queue.append(w)


def _frame_float(piece):
    out = np.empty(piece.frame.shape)
    for idx in np.ndindex(piece.frame.shape):
        out[idx] = float(piece.frame[idx].constant_term())
    return out


def _chart_plan(K, f):
    """Greedy chart per maximal simplex (reusing earlier choices); faces inherit from their first coface."""
    used = []
    plan = {}
    for s in K.maximal():
        sx = K.simplex(s)
        _, _, X = sx.lattice(OSC_PITCH) if sx.dim else (None, None, sx.to_ambient_float(np.zeros((1, 0))))
        c = choose_chart(f(X), f.n, prefer=used)
        if c not in used:
            used.append(c)
        for k in range(1, len(s) + 1):
            for face in combinations(s, k):
                plan.setdefault(face, c)
    return plan


def _build(K, f, eps, cfg, jobs):
    target = Target.of(f)
    ops = _Ops(target)
    d = K.dim
    pieces = {}
    plan = _chart_plan(K, f) if target.kind == "sphere" else {}

    def one(s):
        sx = K.simplex(s)
        k = sx.dim
        eps_k = eps * (k + 1) / (d + 1)
        facets = None if k == 0 else [pieces[simplex_id(s[:i] + s[i + 1:])] for i in range(k + 1)]
        prefer = [plan[s]] if s in plan else []
        try:
            return ops.fit(sx, f, facets, eps_k, cfg, prefer)
        except PwregError as exc:
            exc.details.setdefault("simplex", simplex_id(s))
            raise

    pool = ThreadPoolExecutor(jobs) if jobs and jobs > 1 else None
    try:
        for k in range(d + 1):
            level = K.of_dim(k)
            results = list(pool.map(one, level)) if pool else [one(s) for s in level]
            for s, piece in zip(level, results):
                pieces[simplex_id(s)] = piece
            if k == 0 and target.kind == "grassmann":
                _harmonize_vertex_frames(K, pieces, target.field)
    finally:
        if pool:
            pool.shutdown()
    return pieces


def approximate_complex(K, f, eps, config=None, bound=SUBDIVISION_BOUND, subdiv_cap=SUBDIVISION_CAP, jobs=1,
                        refine_on_failure=True, cert_pitch=None, component_pitch=8):
    """Piecewise regular approximation of the oracle f on |K| within eps, certified."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    cfg = config or FitConfig()
    K1, depth = precondition_subdivide(K, f, bound, subdiv_cap, return_depth=True)
    while True:
        try:
            pieces = _build(K1, f, eps, cfg, jobs)
            break
        except RETRYABLE:
            if not refine_on_failure or depth >= subdiv_cap:
                raise
            K1 = barycentric_subdivide(K1, 1)
            depth += 1
    pm = PiecewiseRegularMap(K1, Target.of(f), pieces, eps, depth)
    pm.certificate = certify(pm, f, cert_pitch or cfg.cert_pitch, component_pitch=component_pitch, strict=False)
    return pm


# -- certification -------------------------------------------------------------

def certify(pm, f, pitch=32, component_pitch=8, strict=True):
    """Recompute every certificate field from the stored pieces and the oracle.

    With f None the sup error is not evaluated (left at 0 for the caller).
    """
    K, ops = pm.complex, pm.ops
    cert = Certificate(pm.eps, 0.0, subdivision_depth=pm.subdivision_depth, pitch=pitch)
    if not K.simplices:
        return cert
    worst = 0.0
    for s in (K.maximal() if f is not None else []):
        sx = K.simplex(s)
        if sx.dim:
            _, T, X = sx.lattice(pitch)
        else:
            T, X = np.zeros((1, 0)), sx.to_ambient_float(np.zeros((1, 0)))
        piece = pm.per_simplex[simplex_id(s)]
        worst = max(worst, float(ops.distance(ops.values(piece, T), f(X)).max()))
    cert.eps_achieved = worst
    for s in K.simplices:
        sid = simplex_id(s)
        piece = pm.per_simplex[sid]
        dim = len(s) - 1
        for k in range(len(s) if dim else 0):
            face = s[:k] + s[k + 1:]
            cert.boundary_exact[f"{sid}|{simplex_id(face)}"] = ops.boundary_exact(piece, pm.per_simplex[simplex_id(face)],
                                                                                  dim, k)
        if ops.grassmann:
            T = local_lattice(dim, min(pitch, 16))[1] if dim else np.zeros((1, 0))
            margin = ops.rank_margin(piece, T)
            if margin is not None:
                cert.rank_margins[sid] = margin
        else:
            cert.unit_norm_exact[sid] = piece.unit_norm_exact()
    cert.gluing_jump = gluing_jump(pm, component_pitch)
    pts, _ = complex_samples(K, component_pitch)
    rep = component_containment_check(pts, K, pm.stratification, component_pitch, raise_on_split=False)
    cert.stratum_component_report = {"pitch": component_pitch, "points": rep["num_points"],
                                     "components": len(rep["components"]), "splits": rep["splits"],
                                     "stratification": pm.stratification_kind}
    if strict and cert.failures:
        raise CertificateMismatch(f"certificate fields failed: {', '.join(cert.failures)}",
                                  field=cert.failures[0])
    return cert


def gluing_jump(pm, pitch=8):
    """Largest disagreement between pieces of all simplices containing a sample point."""
    K, ops = pm.complex, pm.ops
    _, X = complex_samples(K, pitch)
    worst = 0.0
    by_point = [[] for _ in range(len(X))]
    for s in K.simplices:
        mask = K.simplex(s).contains_float(X, 1e-12)
        if not mask.any():
            continue
        idx = np.flatnonzero(mask)
        vals = pm.evaluate_on(s, X[idx])
        for i, v in zip(idx, vals):
            by_point[i].append(v)
    for vals in by_point:
        if len(vals) > 1:
            V = np.stack(vals)
            worst = max(worst, float(ops.distance(V, np.broadcast_to(V[0], V.shape)).max()))
    return worst
