"""Piecewise algebraic F-vector subbundles of a trivial bundle, via classifying maps.

A bundle is a certified PiecewiseRegularMap into G_r(F^n); its fiber at x
is the image of the projection at x.  Complements and Whitney sums are
built exactly on the per-simplex projection data.
"""
from math import comb

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import ComplexMismatch, InvalidCertificate, NotInjectiveOnFibers, OutsideDomain, RankDeficient
from .fmatrix import FMatrix, batch_adjoint, batch_mul, field_dim, real_embed
from .grassmann import (GrassmannPiece, GrassmannPoint, ProjectionPiece, _poly_matmul, orthonormal_frame, polar)
from .pipeline import PiecewiseRegularMap, Target, certify
from .polyalg import MultiPoly, Q, least_squares_fit
from .simplicial import complex_samples, simplex_id

TAU_ISO = 1e-6


def _require_certificate(pm):
    if pm.target.kind != "grassmann":
        raise InvalidCertificate("classifying maps must take values in a Grassmannian")
    if pm.certificate is None or pm.certificate.failures:
        raise InvalidCertificate("classifying map has no valid certificate",
                                 failures=pm.certificate.failures if pm.certificate else ["missing"])


def _complex_key(K):
    return (K.ambient_dim, tuple(K.vertices), tuple(K.simplices))


class PWBundle:
    """Subbundle of the trivial bundle X x F^n given by a certified classifying map."""

    def __init__(self, classifying):
        _require_certificate(classifying)
        self.classifying = classifying
        self.field = classifying.target.field
        self.n = classifying.target.n
        self.r = classifying.target.r
        self._proj = None

    @property
    def complex(self):
        return self.classifying.complex

    def projections(self):
        """Per-simplex exact projection data (ProjectionPiece)."""
        if self._proj is None:
            out = {}
            for sid, piece in self.classifying.per_simplex.items():
                out[sid] = piece if isinstance(piece, ProjectionPiece) else ProjectionPiece.from_frame(piece)
            self._proj = out
        return self._proj

    def rank_per_component(self):
        K = self.complex
        verts = K.used_vertices()
        pos = {v: i for i, v in enumerate(verts)}
        edges = K.of_dim(1)
        g = coo_matrix((np.ones(len(edges)), ([pos[a] for a, _ in edges], [pos[b] for _, b in edges])),
                       shape=(len(verts), len(verts)))
        ncomp, _ = connected_components(g, directed=False)
        return {str(c): self.r for c in range(ncomp)}

    def is_product(self):
        """Exact test that the classifying map is constant."""
        pieces = self.projections()
        ref = None
        for sid in sorted(pieces):
            p = pieces[sid]
            pt = [Q(0)] * p.num_vars
            dc = p.den.eval_exact(pt)
            const = np.empty(p.num.shape, dtype=object)
            for idx in np.ndindex(p.num.shape):
                const[idx] = p.num[idx].eval_exact(pt) / dc
            if not all(p.num[idx] == p.den * const[idx] for idx in np.ndindex(p.num.shape)):
                return False
            if ref is None:
                ref = const
            elif any(ref[idx] != const[idx] for idx in np.ndindex(const.shape)):
                return False
        return True

    def to_json(self):
        obj = self.classifying.to_json()
        obj["bundle"] = {"rank_per_component": self.rank_per_component(), "product": self.is_product()}
        return obj

    @classmethod
    def from_json(cls, obj):
        return cls(PiecewiseRegularMap.from_json(obj))


def bundle_from_map(g):
    return PWBundle(g)


def map_from_bundle(xi):
    return xi.classifying


def fiber_at(xi, x):
    """Fiber at a point of |K| as a GrassmannPoint."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    K = xi.complex
    for s in K.maximal():
        if K.simplex(s).contains_float(x, 1e-9)[0]:
            P = xi.classifying.evaluate_on(s, x)[0]
            return GrassmannPoint(FMatrix(xi.field, P), xi.r)
    raise OutsideDomain(f"{x[0].tolist()} is not in |K|")


def _derived(xi, pieces, target, eps_achieved):
    """Wrap exact per-simplex projection data as a bundle with a recomputed certificate.

    The sup error carries over exactly: |(I-P)-(I-Q)| = |P-Q| and block
    sums take the max.
    """
    base = xi.classifying
    pm = PiecewiseRegularMap(base.complex, target, pieces, base.eps, base.subdivision_depth,
                             stratification=base._strat)
    pm.stratification_kind = base.stratification_kind
    cert = certify(pm, None, base.certificate.pitch, strict=True)
    cert.eps_achieved = eps_achieved
    pm.certificate = cert
    return PWBundle(pm)


def orthogonal_complement(xi):
    pieces = {sid: p.complement() for sid, p in xi.projections().items()}
    target = Target("grassmann", xi.n, xi.field, xi.n - xi.r)
    return _derived(xi, pieces, target, xi.classifying.certificate.eps_achieved)


def _block_diag(a, b):
    n, m = a.n, b.n
    d = field_dim(a.field)
    nv = a.den.num_vars
    num = np.empty((n + m, n + m, d), dtype=object)
    for idx in np.ndindex(num.shape):
        num[idx] = MultiPoly.constant(nv, 0)
    for idx in np.ndindex(a.num.shape):
        num[idx] = a.num[idx] * b.den
    for (i, j, c) in np.ndindex(b.num.shape):
        num[n + i, n + j, c] = b.num[i, j, c] * a.den
    return ProjectionPiece(a.field, n + m, a.r + b.r, num, a.den * b.den)


def whitney_sum(xi, eta):
    if xi.field != eta.field or _complex_key(xi.complex) != _complex_key(eta.complex):
        raise ComplexMismatch("bundles live on different complexes or fields")
    P, Q = xi.projections(), eta.projections()
    pieces = {sid: _block_diag(P[sid], Q[sid]) for sid in P}
    target = Target("grassmann", xi.n + eta.n, xi.field, xi.r + eta.r)
    eps = max(xi.classifying.certificate.eps_achieved, eta.classifying.certificate.eps_achieved)
    return _derived(xi, pieces, target, eps)


def product_bundle(K, field, n, r, pitch=32):
    """The trivial subbundle spanned by the first r basis vectors."""
    d = field_dim(field)
    pieces = {}
    for s in K.simplices:
        nv = len(s) - 1
        frame = np.empty((n, r, d), dtype=object)
        for idx in np.ndindex(frame.shape):
            i, j, c = idx
            frame[idx] = MultiPoly.constant(nv, 1 if (i == j and c == 0) else 0)
        pieces[simplex_id(s)] = GrassmannPiece(field, n, r, frame, "matrix")
    pm = PiecewiseRegularMap(K, Target("grassmann", n, field, r), pieces, 1.0)
    pm.certificate = certify(pm, None, pitch, strict=True)
    return PWBundle(pm)


# -- morphisms -------------------------------------------------------------------

def _adjacent_pairs(K, X, pitch):
    """Sample pairs that are lattice neighbours inside a common simplex."""
    edge_len = max((K.simplex(e).diameter() for e in K.edge_graph()), default=1.0)
    h = 1.5 * edge_len / pitch
    pairs = cKDTree(X).query_pairs(h, output_type="ndarray")
    keep = []
    masks = [K.simplex(s).contains_float(X, 1e-9) for s in K.maximal()]
    for i, j in pairs:
        if any(m[i] and m[j] for m in masks):
            keep.append((i, j))
    return np.array(keep, dtype=int).reshape(-1, 2)


class PiecewiseMorphism:
    """sigma(x) = P_eta(x) B(x) on fibers of xi, stored per simplex as (num, den)."""

    def __init__(self, xi, eta, B, per_simplex, certificate):
        self.xi, self.eta, self.B = xi, eta, B
        self.per_simplex = per_simplex
        self.certificate = certificate

    def matrices(self, X):
        """The (m, n, d) matrices P_eta(x) B(x); restrict to fibers of xi before use."""
        return _sigma(self.eta, self.B, X)

    def to_json(self):
        return {"per_simplex": {sid: {"num": [[[p.to_json() for p in self.per_simplex[sid][0][i, j]]
                                                for j in range(self.per_simplex[sid][0].shape[1])]
                                               for i in range(self.per_simplex[sid][0].shape[0])],
                                      "den": self.per_simplex[sid][1].to_json()}
                                for sid in sorted(self.per_simplex)},
                "certificate": self.certificate}


def _eval_B(B, X):
    m, n, d = B.shape
    vals = np.stack([p.eval_float(X) for p in B.ravel()], axis=-1)
    return vals.reshape((len(X), m, n, d))


def _sigma(eta, B, X):
    P = eta.classifying.evaluate(X)
    return batch_mul(P, _eval_B(B, X), eta.field)


def fit_global_matrix(K, A, field, m, n, degrees=(0, 1, 2, 4, 6, 8), pitch=16, tol=1e-6):
    """One ambient polynomial matrix B close to the oracle A on |K| (degree escalation)."""
    _, X = complex_samples(K, pitch)
    Y = np.asarray(A(X), dtype=float).reshape(len(X), -1)
    scale = max(1.0, float(np.abs(Y).max()))
    best = None
    for deg in degrees:
        if comb(deg + K.ambient_dim, deg) > len(X) // 2:
            break
        try:
            polys = least_squares_fit(X, Y, deg, center=[0.0] * K.ambient_dim)
        except RankDeficient:
            # |K| lies on a hypersurface of this degree; higher degrees add nothing
            break
        V = np.stack([p.eval_float(X) for p in polys], axis=-1)
        err = float(np.abs(V - Y).max())
        if best is None or err < best[1]:
            best = (polys, err, deg)
        if err <= tol * scale:
            break
    polys, err, deg = best
    B = np.empty((m, n, field_dim(field)), dtype=object)
    for k, idx in enumerate(np.ndindex(B.shape)):
        B[idx] = polys[k]
    return B, err, deg


def _fiber_frames(P, r, field):
    return np.stack([orthonormal_frame(p, r, field) for p in P])


def algebraize_isomorphism(xi, eta, A, pitch=16, tau_iso=TAU_ISO, raise_on_fail=True):
    """Regular bundle morphism close to the fiberwise-isomorphic oracle A, certified on samples.

    A maps ambient points (N, m) to (N, eta.n, xi.n, d) matrices.  The
    certificate is the sampled minimum of sigma_min(P_eta B U_xi) over
    orthonormal fiber frames U_xi; for F = R a sign change of the fiber
    determinant between adjacent samples (frames aligned by polar transport)
    also disproves injectivity, by the intermediate value theorem.
    """
    if xi.field != eta.field or _complex_key(xi.complex) != _complex_key(eta.complex):
        raise ComplexMismatch("bundles live on different complexes or fields")
    if xi.r != eta.r:
        raise NotInjectiveOnFibers("fiber ranks differ", rank_xi=xi.r, rank_eta=eta.r)
    K, F = xi.complex, xi.field
    B, b_err, b_deg = fit_global_matrix(K, A, F, eta.n, xi.n)
    _, X = complex_samples(K, pitch)
    Pxi = xi.classifying.evaluate(X)
    Peta = eta.classifying.evaluate(X)
    U = _fiber_frames(Pxi, xi.r, F)
    V = _fiber_frames(Peta, eta.r, F)
    S = batch_mul(batch_mul(Peta, _eval_B(B, X), F), U, F)
    smin = np.linalg.svd(real_embed(S, F), compute_uv=False)[:, -1]
    flips = 0
    if F == "R":
        flips = _orientation_flips(K, X, U, V, S, pitch)
    per_simplex = {}
    for s in K.simplices:
        sid = simplex_id(s)
        sx = K.simplex(s)
        p = eta.projections()[sid]
        forms = _ambient_forms(sx)
        Bl = np.empty(B.shape, dtype=object)
        for idx in np.ndindex(B.shape):
            Bl[idx] = B[idx].compose_to(forms, sx.dim)
        per_simplex[sid] = (_poly_matmul(p.num, Bl, F), p.den)
    cert = {"sigma_min": float(smin.min()), "tau_iso": tau_iso, "orientation_flips": int(flips),
            "samples": int(len(X)), "B_degree": int(b_deg), "B_error": b_err, "pitch": pitch,
            "valid": bool(smin.min() >= tau_iso and flips == 0)}
    if raise_on_fail and not cert["valid"]:
        raise NotInjectiveOnFibers(f"sampled sigma_min {cert['sigma_min']:.3g}, {flips} orientation flips",
                                   sigma_min=cert["sigma_min"], flips=int(flips))
    return PiecewiseMorphism(xi, eta, B, per_simplex, cert)


def _ambient_forms(sx):
    """Ambient coordinates as affine forms in the simplex's local parameters."""
    v0 = sx.vertices[0]
    return [MultiPoly.affine([e[j] for e in sx.edges], v0[j]) for j in range(sx.ambient_dim)]


def _orientation_flips(K, X, U, V, S, pitch):
    """Count adjacent sample pairs where det(V* S) changes sign after aligning frames."""
    pairs = _adjacent_pairs(K, X, pitch)
    if len(pairs) == 0:
        return 0
    flips = 0
    for i, j in pairs:
        # transport the frames at j to those at i
        Gu = polar(batch_mul(batch_adjoint(U[j]), U[i], "R"), "R")
        Gv = polar(batch_mul(batch_adjoint(V[j]), V[i], "R"), "R")
        Mi = batch_mul(batch_adjoint(V[i]), S[i], "R")[..., 0]
        # S[j] was computed against U[j]; re-express it against the aligned frame U[j] Gu
        Sj = batch_mul(S[j], Gu, "R")
        Mj = batch_mul(batch_adjoint(batch_mul(V[j], Gv, "R")), Sj, "R")[..., 0]
        if np.linalg.det(Mi) * np.linalg.det(Mj) < 0:
            flips += 1
    return flips


def compose_morphisms(first, second, pitch=16):
    """Sampled sigma_min of second o first on the fibers of first.xi."""
    K, F = first.xi.complex, first.xi.field
    _, X = complex_samples(K, pitch)
    U = _fiber_frames(first.xi.classifying.evaluate(X), first.xi.r, F)
    M = batch_mul(second.matrices(X), batch_mul(first.matrices(X), U, F), F)
    return float(np.linalg.svd(real_embed(M, F), compute_uv=False)[:, -1].min())
