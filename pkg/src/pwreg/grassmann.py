"""Grassmannians G_r(F^n) as projection matrices, and boundary-exact frame fitting.

Oracles are vectorized: a GrassmannOracle maps ambient points (N, m) to
projection arrays (N, n, n, d).  Frames are (n, r, d) arrays whose column
span (left F-span of the columns) is the represented subspace.
"""
from dataclasses import dataclass, field as dc_field

import numpy as np
from gmpy2 import mpq

from . import exactla
from .errors import (DegreeCapExceeded, GaugeMismatch, IncompatibleFacetData, OscillationTooLarge,
                     RankDeficient, RankLost, ShapeMismatch)
from .extend import FitConfig, approximate_on_simplex, extend_from_boundary, restrict_facet
from .fmatrix import (_RHO, FMatrix, batch_mul, fconj, field_dim, fmul, from_real_embed, real_embed,
                      real_embed_exact)
from .polyalg import MultiPoly, RegularFnVector, least_squares_fit, snap

TAU_PROJ = 1e-10
TAU_RANK = 1e-8
OSC_BOUND = 0.5
TARGET_MARGIN = 0.25


def fmat_mul(A, B):
    if A.field != B.field:
        raise ShapeMismatch("field mismatch")
    return A @ B


class GrassmannPoint:
    """A point of G_r(F^n), stored as its orthogonal projection."""

    def __init__(self, proj, r=None, check=True):
        self.proj = proj
        self.field = proj.field
        self.n = proj.rows
        if proj.rows != proj.cols:
            raise ShapeMismatch("projection must be square")
        tr = sum((proj.data[i, i, 0] for i in range(self.n)), mpq(0) if proj.is_exact else 0.0)
        self.r = r if r is not None else int(round(float(tr)))
        if check:
            self._validate(tr)

    def _validate(self, tr):
        P = self.proj
        if P.is_exact:
            ok = P.adjoint() == P and P @ P == P and tr == self.r
        else:
            R = P.real()
            ok = (np.abs(R - R.T).max() <= TAU_PROJ and np.abs(R @ R - R).max() <= TAU_PROJ
                  and abs(float(tr) - self.r) <= TAU_PROJ)
        if not ok:
            raise ValueError("not an orthogonal projection of the stated rank")

    def to_json(self):
        return {"field": self.field, "n": self.n, "r": self.r, "proj": self.proj.to_json()}

    @classmethod
    def from_json(cls, obj):
        P = FMatrix.from_json(obj["field"], obj["proj"])
        return cls(P, obj["r"])

    def __repr__(self):
        return f"GrassmannPoint({self.field}, n={self.n}, r={self.r})"


def column_span_projection(A, tau_rank=TAU_RANK):
    """Orthogonal projection onto the column span of a full-rank n x r F-matrix.

    Exact entries give an exact projection A (A*A)^-1 A*; float entries go
    through the real embedding.
    """
    n, r = A.shape
    d = field_dim(A.field)
    if A.is_exact:
        R = real_embed_exact(A.data, A.field)
        Rt = exactla.transpose(R)
        try:
            Ginv = exactla.inverse(exactla.matmul(Rt, R))
        except ZeroDivisionError:
            raise RankDeficient("columns are dependent") from None
        Preal = exactla.matmul(exactla.matmul(R, Ginv), Rt)
        data = np.empty((n, n, d), dtype=object)
        for i in range(n):
            for j in range(n):
                for c in range(d):
                    data[i, j, c] = Preal[i * d + c][j * d]
        return GrassmannPoint(FMatrix(A.field, data), r)
    R = A.real()
    s = np.linalg.svd(R, compute_uv=False)
    if s.size == 0 or s[-1] <= tau_rank * max(1.0, s[0]):
        raise RankDeficient(f"sigma_min {s[-1] if s.size else 0:.3g} below tolerance", sigma_min=float(s[-1]))
    Qm, _ = np.linalg.qr(R)
    return GrassmannPoint(FMatrix(A.field, from_real_embed(Qm @ Qm.T, A.field, n, n)), r)


def grassmann_distance(P, Q):
    if P.n != Q.n or P.field != Q.field:
        raise ShapeMismatch("points live in different Grassmannians")
    D = P.proj.to_float().real() - Q.proj.to_float().real()
    return float(np.linalg.norm(D, 2))


# -- batch numerics ------------------------------------------------------------

def span_projections(frames, field):
    """(N, n, r, d) frames -> ((N, n, n, d) projections, sigma ratio per sample)."""
    R = real_embed(frames, field)
    s = np.linalg.svd(R, compute_uv=False)
    ratio = s[:, -1] / np.maximum(s[:, 0], 1e-300)
    Qm, _ = np.linalg.qr(R)
    P = Qm @ np.swapaxes(Qm, -1, -2)
    n = frames.shape[-3]
    return from_real_embed(P, field, n, n), ratio


def frame_margin(frames, field):
    """min sigma_min / max sigma_max of the real embedding over a batch of frames."""
    sv = np.linalg.svd(real_embed(frames, field), compute_uv=False)
    return float(sv[:, -1].min() / max(sv[:, 0].max(), 1e-300))


def batch_distance(P1, P2, field):
    D = real_embed(P1, field) - real_embed(P2, field)
    return np.linalg.norm(D, 2, axis=(-2, -1))


def orthonormal_frame(P, r, field):
    """F-Gram-Schmidt on the columns of a float projection (n, n, d): an (n, r, d) frame."""
    n = P.shape[0]
    cols = [P[:, j, :].copy() for j in range(n)]
    cols.sort(key=lambda v: -float((v * v).sum()))
    basis = []
    for v in cols:
        w = v.copy()
        for e in basis:
            c = fmul(w, fconj(e), field).sum(axis=0)
            w = w - fmul(c[None, :], e, field)
        nrm = np.sqrt((w * w).sum())
        if nrm > 1e-6:
            basis.append(w / nrm)
        if len(basis) == r:
            break
    if len(basis) < r:
        raise RankDeficient("projection has rank below r")
    return np.stack(basis, axis=1)


def polar(M, field):
    """Unitary polar factor of a square F-matrix (r, r, d), via the real embedding."""
    r = M.shape[0]
    U, _, Vt = np.linalg.svd(real_embed(M, field))
    return from_real_embed(U @ Vt, field, r, r)


def snap_frame(A):
    """Exact rational frame from floats (bit-exact dyadic snap)."""
    out = np.empty(A.shape, dtype=object)
    for idx in np.ndindex(A.shape):
        out[idx] = snap(float(A[idx]))
    return out


# -- oracles -------------------------------------------------------------------

class GrassmannOracle:
    """Vectorized map from ambient points to G_r(F^n)."""

    def __init__(self, field, n, r, proj_fn, name="oracle"):
        self.field, self.n, self.r = field, n, r
        self.proj_fn = proj_fn
        self.name = name

    @classmethod
    def from_frames(cls, field, n, r, frame_fn, name="oracle"):
        def proj(X):
            P, _ = span_projections(np.asarray(frame_fn(X), dtype=float), field)
            return P
        return cls(field, n, r, proj, name)

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.asarray(self.proj_fn(X), dtype=float)

    def point(self, x):
        P = self(np.asarray(x, dtype=float)[None, :])[0]
        return GrassmannPoint(FMatrix(self.field, P), self.r, check=False)


def _bary(simplex):
    return np.array([[float(c) for c in simplex.barycenter()]])


def oscillation(simplex, f, pitch=8):
    """max over lattice samples of the distance from f(barycenter)."""
    _, _, X = simplex.lattice(max(pitch, 1) if simplex.dim else 1)
    P0 = f(_bary(simplex))
    return float(batch_distance(f(X), np.broadcast_to(P0, (len(X),) + P0.shape[1:]), f.field).max())


def frame_on_simplex(simplex, f, pitch=8, bound=OSC_BOUND):
    """Frame oracle A(x) = P_f(x) A0, with A0 an orthonormal basis of f(barycenter).

    Returns (A0, frame_fn, osc).
    """
    osc = oscillation(simplex, f, pitch)
    if osc > bound:
        raise OscillationTooLarge(f"oscillation {osc:.3g} > {bound}", oscillation=osc)
    P0 = f(_bary(simplex))[0]
    A0 = orthonormal_frame(P0, f.r, f.field)

    def frame_fn(X):
        P = f(X)
        return batch_mul(P, np.broadcast_to(A0, (len(P),) + A0.shape), f.field)

    return A0, frame_fn, osc


# -- per-simplex approximation --------------------------------------------------

@dataclass
class GrassmannPiece:
    """Polynomial frame Psi (numerators) on one simplex; the map is x -> span Psi(x)."""
    field: str
    n: int
    r: int
    frame: np.ndarray
    mode: str = "matrix"
    report: dict = dc_field(default_factory=dict)

    @property
    def num_vars(self):
        return self.frame.flat[0].num_vars

    def eval_frames(self, T):
        T = np.atleast_2d(np.asarray(T, dtype=float))
        vals = np.stack([p.eval_float(T) for p in self.frame.ravel()], axis=-1)
        return vals.reshape((len(T),) + self.frame.shape)

    def eval_proj(self, T):
        return span_projections(self.eval_frames(T), self.field)

    def restrict(self, d, k):
        out = np.empty(self.frame.shape, dtype=object)
        for idx in np.ndindex(self.frame.shape):
            out[idx] = restrict_facet(self.frame[idx], d, k)
        return out

    def to_json(self):
        return {"field": self.field, "n": self.n, "r": self.r, "mode": self.mode,
                "frame": [[[self.frame[i, j, c].to_json() for c in range(self.frame.shape[2])]
                           for j in range(self.r)] for i in range(self.n)]}

    @classmethod
    def from_json(cls, obj):
        fr = obj["frame"]
        arr = np.empty((obj["n"], obj["r"], field_dim(obj["field"])), dtype=object)
        for idx in np.ndindex(arr.shape):
            arr[idx] = MultiPoly.from_json(fr[idx[0]][idx[1]][idx[2]])
        return cls(obj["field"], obj["n"], obj["r"], arr, obj.get("mode", "matrix"))


def _flatten(frame, nvars):
    return RegularFnVector(list(frame.ravel()), MultiPoly.constant(nvars, 1), None, "polynomial")


def _poly_matmul(A, B, field):
    """Left-module product of object arrays of MultiPoly."""
    return (FMatrix(field, A) @ FMatrix(field, B)).data


def _span_facet_data(facet_frame, B_facet, field):
    """Rational facet data P_Gamma B for rank one: numerators Psi Psi* B, denominator |Psi|^2."""
    psi = facet_frame
    adj = fconj(np.swapaxes(psi, 0, 1))
    den = sum((p * p for p in psi.ravel()), MultiPoly.constant(psi.flat[0].num_vars, 0))
    nums = _poly_matmul(_poly_matmul(psi, adj, field), B_facet, field)
    return RegularFnVector(list(nums.ravel()), den, None, "span")


def span_contains(psi_face, psi_restricted, field):
    """Exact test that every column of psi_restricted lies in the span of psi_face (rank one)."""
    adj = fconj(np.swapaxes(psi_face, 0, 1))
    den = sum((p * p for p in psi_face.ravel()), MultiPoly.constant(psi_face.flat[0].num_vars, 0))
    lhs = psi_restricted * den
    rhs = _poly_matmul(_poly_matmul(psi_face, adj, field), psi_restricted, field)
    return all(a == b for a, b in zip(lhs.ravel(), rhs.ravel()))


def _vertex_piece(simplex, f):
    X = simplex.to_ambient_float(np.zeros((1, 0)))
    A = orthonormal_frame(f(X)[0], f.r, f.field)
    ex = snap_frame(A)
    frame = np.empty(ex.shape, dtype=object)
    for idx in np.ndindex(ex.shape):
        frame[idx] = MultiPoly.constant(0, ex[idx])
    P, _ = span_projections(A.astype(float)[None], f.field)
    err = float(batch_distance(P, f(X), f.field)[0])
    return GrassmannPiece(f.field, f.n, f.r, frame, "vertex", {"degree": 0, "achieved": err, "rank_margin": 1.0})


def approximate_grassmann_simplex(simplex, f, facet_data, eps, config=None, span_fallback=True):
    """Boundary-exact approximation of a Grassmann map on one simplex.

    facet_data: list (indexed by opposite vertex) of (n, r, d) MultiPoly frames
    in facet parameters, or None for an unconstrained fit.  With matrix-level
    compatible data, Psi|facet equals the facet frame exactly; otherwise for
    r = 1 the boundary agreement is span-level.
    """
    cfg = config or FitConfig()
    fd, n, r = field_dim(f.field), f.n, f.r
    d = simplex.dim
    if d == 0:
        return _vertex_piece(simplex, f)
    shape = (n, r, fd)
    A0, frame_fn, osc = frame_on_simplex(simplex, f)

    def metric(X, G):
        P, ratio = span_projections(G.reshape((len(G),) + shape), f.field)
        dist = batch_distance(P, f(X), f.field)
        return np.where(ratio > TAU_RANK, dist, 2.0)

    mode = "free"
    data = None
    if facet_data is not None:
        data = [_flatten(fr, d - 1) for fr in facet_data]
        mode = "matrix"
        try:
            ext = extend_from_boundary(simplex, data, cfg.den_pitch, cfg.tau_den)
            margin = _target_margin(simplex, f, ext, shape, cfg.cert_pitch)
            if margin <= TARGET_MARGIN:
                raise GaugeMismatch("projected boundary extension degenerates inside the simplex", margin=margin)
        except (IncompatibleFacetData, GaugeMismatch) as exc:
            if not (span_fallback and r == 1):
                raise GaugeMismatch(f"facet frames not matrix-compatible and rank {r} > 1: {exc}") from exc
            mode = "span"
            data = _span_data(simplex, frame_fn, facet_data, f.field, shape)
            ext = extend_from_boundary(simplex, data, cfg.den_pitch, cfg.tau_den)

        def fit_target(X, T, H):
            Hm = H.reshape((len(H),) + shape)
            return batch_mul(f(X), Hm, f.field).reshape(len(H), -1)
    else:
        ext = None

        def fit_target(X, T, H):
            return frame_fn(X).reshape(len(X), -1)

    def flat_oracle(X):
        return frame_fn(X).reshape(len(X), -1)

    try:
        g, rep = approximate_on_simplex(simplex, flat_oracle, data, eps, cfg, fit_target=fit_target,
                                        metric=metric, extension=ext)
    except DegreeCapExceeded as exc:
        if exc.achieved is not None and exc.achieved >= 2.0:
            raise RankLost("fitted frame loses rank at every degree", achieved=exc.achieved) from exc
        raise
    frame = np.array(g.numerators, dtype=object).reshape(shape)
    _, T, _ = simplex.lattice(cfg.cert_pitch)
    vals = np.stack([p.eval_float(T) for p in frame.ravel()], axis=-1).reshape((len(T),) + shape)
    report = rep.to_json()
    report.update({"rank_margin": frame_margin(vals, f.field), "oscillation": osc, "mode": mode})
    return GrassmannPiece(f.field, n, r, frame, mode, report)


def _target_margin(simplex, f, ext, shape, pitch):
    """min over samples of sigma_min(P_f H) / sigma_max(H) for the extension H."""
    _, T, X = simplex.lattice(pitch)
    H = ext.eval_float(T).reshape((len(T),) + shape)
    C = batch_mul(f(X), H, f.field)
    sc = np.linalg.svd(real_embed(C, f.field), compute_uv=False)
    sh = np.linalg.svd(real_embed(H, f.field), compute_uv=False)
    return float((sc[:, -1] / np.maximum(sh[:, 0], 1e-300)).min())


def _span_data(simplex, frame_fn, facet_frames, field, shape):
    """Span-level facet data from a low-degree fit B of the transported frame."""
    d = simplex.dim
    _, T, X = simplex.lattice(8)
    Bvals = frame_fn(X).reshape(len(X), -1)
    Bmat = np.array(least_squares_fit(T, Bvals, 2), dtype=object).reshape(shape)
    out = []
    for k, psi in enumerate(facet_frames):
        Bk = np.empty(shape, dtype=object)
        for idx in np.ndindex(shape):
            Bk[idx] = restrict_facet(Bmat[idx], d, k)
        out.append(_span_facet_data(psi, Bk, field))
    return out


def boundary_span_residual(piece, facet_frames, d, pitch=16):
    """max over facet samples of |(I - P_Gamma) Psi| with P_Gamma from the facet frame."""
    from .simplicial import local_lattice
    worst = 0.0
    for k, psi in enumerate(facet_frames):
        _, T = local_lattice(d - 1, pitch)
        if d - 1 == 0:
            T = np.zeros((1, 0))
        fac = GrassmannPiece(piece.field, piece.n, piece.r, psi)
        Pg, _ = fac.eval_proj(T)
        restricted = GrassmannPiece(piece.field, piece.n, piece.r, piece.restrict(d, k))
        V = restricted.eval_frames(T)
        resid = V - batch_mul(Pg, V, piece.field)
        scale = np.abs(V).max() or 1.0
        worst = max(worst, float(np.abs(resid).max() / scale))
    return worst


# -- exact projection data -------------------------------------------------------

def _det(M):
    """Laplace expansion; M is a small square list of MultiPoly."""
    k = len(M)
    if k == 1:
        return M[0][0]
    if k == 2:
        return M[0][0] * M[1][1] - M[0][1] * M[1][0]
    total = M[0][0] - M[0][0]
    for j in range(k):
        if M[0][j].is_zero():
            continue
        term = M[0][j] * _det([row[:j] + row[j + 1:] for row in M[1:]])
        total = total + term if j % 2 == 0 else total - term
    return total


def _adjugate(M):
    k = len(M)
    if k == 1:
        return [[MultiPoly.constant(M[0][0].num_vars, 1)]]
    adj = [[None] * k for _ in range(k)]
    for i in range(k):
        for j in range(k):
            minor = [row[:j] + row[j + 1:] for r, row in enumerate(M) if r != i]
            c = _det(minor)
            adj[j][i] = c if (i + j) % 2 == 0 else -c
    return adj


MAX_EXACT_GRAM = 4


def projection_data(frame, field):
    """Exact (num, den) with num / den the projection onto the span of a polynomial frame.

    Rank one uses num = Psi Psi*, den = |Psi|^2.  Otherwise the real Gram
    matrix is inverted by adjugate, which is limited to r * d(F) <= 4.
    """
    n, r, d = frame.shape
    nv = frame.flat[0].num_vars
    zero = MultiPoly.constant(nv, 0)
    if r == 1:
        adj = fconj(np.swapaxes(frame, 0, 1))
        den = sum((p * p for p in frame.ravel()), zero)
        return _poly_matmul(frame, adj, field), den
    if r * d > MAX_EXACT_GRAM:
        raise ValueError(f"exact projection data needs r*d(F) <= {MAX_EXACT_GRAM}")
    T = _rho_exact(field)
    R = [[zero] * (r * d) for _ in range(n * d)]
    for i in range(n):
        for j in range(r):
            for p in range(d):
                for m in range(d):
                    acc = zero
                    for c, sgn in T[p][m]:
                        acc = acc + frame[i, j, c] * sgn
                    R[i * d + p][j * d + m] = acc
    G = [[sum((R[a][i] * R[a][j] for a in range(n * d)), zero) for j in range(r * d)] for i in range(r * d)]
    det = _det(G)
    adjG = _adjugate(G)
    RA = [[sum((R[a][k] * adjG[k][j] for k in range(r * d)), zero) for j in range(r * d)] for a in range(n * d)]
    num = np.empty((n, n, d), dtype=object)
    for i in range(n):
        for j in range(n):
            for c in range(d):
                num[i, j, c] = sum((RA[i * d + c][k] * R[j * d][k] for k in range(r * d)), zero)
    return num, det


def _rho_exact(field):
    T = _RHO[field]
    d = T.shape[0]
    return [[[(c, int(T[p, m, c])) for c in range(d) if T[p, m, c]] for m in range(d)] for p in range(d)]


@dataclass
class ProjectionPiece:
    """Projection-valued rational data num / den on one simplex."""
    field: str
    n: int
    r: int
    num: np.ndarray
    den: MultiPoly
    mode: str = "projection"
    report: dict = dc_field(default_factory=dict)

    @classmethod
    def from_frame(cls, piece):
        num, den = projection_data(piece.frame, piece.field)
        return cls(piece.field, piece.n, piece.r, num, den, report=dict(piece.report))

    @property
    def num_vars(self):
        return self.den.num_vars

    def eval_proj(self, T):
        T = np.atleast_2d(np.asarray(T, dtype=float))
        if self.den.num_vars == 0:
            T = np.zeros((len(T), 0))
        dv = self.den.eval_float(T)
        vals = np.stack([p.eval_float(T) for p in self.num.ravel()], axis=-1)
        return vals.reshape((len(T),) + self.num.shape) / dv[:, None, None, None], None

    def restrict(self, d, k):
        num = np.empty(self.num.shape, dtype=object)
        for idx in np.ndindex(self.num.shape):
            num[idx] = restrict_facet(self.num[idx], d, k)
        return ProjectionPiece(self.field, self.n, self.r, num, restrict_facet(self.den, d, k))

    def same_on_face(self, facet_piece, d, k):
        f = facet_piece if isinstance(facet_piece, ProjectionPiece) else ProjectionPiece.from_frame(facet_piece)
        res = self.restrict(d, k)
        return all(a * f.den == b * res.den for a, b in zip(res.num.ravel(), f.num.ravel()))

    def complement(self):
        num = -self.num
        for i in range(self.n):
            num[i, i, 0] = num[i, i, 0] + self.den
        return ProjectionPiece(self.field, self.n, self.n - self.r, num, self.den)

    def equals(self, other):
        return all(a * other.den == b * self.den for a, b in zip(self.num.ravel(), other.num.ravel()))

    def to_json(self):
        return {"field": self.field, "n": self.n, "r": self.r, "mode": self.mode, "den": self.den.to_json(),
                "num": [[[self.num[i, j, c].to_json() for c in range(self.num.shape[2])]
                         for j in range(self.n)] for i in range(self.n)]}

    @classmethod
    def from_json(cls, obj):
        arr = np.empty((obj["n"], obj["n"], field_dim(obj["field"])), dtype=object)
        for idx in np.ndindex(arr.shape):
            arr[idx] = MultiPoly.from_json(obj["num"][idx[0]][idx[1]][idx[2]])
        return cls(obj["field"], obj["n"], obj["r"], arr, MultiPoly.from_json(obj["den"]))
