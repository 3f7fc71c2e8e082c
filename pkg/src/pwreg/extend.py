"""Boundary extension and boundary-exact approximation on a single simplex.

All polynomials live in the simplex's local parameters t (see simplicial).
Facet data is a list indexed by the opposite vertex: ``data[k]`` is a
RegularFnVector in the local parameters of facet k.
"""
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import DegreeCapExceeded, DenominatorVanishes, DenominatorZero, IncompatibleFacetData, RankDeficient
from .polyalg import (MultiPoly, RegularFnVector, barycentric_forms, design_matrix, face_ideal_generator,
                      lstsq_qr, monomial_exponents, snap, snap_to_exact)
from .simplicial import local_lattice

TAU_DEN = 1e-9
CERT_PITCH = 64
MAX_FIT_POINTS = 20000


@dataclass
class FitConfig:
    degree_start: int = 2
    degree_step: int = 2
    degree_cap: int = 20
    pitch_factor: int = 4
    cert_pitch: int = 32
    den_pitch: int = CERT_PITCH
    tau_den: float = TAU_DEN

    def degrees(self):
        return list(range(self.degree_start, self.degree_cap + 1, self.degree_step)) or [self.degree_cap]


@dataclass
class FitReport:
    degree: int
    achieved: float
    history: list = field(default_factory=list)
    den_margin: float = None
    success: bool = True

    def to_json(self):
        return {"degree": self.degree, "achieved": self.achieved, "history": [list(h) for h in self.history],
                "den_margin": self.den_margin, "success": self.success}


# -- face maps in local parameters -------------------------------------------

def face_forms(d, kept):
    """Forms expressing the d local parameters on the face spanned by vertex positions `kept`."""
    e = len(kept) - 1
    mu = barycentric_forms(e) if e else [MultiPoly.constant(0, 1)]
    zero = MultiPoly.constant(e, 0)
    pos = {v: j for j, v in enumerate(kept)}
    return [mu[pos[i]] if i in pos else zero for i in range(1, d + 1)]


def restrict_face(p, d, kept):
    if d == 0:
        return p
    return p.compose_to(face_forms(d, kept), len(kept) - 1)


def facet_positions(d, k):
    return [i for i in range(d + 1) if i != k]


def restrict_facet(p, d, k):
    return restrict_face(p, d, facet_positions(d, k))


def lift_facet(h, d, k):
    """Extend a facet-k polynomial to the simplex by reading it in the other barycentric coordinates."""
    lam = barycentric_forms(d)
    kept = facet_positions(d, k)
    forms = [lam[v] for v in kept[1:]]
    return h.compose_to(forms, d)


# -- compatibility and common denominators -----------------------------------

def _shared_positions(d, j, k):
    """Positions, inside facet j's numbering, of the face shared with facet k."""
    kept = facet_positions(d, j)
    return [kept.index(v) for v in kept if v != k]


def check_compatible(d, data):
    """Raise IncompatibleFacetData unless facets agree on every shared (d-2)-face."""
    if d < 2:
        return
    for j in range(d + 1):
        for k in range(j + 1, d + 1):
            a, b = data[j], data[k]
            fa = _shared_positions(d, j, k)
            fb = _shared_positions(d, k, j)
            da = restrict_face(a.denominator, d - 1, fa)
            db = restrict_face(b.denominator, d - 1, fb)
            for na, nb in zip(a.numerators, b.numerators):
                if restrict_face(na, d - 1, fa) * db != restrict_face(nb, d - 1, fb) * da:
                    raise IncompatibleFacetData(f"facets {j} and {k} disagree on their shared face",
                                                facets=(j, k))


def common_denominator(d, data):
    """Return (S, numerators per facet) with data[k] = nums[k] / S|_facet_k exactly."""
    lifted = []
    for k, item in enumerate(data):
        den = item.denominator
        lifted.append(None if den.is_constant() else lift_facet(den, d, k))
    distinct = []
    for L in lifted:
        if L is not None and L not in distinct:
            distinct.append(L)
    S = MultiPoly.constant(d, 1)
    for L in distinct:
        S = S * L
    nums = []
    for k, item in enumerate(data):
        den = item.denominator
        if lifted[k] is None:
            c = den.constant_term()
            factor = MultiPoly.constant(d - 1, 1) / c
            others = distinct
        else:
            factor = MultiPoly.constant(d - 1, 1)
            others = [L for L in distinct if L != lifted[k]]
        for L in others:
            factor = factor * restrict_facet(L, d, k)
        nums.append([n * factor for n in item.numerators])
    return S, nums


def certify_positive(den, d, pitch=CERT_PITCH, tau=TAU_DEN):
    """Sampled-minimum positivity certificate on the simplex; returns the minimum."""
    if den.is_constant():
        c = float(den.constant_term())
        if c <= tau:
            raise DenominatorVanishes(f"constant denominator {c}")
        return c
    _, T = local_lattice(d, pitch)
    vals = den.eval_float(T)
    lo = float(vals.min())
    if not lo > tau:
        raise DenominatorVanishes(f"sampled denominator minimum {lo:.3g} <= {tau}", minimum=lo)
    return lo


# -- extension -----------------------------------------------------------------

def extend_from_boundary(simplex, data, den_pitch=CERT_PITCH, tau_den=TAU_DEN):
    """Regular F on the simplex whose restriction to each facet equals the facet data exactly."""
    d = simplex.dim if hasattr(simplex, "dim") else int(simplex)
    if d < 1:
        raise ValueError("extension needs dim >= 1")
    if len(data) != d + 1:
        raise ValueError(f"need {d + 1} facet entries, got {len(data)}")
    ncomp = len(data[0].numerators)
    check_compatible(d, data)
    S, nums = common_denominator(d, data)
    if not S.is_constant():
        # orient S positive at the barycenter
        bc = [1 / (d + 1)] * d
        if S.eval_float(np.array(bc)) < 0:
            S = -S
            nums = [[-n for n in row] for row in nums]
    margin = certify_positive(S, d, den_pitch, tau_den)
    lam = barycentric_forms(d)
    F = [MultiPoly.constant(d, 0) for _ in range(ncomp)]
    L = MultiPoly.constant(d, 1)
    for k in range(d + 1):
        divisors = [restrict_facet(lam[j], d, k) for j in range(k)]
        for c in range(ncomp):
            r = nums[k][c] - restrict_facet(F[c], d, k)
            for dv in divisors:
                r = r.div_linear(dv)
                if r is None:
                    raise IncompatibleFacetData(f"facet {k} data not divisible by earlier facet forms",
                                                facet=k, component=c)
            F[c] = F[c] + L * lift_facet(r, d, k)
        L = L * lam[k]
    tag = f"den>={margin:.6g} on lattice pitch {den_pitch}"
    return RegularFnVector(F, S, simplex if hasattr(simplex, "dim") else None, tag)


# -- approximation -------------------------------------------------------------

def _fit_pitch(d, degree, factor):
    nbasis = len(monomial_exponents(d, degree))
    pitch = max(factor * degree, degree + d + 2, 8)
    while pitch > degree + d + 2 and comb(pitch + d, d) > MAX_FIT_POINTS and comb(pitch - 1, d) > 2 * nbasis:
        pitch -= 1
    return pitch


def _default_metric(F, G):
    return np.abs(F - G).max(axis=1)


def sup_error_estimate(g, f, simplex, pitch, metric=None):
    """max over the barycentric lattice of the per-point error (default: sup norm)."""
    if pitch < 2 and simplex.dim > 0:
        raise ValueError("pitch must be >= 2")
    _, T, X = simplex.lattice(pitch)
    G = g.eval_float(T) if g.num_vars else np.tile(g.eval_float(np.zeros((1, 0))), (len(X), 1))
    if not np.all(np.isfinite(G)):
        raise DenominatorZero("fitted map not finite on the lattice")
    F = np.asarray(f(X), dtype=float).reshape(len(X), -1)
    err = metric(X, G) if metric is not None else _default_metric(F, G)
    return float(np.max(err))


def fit_with_boundary(simplex, h, target, degree, pitch_factor=4):
    """One boundary-exact fit: g = h + q p with p the q-weighted least-squares fit of target - h."""
    d = simplex.dim
    pitch = _fit_pitch(d, degree, pitch_factor)
    _, T, X = simplex.lattice(pitch)
    Y = np.asarray(target(X, T), dtype=float).reshape(len(X), -1)
    exps = monomial_exponents(d, degree)
    center = [1.0 / (d + 1)] * d
    V = design_matrix(T, exps, center)
    if h is not None:
        Hv = h.eval_float(T)
        q = face_ideal_generator(d)
        V = V * q.eval_float(T)[:, None]
        R = Y - Hv
    else:
        R = Y
    coef = lstsq_qr(V, R)
    c = snap(center[0]) if d else 0
    shift = [MultiPoly.affine([1 if j == i else 0 for j in range(d)], -c) for i in range(d)]
    ps = [snap_to_exact(coef[:, j], exps, d).compose_to(shift, d) for j in range(R.shape[1])]
    if h is None:
        return RegularFnVector(ps, None, simplex, "polynomial")
    q = face_ideal_generator(d)
    nums = [n + h.denominator * q * p for n, p in zip(h.numerators, ps)]
    return RegularFnVector(nums, h.denominator, simplex, h.domain_tag)


def approximate_on_simplex(simplex, f, data, eps, config=None, fit_target=None, metric=None,
                           extension=None, raise_on_cap=True):
    """Boundary-exact approximation with degree escalation.

    f: vectorized oracle on ambient points, (N, m) -> (N, c).
    data: facet data or None (free fit).  fit_target(X, T, H) overrides the
    values fitted (H: extension values); metric(X, G) overrides the error.
    Returns (RegularFnVector, FitReport).
    """
    cfg = config or FitConfig()
    d = simplex.dim
    if d == 0:
        X = simplex.to_ambient_float(np.zeros((1, 0)))
        vals = np.asarray(f(X), dtype=float).reshape(-1)
        g = RegularFnVector([MultiPoly.constant(0, snap(v)) for v in vals], None, simplex, "vertex")
        err = sup_error_estimate(g, f, simplex, 1, metric) if metric else 0.0
        return g, FitReport(0, float(err), [(0, float(err))])
    h = None
    if data is not None:
        h = extension if extension is not None else extend_from_boundary(simplex, data, cfg.den_pitch, cfg.tau_den)

    def target(X, T):
        if fit_target is not None:
            H = h.eval_float(T) if h is not None else None
            return fit_target(X, T, H)
        return f(X)

    best = None
    history = []
    for deg in cfg.degrees():
        try:
            g = fit_with_boundary(simplex, h, target, deg, cfg.pitch_factor)
        except RankDeficient:
            # design too ill-conditioned at this degree; keep the best fit so far
            if best is None:
                raise
            break
        err = sup_error_estimate(g, f, simplex, cfg.cert_pitch, metric)
        history.append((deg, err))
        if best is None or err < best[1]:
            best = (g, err, deg)
        if err < eps:
            break
    g, err, deg = best
    running = []
    low = np.inf
    for dg, e in history:
        low = min(low, e)
        running.append((dg, float(low)))
    margin = None
    if h is not None and not h.denominator.is_constant():
        margin = certify_positive(h.denominator, d, cfg.den_pitch, cfg.tau_den)
    report = FitReport(deg, float(err), running, margin, err < eps)
    if err >= eps and raise_on_cap:
        raise DegreeCapExceeded(f"sup error {err:.3g} >= {eps} at degree cap {cfg.degree_cap}",
                                best=(g, report), achieved=float(err))
    return g, report
