"""Exact multivariate polynomials and rational functions over Q.

Coefficients are ``gmpy2.mpq``.  Exponent vectors are packed into a single
integer key (12 bits per variable) so products reduce to integer additions;
this caps the exponent of any one variable at 4095.
"""
import math
from fractions import Fraction
from functools import reduce
from itertools import combinations_with_replacement

import gmpy2
import numpy as np
import scipy.linalg
from gmpy2 import mpq

from .errors import DenominatorZero, NonFinite, RankDeficient

_BITS = 12
_MASK = (1 << _BITS) - 1

ZERO = mpq(0)
ONE = mpq(1)


def Q(x):
    """Coerce ints, Fractions, floats (bit-exact), mpq and "p/q" strings to mpq."""
    if isinstance(x, str):
        return mpq(x.strip())
    if isinstance(x, float):
        if not math.isfinite(x):
            raise NonFinite(f"cannot snap {x!r}")
        return mpq(x)
    if isinstance(x, (np.floating,)):
        return Q(float(x))
    if isinstance(x, (np.integer,)):
        return mpq(int(x))
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    return mpq(x)


def fmt_q(x):
    """Serialize a rational as "p/q" (or "p" when integral)."""
    x = Q(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def _pack(exp):
    key = 0
    for i, e in enumerate(exp):
        key |= int(e) << (_BITS * i)
    return key


def _unpack(key, n):
    return tuple((key >> (_BITS * i)) & _MASK for i in range(n))


_KRONECKER_MIN = 4096


def _integer_coeffs(t):
    den = reduce(gmpy2.lcm, (c.denominator for c in t.values()), gmpy2.mpz(1))
    return den, {k: int(c * den) for k, c in t.items()}


def _kronecker_mul(a, b, n):
    """Exact product of packed-term dicts by one big-integer multiplication.

    Exponents are laid out densely (mixed radix), coefficients become digits
    of a signed big integer, and a bias makes every digit of the product
    non-negative so it can be read back by byte slicing.  Returns None when
    the dense layout would be much larger than the term count.
    """
    ea = {k: _unpack(k, n) for k in a}
    eb = {k: _unpack(k, n) for k in b}
    top = [max(e[i] for e in ea.values()) + max(e[i] for e in eb.values()) + 1 for i in range(n)]
    size = math.prod(top)
    if size > 4 * len(a) * len(b) or size > 1 << 22:
        return None
    strides = [math.prod(top[:i]) for i in range(n)]
    da, ia = _integer_coeffs(a)
    db, ib = _integer_coeffs(b)
    bound = max(map(abs, ia.values())) * max(map(abs, ib.values())) * min(len(a), len(b))
    w = (bound.bit_length() + 2 + 7) // 8

    def layout(ints, exps):
        pos = bytearray(w * size)
        neg = bytearray(w * size)
        for k, c in ints.items():
            j = w * sum(x * st for x, st in zip(exps[k], strides))
            if c >= 0:
                pos[j:j + w] = c.to_bytes(w, "little")
            else:
                neg[j:j + w] = (-c).to_bytes(w, "little")
        return gmpy2.mpz(int.from_bytes(pos, "little")) - gmpy2.mpz(int.from_bytes(neg, "little"))

    prod = layout(ia, ea) * layout(ib, eb)
    half = 1 << (8 * w - 1)
    bias = int.from_bytes(half.to_bytes(w, "little") * size, "little")
    raw = int(prod + bias).to_bytes(w * size, "little")
    # packed key of every dense slot
    keys = np.zeros(size, dtype=np.int64)
    idx = np.arange(size, dtype=np.int64)
    for i in range(n):
        keys |= ((idx // strides[i]) % top[i]) << (_BITS * i)
    den = gmpy2.mpz(da * db)
    t = {}
    for j in range(size):
        c = int.from_bytes(raw[j * w:(j + 1) * w], "little") - half
        if c:
            t[int(keys[j])] = mpq(c, den)
    return t


def monomial_exponents(num_vars, degree):
    """All exponent vectors of total degree <= `degree`, graded then lexicographic."""
    out = []
    for deg in range(degree + 1):
        for combo in combinations_with_replacement(range(num_vars), deg):
            e = [0] * num_vars
            for v in combo:
                e[v] += 1
            out.append(tuple(e))
    if num_vars == 0:
        return [()]
    return out


class MultiPoly:
    """Sparse polynomial in `num_vars` variables with exact rational coefficients."""

    __slots__ = ("num_vars", "_t", "_cache")

    def __init__(self, num_vars, terms=None):
        self.num_vars = num_vars
        self._cache = None
        t = {}
        if terms:
            for exp, c in terms.items():
                if len(exp) != num_vars:
                    raise ValueError(f"exponent {exp} has wrong length for {num_vars} vars")
                c = Q(c)
                if c:
                    k = _pack(exp)
                    t[k] = t.get(k, ZERO) + c
                    if not t[k]:
                        del t[k]
        self._t = t

    @classmethod
    def _raw(cls, num_vars, packed):
        p = cls.__new__(cls)
        p.num_vars = num_vars
        p._t = packed
        p._cache = None
        return p

    @classmethod
    def constant(cls, num_vars, c):
        c = Q(c)
        return cls._raw(num_vars, {0: c} if c else {})

    @classmethod
    def var(cls, num_vars, i):
        return cls._raw(num_vars, {1 << (_BITS * i): ONE})

    @classmethod
    def affine(cls, coeffs, const=0):
        """The affine form sum(coeffs[i] * x_i) + const."""
        n = len(coeffs)
        t = {}
        c0 = Q(const)
        if c0:
            t[0] = c0
        for i, a in enumerate(coeffs):
            a = Q(a)
            if a:
                t[1 << (_BITS * i)] = a
        return cls._raw(n, t)

    # -- structure -------------------------------------------------------
    @property
    def terms(self):
        n = self.num_vars
        return {_unpack(k, n): c for k, c in self._t.items()}

    def is_zero(self):
        return not self._t

    def is_constant(self):
        return not self._t or list(self._t) == [0]

    def constant_term(self):
        return self._t.get(0, ZERO)

    def degree(self):
        if not self._t:
            return -1
        return max(sum(e) for e in self.terms)

    def __len__(self):
        return len(self._t)

    def __eq__(self, other):
        if isinstance(other, MultiPoly):
            return self.num_vars == other.num_vars and self._t == other._t
        try:
            c = Q(other)
        except (TypeError, ValueError):
            return NotImplemented
        return self._t == ({0: c} if c else {})

    def __hash__(self):
        return hash((self.num_vars, frozenset(self._t.items())))

    def __repr__(self):
        if not self._t:
            return "MultiPoly(0)"
        parts = []
        for exp, c in sorted(self.terms.items()):
            mono = "*".join(f"x{i}^{e}" if e > 1 else f"x{i}" for i, e in enumerate(exp) if e)
            parts.append(f"{fmt_q(c)}*{mono}" if mono else fmt_q(c))
        return "MultiPoly(" + " + ".join(parts) + ")"

    # -- arithmetic ------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, MultiPoly):
            if other.num_vars != self.num_vars:
                raise ValueError(f"variable count mismatch {self.num_vars} vs {other.num_vars}")
            return other
        return MultiPoly.constant(self.num_vars, other)

    def __add__(self, other):
        other = self._coerce(other)
        t = dict(self._t)
        for k, c in other._t.items():
            v = t.get(k, ZERO) + c
            if v:
                t[k] = v
            else:
                t.pop(k, None)
        return MultiPoly._raw(self.num_vars, t)

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly._raw(self.num_vars, {k: -c for k, c in self._t.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, MultiPoly):
            c = Q(other)
            if not c:
                return MultiPoly._raw(self.num_vars, {})
            return MultiPoly._raw(self.num_vars, {k: v * c for k, v in self._t.items()})
        other = self._coerce(other)
        a, b = self._t, other._t
        if len(a) < len(b):
            a, b = b, a
        if len(a) * len(b) >= _KRONECKER_MIN:
            t = _kronecker_mul(a, b, self.num_vars)
            if t is not None:
                return MultiPoly._raw(self.num_vars, t)
        t = {}
        get = t.get
        for kb, cb in b.items():
            for ka, ca in a.items():
                k = ka + kb
                t[k] = get(k, ZERO) + ca * cb
        return MultiPoly._raw(self.num_vars, {k: v for k, v in t.items() if v})

    __rmul__ = __mul__

    def __truediv__(self, c):
        c = Q(c)
        if not c:
            raise ZeroDivisionError("polynomial divided by zero")
        return self * (ONE / c)

    def __pow__(self, e):
        result = MultiPoly.constant(self.num_vars, 1)
        base = self
        while e:
            if e & 1:
                result = result * base
            e >>= 1
            if e:
                base = base * base
        return result

    # -- evaluation ------------------------------------------------------
    def __call__(self, x):
        return evaluate(self, x)

    def eval_exact(self, x):
        x = [Q(v) for v in x]
        if len(x) != self.num_vars:
            raise ValueError("point has wrong dimension")
        total = ZERO
        n = self.num_vars
        for k, c in self._t.items():
            term = c
            for i in range(n):
                e = (k >> (_BITS * i)) & _MASK
                if e:
                    term *= x[i] ** e
            total += term
        return total

    def _numeric(self):
        if self._cache is None:
            n = self.num_vars
            keys = list(self._t)
            exps = np.array([_unpack(k, n) for k in keys], dtype=np.int64).reshape(len(keys), n)
            coefs = np.array([float(self._t[k]) for k in keys], dtype=float)
            self._cache = (exps, coefs)
        return self._cache

    def eval_float(self, pts):
        """Vectorized float evaluation at an (N, num_vars) array; returns shape (N,)."""
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        if self.num_vars == 0:
            pts = pts.reshape(1 if single else max(len(pts), 1), 0)
        else:
            pts = pts.reshape(-1, self.num_vars)
        exps, coefs = self._numeric()
        if len(coefs) == 0:
            out = np.zeros(pts.shape[0])
        else:
            mon = np.ones((pts.shape[0], len(coefs)))
            for i in range(self.num_vars):
                col = exps[:, i]
                top = int(col.max())
                if top == 0:
                    continue
                pw = pts[:, i:i + 1] ** np.arange(top + 1)
                mon *= pw[:, col]
            out = mon @ coefs
        return out[0] if single else out

    # -- substitution ----------------------------------------------------
    def compose(self, forms):
        """Substitute x_i -> forms[i] (polynomials in a common new variable set)."""
        if len(forms) != self.num_vars:
            raise ValueError("need one form per variable")
        if not forms:
            raise ValueError("compose on a constant needs the target variable count")
        m = forms[0].num_vars
        return _compose(self.terms, forms, 0, m)

    def compose_to(self, forms, num_new_vars):
        if self.num_vars == 0:
            return MultiPoly.constant(num_new_vars, self.constant_term())
        return _compose(self.terms, forms, 0, num_new_vars)

    def div_linear(self, ell):
        """Exact quotient by an affine form; None if `ell` does not divide self."""
        ell = self._coerce(ell)
        if ell.is_zero():
            raise ZeroDivisionError("division by the zero form")
        if ell.is_constant():
            return self / ell.constant_term()
        n = self.num_vars
        v = max(i for i in range(n) if (1 << (_BITS * i)) in ell._t)
        unit = 1 << (_BITS * v)
        inv = ONE / ell._t[unit]
        shift = _BITS * v
        p = dict(self._t)
        quot = {}
        while p:
            top = max((k >> shift) & _MASK for k in p)
            if top == 0:
                return None
            lead = {k - unit: c * inv for k, c in p.items() if ((k >> shift) & _MASK) == top}
            for k, c in lead.items():
                quot[k] = quot.get(k, ZERO) + c
                for lk, lc in ell._t.items():
                    kk = k + lk
                    val = p.get(kk, ZERO) - c * lc
                    if val:
                        p[kk] = val
                    else:
                        p.pop(kk, None)
        return MultiPoly._raw(n, {k: c for k, c in quot.items() if c})

    # -- serialization ---------------------------------------------------
    def to_json(self):
        items = sorted(self.terms.items())
        return {"vars": self.num_vars, "terms": [{"exp": list(e), "coef": fmt_q(c)} for e, c in items]}

    @classmethod
    def from_json(cls, obj):
        n = int(obj["vars"])
        return cls(n, {tuple(t["exp"]): Q(t["coef"]) for t in obj["terms"]})


def _compose(terms, forms, idx, m):
    if idx == len(forms):
        c = sum(terms.values(), ZERO)
        return MultiPoly.constant(m, c)
    if not terms:
        return MultiPoly.constant(m, 0)
    groups = {}
    for exp, c in terms.items():
        groups.setdefault(exp[idx], {})[exp] = c
    acc = MultiPoly.constant(m, 0)
    form = forms[idx]
    for e in range(max(groups), -1, -1):
        acc = acc * form
        if e in groups:
            acc = acc + _compose(groups[e], forms, idx + 1, m)
    return acc


class RationalFn:
    """numerator / denominator, with a free-text note on where the denominator is certified."""

    __slots__ = ("numerator", "denominator", "domain_tag")

    def __init__(self, numerator, denominator=None, domain_tag=""):
        if denominator is None:
            denominator = MultiPoly.constant(numerator.num_vars, 1)
        if denominator.is_zero():
            raise DenominatorZero("zero denominator polynomial")
        self.numerator = numerator
        self.denominator = denominator
        self.domain_tag = domain_tag

    @property
    def num_vars(self):
        return self.numerator.num_vars

    def __call__(self, x):
        return evaluate(self, x)

    def to_json(self):
        return {"num": self.numerator.to_json(), "den": self.denominator.to_json(), "domain": self.domain_tag}

    @classmethod
    def from_json(cls, obj):
        return cls(MultiPoly.from_json(obj["num"]), MultiPoly.from_json(obj["den"]), obj.get("domain", ""))


class RegularFnVector:
    """Components numerators[i] / denominator on one simplex, in its local parameters."""

    def __init__(self, numerators, denominator=None, simplex=None, domain_tag=""):
        self.numerators = list(numerators)
        nv = self.numerators[0].num_vars if self.numerators else (denominator.num_vars if denominator else 0)
        self.denominator = denominator if denominator is not None else MultiPoly.constant(nv, 1)
        self.simplex = simplex
        self.domain_tag = domain_tag

    @property
    def num_vars(self):
        return self.denominator.num_vars

    @property
    def components(self):
        return [RationalFn(p, self.denominator, self.domain_tag) for p in self.numerators]

    def __len__(self):
        return len(self.numerators)

    def eval_float(self, pts):
        pts = np.asarray(pts, dtype=float)
        pts = pts.reshape(max(len(pts), 1) if self.num_vars == 0 else -1, self.num_vars)
        den = self.denominator.eval_float(pts)
        if np.any(den == 0):
            raise DenominatorZero("denominator vanishes at a sample")
        return np.stack([p.eval_float(pts) for p in self.numerators], axis=1) / den[:, None]

    def eval_exact(self, x):
        den = self.denominator.eval_exact(x)
        if not den:
            raise DenominatorZero(f"denominator vanishes at {x}")
        return [p.eval_exact(x) / den for p in self.numerators]

    def to_json(self):
        return {
            "nums": [p.to_json() for p in self.numerators],
            "den": self.denominator.to_json(),
            "domain": self.domain_tag,
        }

    @classmethod
    def from_json(cls, obj, simplex=None):
        return cls([MultiPoly.from_json(p) for p in obj["nums"]], MultiPoly.from_json(obj["den"]),
                   simplex, obj.get("domain", ""))


def evaluate(f, x):
    """Exact value at a rational point, float value at a float point."""
    is_float = any(isinstance(v, (float, np.floating)) for v in x)
    if isinstance(f, RationalFn):
        if is_float:
            den = f.denominator.eval_float(np.array(x, dtype=float))
            if den == 0:
                raise DenominatorZero(f"denominator vanishes at {x}")
            return f.numerator.eval_float(np.array(x, dtype=float)) / den
        den = f.denominator.eval_exact(x)
        if not den:
            raise DenominatorZero(f"denominator vanishes at {x}")
        return f.numerator.eval_exact(x) / den
    if is_float:
        return float(f.eval_float(np.array(x, dtype=float)))
    return f.eval_exact(x)


def restrict_to_hull(f, hull):
    """Compose an ambient polynomial with the hull parametrization x = base + sum t_i b_i."""
    base = hull.base_point
    basis = hull.basis
    d = len(basis)
    forms = [MultiPoly.affine([b[j] for b in basis], base[j]) if d else MultiPoly.constant(0, base[j])
             for j in range(len(base))]
    return f.compose_to(forms, d)


def barycentric_forms(d):
    """lambda_0 = 1 - sum t, lambda_i = t_i as polynomials in d local parameters."""
    lam0 = MultiPoly.affine([-1] * d, 1)
    return [lam0] + [MultiPoly.var(d, i) for i in range(d)]


def face_ideal_generator(simplex):
    """Product of the facet forms in local parameters: positive inside, zero on the boundary."""
    d = simplex.dim if hasattr(simplex, "dim") else int(simplex)
    if d < 1:
        raise ValueError("face ideal generator needs dim >= 1")
    q = MultiPoly.constant(d, 1)
    for lam in barycentric_forms(d):
        q = q * lam
    return q


def snap(x):
    """The exact dyadic rational a float represents."""
    x = float(x)
    if not math.isfinite(x):
        raise NonFinite(f"cannot snap {x!r}")
    return mpq(x)


def snap_to_exact(coeffs, exponents=None, num_vars=None):
    """Snap float coefficients bit-exactly.

    With `exponents` returns the MultiPoly sum(coeffs[i] * x^exponents[i]);
    otherwise returns a list of mpq.
    """
    vals = [snap(c) for c in np.ravel(np.asarray(coeffs, dtype=float))]
    if exponents is None:
        return vals
    exponents = [tuple(e) for e in exponents]
    nv = num_vars if num_vars is not None else len(exponents[0])
    return MultiPoly(nv, dict(zip(exponents, vals)))


def design_matrix(pts, exponents, center=None):
    pts = np.asarray(pts, dtype=float)
    if center is not None:
        pts = pts - np.asarray(center, dtype=float)
    exps = np.asarray(exponents, dtype=np.int64).reshape(len(exponents), pts.shape[1])
    V = np.ones((pts.shape[0], len(exponents)))
    for i in range(pts.shape[1]):
        col = exps[:, i]
        top = int(col.max()) if len(col) else 0
        if top:
            V *= (pts[:, i:i + 1] ** np.arange(top + 1))[:, col]
    return V


def lstsq_qr(V, Y, cond_max=1e12):
    """Least squares via QR; raises RankDeficient for an ill-posed design."""
    N, T = V.shape
    if N < T:
        raise RankDeficient(f"{N} samples for {T} unknowns")
    Qm, R = np.linalg.qr(V)
    sv = np.linalg.svd(R, compute_uv=False)
    if sv[-1] <= 0 or sv[0] / sv[-1] > cond_max:
        raise RankDeficient(f"design condition number {sv[0] / max(sv[-1], 1e-300):.3g}")
    return scipy.linalg.solve_triangular(R, Qm.T @ Y)


def least_squares_fit(points, values, degree, weight=None, center=None):
    """Fit p of total degree <= `degree` minimizing sum (v_i - w(x_i) p(x_i))^2.

    The basis is monomials in x - center (default: the dyadic-snapped sample
    mean).  Coefficients are snapped bit-exactly and re-expanded in x exactly.
    Multi-column `values` return a list of polynomials.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    Y = np.asarray(values, dtype=float)
    multi = Y.ndim == 2
    Y2 = Y if multi else Y[:, None]
    k = pts.shape[1]
    c = pts.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    c = np.array([float(snap(v)) for v in c])
    exps = monomial_exponents(k, degree)
    V = design_matrix(pts, exps, c)
    if weight is not None:
        V = V * weight.eval_float(pts)[:, None]
    coef = lstsq_qr(V, Y2)
    shift = [MultiPoly.affine([1 if j == i else 0 for j in range(k)], -snap(c[i])) for i in range(k)]
    polys = [snap_to_exact(coef[:, j], exps, k).compose_to(shift, k) for j in range(Y2.shape[1])]
    return polys if multi else polys[0]
