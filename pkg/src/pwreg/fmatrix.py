"""Scalars and matrices over F in {R, C, H}, stored as real components.

Conventions: F^n is a left F-module; a matrix A acts by
``A(x)_i = sum_j x_j a_ij`` and products are ``(AB)_ik = sum_j b_jk a_ij``,
so that A(B(x)) = (AB)(x).  An F-matrix is an array of shape
(rows, cols, d) with d = 1, 2, 4; component order is (1, i, j, k).
Entries may be floats, mpq or MultiPoly (object arrays).
"""
import numpy as np
from gmpy2 import mpq

from .errors import ShapeMismatch
from .polyalg import Q, fmt_q

FIELD_DIM = {"R": 1, "C": 2, "H": 4}


def field_dim(field):
    try:
        return FIELD_DIM[field]
    except KeyError:
        raise ValueError(f"unknown field {field!r}") from None


def fmul(a, b, field):
    """Componentwise product a*b of F-scalars along the last axis (broadcasting)."""
    if field == "R":
        return a * b
    if field == "C":
        a0, a1 = a[..., 0], a[..., 1]
        b0, b1 = b[..., 0], b[..., 1]
        return np.stack([a0 * b0 - a1 * b1, a0 * b1 + a1 * b0], axis=-1)
    a0, a1, a2, a3 = (a[..., i] for i in range(4))
    b0, b1, b2, b3 = (b[..., i] for i in range(4))
    return np.stack([
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    ], axis=-1)


def fconj(a):
    out = -a
    out[..., 0] = a[..., 0]
    return out


class FScalar:
    """One element of R, C or H with exact or float components."""

    __slots__ = ("field", "c")

    def __init__(self, field, comps):
        d = field_dim(field)
        comps = list(comps) + [0] * (d - len(comps))
        self.field = field
        self.c = np.array(comps[:d], dtype=object if not isinstance(comps[0], float) else float)

    @classmethod
    def exact(cls, field, comps):
        s = cls.__new__(cls)
        s.field = field
        d = field_dim(field)
        comps = [Q(v) for v in comps] + [mpq(0)] * (d - len(comps))
        s.c = np.array(comps, dtype=object)
        return s

    def _new(self, c):
        s = FScalar.__new__(FScalar)
        s.field = self.field
        s.c = c
        return s

    def __mul__(self, other):
        return self._new(fmul(self.c, other.c, self.field))

    def __add__(self, other):
        return self._new(self.c + other.c)

    def __sub__(self, other):
        return self._new(self.c - other.c)

    def __neg__(self):
        return self._new(-self.c)

    def conj(self):
        return self._new(fconj(self.c))

    def norm2(self):
        return sum(v * v for v in self.c)

    def inverse(self):
        n = self.norm2()
        return self._new(np.array([v / n for v in fconj(self.c)], dtype=self.c.dtype))

    def __eq__(self, other):
        return self.field == other.field and all(a == b for a, b in zip(self.c, other.c))

    def __repr__(self):
        return f"FScalar({self.field}, {list(self.c)})"


def _rho_tensor(field):
    """T[p, m, c]: vec(x * a)_p = sum_{m,c} T[p,m,c] x_m a_c."""
    d = field_dim(field)
    T = np.zeros((d, d, d))
    eye = np.eye(d)
    for m in range(d):
        for c in range(d):
            T[:, m, c] = fmul(eye[m], eye[c], field)
    return T


_RHO = {f: _rho_tensor(f) for f in FIELD_DIM}


def real_embed(A, field):
    """Real matrix of L_A: float array (..., rows, cols, d) -> (..., rows*d, cols*d)."""
    A = np.asarray(A, dtype=float)
    d = field_dim(field)
    rows, cols = A.shape[-3], A.shape[-2]
    blocks = np.einsum("pmc,...ijc->...ipjm", _RHO[field], A)
    return blocks.reshape(A.shape[:-3] + (rows * d, cols * d))


def real_embed_exact(A, field):
    """Exact real embedding for object arrays of mpq."""
    d = field_dim(field)
    rows, cols = A.shape[0], A.shape[1]
    T = _RHO[field]
    R = [[mpq(0)] * (cols * d) for _ in range(rows * d)]
    for i in range(rows):
        for j in range(cols):
            a = A[i, j]
            for p in range(d):
                for m in range(d):
                    R[i * d + p][j * d + m] = sum((int(T[p, m, c]) * a[c] for c in range(d) if T[p, m, c]), mpq(0))
    return R


def from_real_embed(R, field, rows, cols):
    """Inverse of real_embed for F-structured real matrices: a_ij is block (i,j) applied to 1."""
    d = field_dim(field)
    R = np.asarray(R)
    blk = R.reshape(R.shape[:-2] + (rows, d, cols, d))
    return np.swapaxes(blk[..., 0], -2, -1)


class FMatrix:
    """rows x cols matrix over F; `data` has shape (rows, cols, d)."""

    def __init__(self, field, data):
        self.field = field
        d = field_dim(field)
        data = np.asarray(data) if not isinstance(data, np.ndarray) else data
        if data.ndim == 2 and d == 1:
            data = data[..., None]
        if data.shape[-1] != d or data.ndim != 3:
            raise ShapeMismatch(f"data shape {data.shape} does not fit field {field}")
        self.data = data

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape[:2]

    @property
    def is_exact(self):
        return self.data.dtype == object

    @classmethod
    def identity(cls, field, n, exact=False):
        d = field_dim(field)
        if exact:
            data = np.empty((n, n, d), dtype=object)
            data[...] = mpq(0)
            for i in range(n):
                data[i, i, 0] = mpq(1)
        else:
            data = np.zeros((n, n, d))
            data[np.arange(n), np.arange(n), 0] = 1.0
        return cls(field, data)

    @classmethod
    def exact(cls, field, data):
        arr = np.asarray(data, dtype=object)
        d = field_dim(field)
        if arr.ndim == 2 and d == 1:
            arr = arr[..., None]
        out = np.empty(arr.shape, dtype=object)
        for idx in np.ndindex(arr.shape):
            out[idx] = Q(arr[idx])
        return cls(field, out)

    def _check(self, other):
        if other.field != self.field:
            raise ShapeMismatch(f"field {self.field} vs {other.field}")

    def __matmul__(self, other):
        """Product with the left-module convention: (AB)(x) = A(B(x))."""
        self._check(other)
        if self.cols != other.rows:
            raise ShapeMismatch(f"cannot multiply {self.shape} by {other.shape}")
        prod = fmul(other.data[None, :, :, :], self.data[:, :, None, :], self.field)
        return FMatrix(self.field, prod.sum(axis=1))

    def apply(self, x):
        """A(x)_i = sum_j x_j a_ij for x of shape (cols, d)."""
        x = np.asarray(x, dtype=self.data.dtype)
        if x.ndim == 1 and field_dim(self.field) == 1:
            x = x[:, None]
        if x.shape[0] != self.cols:
            raise ShapeMismatch("vector length does not match columns")
        return fmul(x[None, :, :], self.data, self.field).sum(axis=1)

    def __add__(self, other):
        self._check(other)
        return FMatrix(self.field, self.data + other.data)

    def __sub__(self, other):
        self._check(other)
        return FMatrix(self.field, self.data - other.data)

    def scale(self, c):
        return FMatrix(self.field, self.data * c)

    def adjoint(self):
        return FMatrix(self.field, fconj(np.swapaxes(self.data, 0, 1)).copy())

    def to_float(self):
        if not self.is_exact:
            return self
        return FMatrix(self.field, np.vectorize(float, otypes=[float])(self.data))

    def real(self):
        return real_embed(self.to_float().data, self.field)

    def __eq__(self, other):
        return (isinstance(other, FMatrix) and self.field == other.field and self.shape == other.shape
                and all(a == b for a, b in zip(self.data.ravel(), other.data.ravel())))

    def __repr__(self):
        return f"FMatrix({self.field}, {self.shape})"

    def to_json(self):
        """[[component arrays]]; exact entries as "p/q" strings, floats as numbers."""
        conv = fmt_q if self.is_exact else float
        return [[[conv(v) for v in self.data[i, j]] for j in range(self.cols)] for i in range(self.rows)]

    @classmethod
    def from_json(cls, field, obj):
        sample = obj[0][0][0] if obj and obj[0] else 0
        if isinstance(sample, str):
            return cls.exact(field, obj)
        return cls(field, np.array(obj, dtype=float))


def batch_mul(A, B, field):
    """Left-module product of batches (..., n, k, d) x (..., k, r, d)."""
    prod = fmul(B[..., None, :, :, :], A[..., :, :, None, :], field)
    return prod.sum(axis=-3)


def batch_adjoint(A):
    return fconj(np.swapaxes(A, -3, -2))
