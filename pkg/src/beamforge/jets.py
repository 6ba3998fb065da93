"""Truncated multivariate Taylor polynomials with complex coefficients.

A jet of degree K in n variables stores the coefficients c_beta of the
polynomial sum_{|beta| <= K} c_beta y**beta. The Taylor factor 1/beta! is
folded into c_beta, so evaluation is a plain polynomial sum. Use
:meth:`Jet.from_derivatives` and :meth:`Jet.derivatives` to convert from and
to derivative values d^beta f.

Multi-indices are kept in graded-lexicographic order: by total degree, then
lexicographically descending. Because of the grading, truncation to a lower
degree is a prefix slice of the coefficient vector.

Coefficient arrays may carry leading batch axes, ``coeffs.shape ==
(*batch, size)``. All operations broadcast over the batch, which is how whole
families of beams are advanced together.
"""
from functools import cached_property, lru_cache
from math import factorial

import numpy as np
from numba import njit

from .errors import ShapeError

MAX_VARS = 4


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


class JetSpace:
    """Index bookkeeping for jets with a fixed number of variables and degree."""

    def __init__(self, n_vars, degree):
        if n_vars < 1 or n_vars > MAX_VARS:
            raise ShapeError(f"n_vars must be in 1..{MAX_VARS}, got {n_vars}")
        if degree < 0:
            raise ShapeError(f"degree must be non-negative, got {degree}")
        self.n_vars = n_vars
        self.degree = degree
        exps = [e for d in range(degree + 1) for e in _compositions(d, n_vars)]
        self.exponents = np.array(exps, dtype=np.int64).reshape(-1, n_vars)
        self.exponents.flags.writeable = False
        self.size = len(exps)
        self.index = {e: i for i, e in enumerate(exps)}
        self.degrees = self.exponents.sum(axis=1)
        # offsets[d] is the first index of degree d; offsets[degree + 1] == size
        self.offsets = np.searchsorted(self.degrees, np.arange(degree + 2))
        self.factorials = np.array(
            [np.prod([factorial(b) for b in e]) for e in exps], dtype=float)

    def __repr__(self):
        return f"JetSpace(n_vars={self.n_vars}, degree={self.degree})"

    def multi_index(self, i):
        return tuple(int(b) for b in self.exponents[i])

    def count(self, degree):
        """Number of coefficients of total degree <= ``degree``."""
        return int(self.offsets[min(degree, self.degree) + 1]) if degree >= 0 else 0

    @cached_property
    def product_table(self):
        """Pair lists (I, J) sorted by output index, plus reduceat starts."""
        deg = self.degrees
        I, J, O = [], [], []
        for i in range(self.size):
            ei = self.exponents[i]
            for j in range(self.size):
                if deg[i] + deg[j] <= self.degree:
                    I.append(i)
                    J.append(j)
                    O.append(self.index[tuple(int(v) for v in ei + self.exponents[j])])
        order = np.argsort(O, kind="stable")
        I = np.asarray(I, dtype=np.int64)[order]
        J = np.asarray(J, dtype=np.int64)[order]
        O = np.asarray(O)[order]
        # pairs for output o are I[starts[o]:starts[o + 1]]
        starts = np.searchsorted(O, np.arange(self.size + 1)).astype(np.int64)
        return I, J, starts

    @lru_cache(maxsize=None)
    def partial_table(self, axis):
        tgt, src, fac = [], [], []
        unit = np.zeros(self.n_vars, dtype=np.int64)
        unit[axis] = 1
        for t in range(self.count(self.degree - 1)):
            e = self.exponents[t]
            tgt.append(t)
            src.append(self.index[tuple(int(v) for v in e + unit)])
            fac.append(e[axis] + 1)
        return np.array(tgt, dtype=np.int64), np.array(src, dtype=np.int64), np.array(fac, dtype=float)


@lru_cache(maxsize=None)
def jet_space(n_vars, degree):
    """Shared, cached :class:`JetSpace` instance."""
    return JetSpace(int(n_vars), int(degree))


def _as_space(a, b):
    if a.space is not b.space:
        raise ShapeError(f"jet spaces differ: {a.space} vs {b.space}")
    return a.space


class Jet:
    """Immutable truncated Taylor polynomial, possibly batched."""

    __slots__ = ("space", "coeffs")
    __array_ufunc__ = None

    def __init__(self, n_vars, degree, coeffs=None):
        space = jet_space(n_vars, degree)
        if coeffs is None:
            coeffs = np.zeros(space.size, dtype=complex)
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim == 0 or coeffs.shape[-1] != space.size:
            raise ShapeError(
                f"expected {space.size} coefficients for {space}, got shape {coeffs.shape}")
        self.space = space
        self.coeffs = coeffs

    @classmethod
    def _wrap(cls, space, coeffs):
        obj = cls.__new__(cls)
        obj.space = space
        obj.coeffs = coeffs
        return obj

    # constructors

    @classmethod
    def zeros(cls, n_vars, degree, batch_shape=()):
        space = jet_space(n_vars, degree)
        return cls._wrap(space, np.zeros(tuple(batch_shape) + (space.size,), dtype=complex))

    @classmethod
    def constant(cls, value, n_vars, degree):
        value = np.asarray(value, dtype=complex)
        out = cls.zeros(n_vars, degree, value.shape)
        out.coeffs[..., 0] = value
        return out

    @classmethod
    def variable(cls, axis, n_vars, degree, point=0.0):
        """The jet of y_axis expanded about ``point``: point + delta_axis."""
        if not 0 <= axis < n_vars:
            raise ShapeError(f"axis {axis} out of range for {n_vars} variables")
        out = cls.constant(point, n_vars, degree)
        if degree >= 1:
            unit = [0] * n_vars
            unit[axis] = 1
            out.coeffs[..., out.space.index[tuple(unit)]] = 1.0
        return out

    @classmethod
    def from_dict(cls, terms, n_vars, degree):
        """Build from ``{multi_index: coefficient}``; terms above degree are dropped."""
        out = cls.zeros(n_vars, degree)
        for beta, c in terms.items():
            beta = tuple(beta)
            if len(beta) != n_vars:
                raise ShapeError(f"multi-index {beta} has wrong length")
            if sum(beta) <= degree:
                out.coeffs[out.space.index[beta]] += c
        return out

    @classmethod
    def from_derivatives(cls, values, n_vars, degree):
        """Build from derivative values d^beta f in graded-lex order."""
        space = jet_space(n_vars, degree)
        values = np.asarray(values, dtype=complex)
        if values.shape[-1] != space.size:
            raise ShapeError("derivative array has wrong length")
        return cls._wrap(space, values / space.factorials)

    def derivatives(self):
        """Derivative values d^beta f at the expansion point."""
        return self.coeffs * self.space.factorials

    # basic properties

    @property
    def n_vars(self):
        return self.space.n_vars

    @property
    def max_degree(self):
        return self.space.degree

    @property
    def batch_shape(self):
        return self.coeffs.shape[:-1]

    def __repr__(self):
        return f"Jet(n_vars={self.n_vars}, degree={self.max_degree}, batch={self.batch_shape})"

    def __getitem__(self, idx):
        # indexes batch axes only
        return Jet._wrap(self.space, self.coeffs[idx])

    def coefficient(self, beta):
        return self.coeffs[..., self.space.index[tuple(beta)]]

    def degree_part(self, d):
        o = self.space.offsets
        return self.coeffs[..., o[d]:o[d + 1]]

    def copy(self):
        return Jet._wrap(self.space, self.coeffs.copy())

    # arithmetic

    def _coerce(self, other):
        if isinstance(other, Jet):
            _as_space(self, other)
            return other.coeffs, True
        return np.asarray(other, dtype=complex), False

    def __add__(self, other):
        c, is_jet = self._coerce(other)
        if is_jet:
            return Jet._wrap(self.space, self.coeffs + c)
        out = np.array(np.broadcast_to(self.coeffs, np.broadcast_shapes(
            self.coeffs.shape, c.shape + (1,))), dtype=complex)
        out[..., 0] += c
        return Jet._wrap(self.space, out)

    __radd__ = __add__

    def __neg__(self):
        return Jet._wrap(self.space, -self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        c, is_jet = self._coerce(other)
        if is_jet:
            return jet_product(self, other)
        return Jet._wrap(self.space, self.coeffs * c[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return Jet._wrap(self.space, self.coeffs / np.asarray(other, dtype=complex)[..., None])

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise ValueError("only non-negative integer powers are supported")
        out = Jet.constant(np.ones(self.batch_shape), self.n_vars, self.max_degree)
        base = self
        while n:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        return out

    def conj(self):
        return Jet._wrap(self.space, self.coeffs.conj())

    # calculus and evaluation

    def partial(self, axis):
        return jet_partial(self, axis)

    def eval(self, delta):
        return jet_eval(self, delta)

    def truncate(self, degree):
        """Same variables, lower or equal degree (prefix slice)."""
        if degree > self.max_degree:
            raise ShapeError("truncate cannot raise the degree; use with_degree")
        return Jet._wrap(jet_space(self.n_vars, degree),
                         self.coeffs[..., :self.space.count(degree)])

    def with_degree(self, degree):
        """Truncate or zero-pad to ``degree``."""
        if degree <= self.max_degree:
            return self.truncate(degree)
        space = jet_space(self.n_vars, degree)
        out = np.zeros(self.batch_shape + (space.size,), dtype=complex)
        out[..., :self.space.size] = self.coeffs
        return Jet._wrap(space, out)

    def embed(self, n_vars, degree, var_map, shift=None):
        """Re-express in a larger variable set.

        Variable i of this jet becomes variable ``var_map[i]`` of the result.
        ``shift=(v, q)`` multiplies by y_v**q, which places a slice back into
        a jet in one more variable. Terms above ``degree`` are dropped.
        """
        src, dst = _embed_table(self.n_vars, self.max_degree, n_vars, degree,
                                tuple(var_map), shift)
        space = jet_space(n_vars, degree)
        out = np.zeros(self.batch_shape + (space.size,), dtype=complex)
        out[..., dst] = self.coeffs[..., src]
        return Jet._wrap(space, out)

    def slice(self, var, power, degree=None):
        """Coefficient of y_var**power, as a jet in the remaining variables."""
        if degree is None:
            degree = self.max_degree - power
        idx = _slice_table(self.n_vars, self.max_degree, var, power, degree)
        return Jet._wrap(jet_space(self.n_vars - 1, degree), self.coeffs[..., idx])

    def sqrt(self):
        """Principal square root via the degree-by-degree recurrence."""
        sp = self.space
        f = self.coeffs
        h = np.zeros_like(f)
        h0 = np.sqrt(f[..., 0])
        h[..., 0] = h0
        for d in range(1, sp.degree + 1):
            lo, hi = sp.offsets[d], sp.offsets[d + 1]
            sq = _product_coeffs(sp, h, h, lo, hi)
            h[..., lo:hi] = (f[..., lo:hi] - sq[..., lo:hi]) / (2.0 * h0[..., None])
        return Jet._wrap(sp, h)

    def reciprocal(self):
        sp = self.space
        f = self.coeffs
        g = np.zeros_like(f)
        f0 = f[..., 0]
        g[..., 0] = 1.0 / f0
        for d in range(1, sp.degree + 1):
            lo, hi = sp.offsets[d], sp.offsets[d + 1]
            fg = _product_coeffs(sp, f, g, lo, hi)
            g[..., lo:hi] = -fg[..., lo:hi] / f0[..., None]
        return Jet._wrap(sp, g)

    def exp(self):
        r = self.coeffs.copy()
        e0 = np.exp(r[..., 0])
        r[..., 0] = 0.0
        out = np.zeros_like(r)
        out[..., 0] = 1.0
        for m in range(self.max_degree, 0, -1):
            out = _product_coeffs(self.space, r, out) / m
            out[..., 0] += 1.0
        return Jet._wrap(self.space, out * e0[..., None])

    def cos(self):
        return ((1j * self).exp() + (-1j * self).exp()) * 0.5

    def sin(self):
        return ((1j * self).exp() - (-1j * self).exp()) * (-0.5j)


@njit(cache=True)
def _product_kernel(a, b, I, J, starts, lo, hi, out):
    for r in range(a.shape[0]):
        for o in range(lo, hi):
            acc = 0j
            for q in range(starts[o], starts[o + 1]):
                acc += a[r, I[q]] * b[r, J[q]]
            out[r, o] = acc


def _product_coeffs(space, a, b, lo=0, hi=None):
    """Coefficients of a*b; only outputs lo..hi-1 are computed, the rest are 0."""
    I, J, starts = space.product_table
    if hi is None:
        hi = space.size
    if a.shape != b.shape:
        a, b = np.broadcast_arrays(a, b)
    shape = a.shape
    a2 = np.ascontiguousarray(a, dtype=complex).reshape(-1, shape[-1])
    b2 = np.ascontiguousarray(b, dtype=complex).reshape(-1, shape[-1])
    out = np.zeros(a2.shape, dtype=complex)
    _product_kernel(a2, b2, I, J, starts, int(lo), int(hi), out)
    return out.reshape(shape)


def jet_product(a, b):
    """Truncated product of two jets in the same space."""
    if not (isinstance(a, Jet) and isinstance(b, Jet)):
        raise ShapeError("jet_product expects two jets")
    sp = _as_space(a, b)
    return Jet._wrap(sp, _product_coeffs(sp, a.coeffs, b.coeffs))


def jet_eval(j, delta):
    """Evaluate sum c_beta delta**beta. ``delta`` has shape (..., n_vars)."""
    delta = np.asarray(delta, dtype=float if np.isrealobj(delta) else complex)
    if delta.ndim == 0 and j.n_vars == 1:
        delta = delta[None]
    if delta.shape[-1:] != (j.n_vars,):
        raise ShapeError(f"delta must end in length {j.n_vars}, got shape {delta.shape}")
    mon = np.prod(delta[..., None, :] ** j.space.exponents, axis=-1)
    return np.sum(j.coeffs * mon, axis=-1)


def jet_partial(j, axis):
    """d/dy_axis, stored at the same degree with a zero top degree."""
    if not 0 <= axis < j.n_vars:
        raise ShapeError(f"axis {axis} out of range for {j.n_vars} variables")
    tgt, src, fac = j.space.partial_table(axis)
    out = np.zeros_like(j.coeffs)
    out[..., tgt] = j.coeffs[..., src] * fac
    return Jet._wrap(j.space, out)


def jet_variables(point, degree):
    """Jets of Y_i = point_i + delta_i for a (possibly batched) point."""
    point = np.asarray(point, dtype=float)
    n = point.shape[-1]
    return [Jet.variable(i, n, degree, point[..., i]) for i in range(n)]


@lru_cache(maxsize=None)
def _embed_table(n_src, k_src, n_dst, k_dst, var_map, shift):
    if len(var_map) != n_src or len(set(var_map)) != n_src or max(var_map) >= n_dst:
        raise ShapeError(f"invalid variable map {var_map}")
    src_space = jet_space(n_src, k_src)
    dst_space = jet_space(n_dst, k_dst)
    src, dst = [], []
    for i in range(src_space.size):
        e = [0] * n_dst
        for v, b in zip(var_map, src_space.exponents[i]):
            e[v] = int(b)
        if shift is not None:
            e[shift[0]] += shift[1]
        if sum(e) <= k_dst:
            src.append(i)
            dst.append(dst_space.index[tuple(e)])
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)


@lru_cache(maxsize=None)
def _slice_table(n_src, k_src, var, power, degree):
    if not 0 <= var < n_src or n_src < 2:
        raise ShapeError("slice needs a valid variable of a multi-variable jet")
    if power + degree > k_src:
        raise ShapeError("slice degree exceeds the source degree")
    src_space = jet_space(n_src, k_src)
    dst_space = jet_space(n_src - 1, degree)
    idx = []
    for g in dst_space.exponents:
        e = list(int(b) for b in g)
        e.insert(var, power)
        idx.append(src_space.index[tuple(e)])
    return np.array(idx, dtype=np.int64)
