"""Small dense matrices over R or Q_p.

Real matrices are stored as float64 arrays; p-adic matrices as nested tuples of
:class:`~lyaplab.field.PAdicScalar`.  The batched helpers (``bmm``,
``jacobi_svd``, ``opnorm_batch``, ``wedge2_batch``) operate row-by-row with a
fixed operation order, so a given matrix gives bit-identical results whatever
batch it is processed in.  The trial engine relies on that for reproducibility.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import NumericalFailure, PrecisionLoss, SingularMatrix
from .field import REAL, PAdicField, PAdicScalar, RealField, abs_value, log_abs

MAX_DIM = 6
SWEEP_CAP = 30
JACOBI_TOL = 1e-14
TIE_TOL = 1e-10
SL_TOL = 1e-9


# ---------------------------------------------------------------------------
# batched real kernels


def bmm(a, b):
    """Batched product ``a @ b`` over the last two axes with a fixed summation order."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = a[..., :, 0:1] * b[..., 0:1, :]
    for k in range(1, a.shape[-1]):
        c = c + a[..., :, k:k + 1] * b[..., k:k + 1, :]
    return c


def bmv(a, x):
    """Batched matrix-vector product with fixed summation order."""
    y = a[..., :, 0] * x[..., 0:1]
    for k in range(1, a.shape[-1]):
        y = y + a[..., :, k] * x[..., k:k + 1]
    return y


def vnorm(x):
    """Euclidean norm along the last axis (fixed order)."""
    s = x[..., 0] * x[..., 0]
    for k in range(1, x.shape[-1]):
        s = s + x[..., k] * x[..., k]
    return np.sqrt(s)


def jacobi_svd(a, want_vectors=True):
    """One-sided Jacobi SVD of a stack of square real matrices.

    Returns ``(u, s, v)`` with ``a = u @ diag(s) @ v.T`` and ``s`` sorted in
    decreasing order (``u``/``v`` are ``None`` when ``want_vectors`` is false).
    Column pairs are rotated until ``|a_p . a_q| <= 1e-14 sqrt(|a_p|^2 |a_q|^2)``
    or one of the columns is at rounding-noise level; more than 30 sweeps raises
    :class:`NumericalFailure`.
    """
    w = np.array(a, dtype=np.float64, copy=True)
    squeeze = w.ndim == 2
    if squeeze:
        w = w[None]
    n, d = w.shape[0], w.shape[-1]
    v = np.broadcast_to(np.eye(d), w.shape).copy() if want_vectors else None
    if not np.all(np.isfinite(w)):
        raise NumericalFailure("non-finite input to SVD")
    eps = np.finfo(np.float64).eps
    frob2 = np.sum(w * w, axis=(-2, -1))
    noise = (4 * eps) ** 2 * frob2
    pairs = [(p, q) for p in range(d - 1) for q in range(p + 1, d)]
    for _ in range(SWEEP_CAP):
        rotated = False
        for p, q in pairs:
            cp = w[:, :, p]
            cq = w[:, :, q]
            alpha = np.sum(cp * cp, axis=-1)
            beta = np.sum(cq * cq, axis=-1)
            gamma = np.sum(cp * cq, axis=-1)
            act = (np.abs(gamma) > JACOBI_TOL * np.sqrt(alpha * beta)) & (
                np.minimum(alpha, beta) > noise)
            if not act.any():
                continue
            rotated = True
            idx = np.nonzero(act)[0]
            al, be, ga = alpha[idx], beta[idx], gamma[idx]
            zeta = (be - al) / (2.0 * ga)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c_ = c[:, None]
            s_ = s[:, None]
            xp = w[idx, :, p]
            xq = w[idx, :, q]
            w[idx, :, p] = c_ * xp - s_ * xq
            w[idx, :, q] = s_ * xp + c_ * xq
            if want_vectors:
                yp = v[idx, :, p]
                yq = v[idx, :, q]
                v[idx, :, p] = c_ * yp - s_ * yq
                v[idx, :, q] = s_ * yp + c_ * yq
        if not rotated:
            break
    else:
        raise NumericalFailure(f"Jacobi SVD did not converge in {SWEEP_CAP} sweeps")
    sv = np.sqrt(np.sum(w * w, axis=-2))
    order = np.argsort(-sv, axis=-1, kind="stable")
    sv = np.take_along_axis(sv, order, axis=-1)
    u = None
    if want_vectors:
        w = np.take_along_axis(w, order[:, None, :], axis=-1)
        v = np.take_along_axis(v, order[:, None, :], axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            u = w / np.where(sv > 0, sv, 1.0)[:, None, :]
        # zero singular values: complete u with v's column (any unit vector works)
        zero = sv == 0
        if zero.any():
            u[np.broadcast_to(zero[:, None, :], u.shape)] = v[np.broadcast_to(zero[:, None, :], u.shape)]
    if squeeze:
        return (u[0] if u is not None else None), sv[0], (v[0] if v is not None else None)
    return u, sv, v


def opnorm_batch(a):
    """Spectral norms of a stack of real square matrices."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] == 1:
        return np.abs(a[..., 0, 0])
    if a.shape[-1] == 2:
        # closed-form 2x2 SVD: s1 = (|(p+s, q-r)| + |(p-s, q+r)|) / 2
        p, q, r, s = a[..., 0, 0], a[..., 0, 1], a[..., 1, 0], a[..., 1, 1]
        return 0.5 * (np.hypot(p + s, q - r) + np.hypot(p - s, q + r))
    lead = a.shape[:-2]
    flat = a.reshape((-1,) + a.shape[-2:])
    return jacobi_svd(flat, want_vectors=False)[1][:, 0].reshape(lead)


@lru_cache(maxsize=None)
def wedge_pairs(d):
    return tuple(itertools.combinations(range(d), 2))


def wedge2_batch(a):
    """Second exterior power of a stack of real matrices (basis e_i^e_j, i<j, lexicographic)."""
    a = np.asarray(a, dtype=np.float64)
    d = a.shape[-1]
    pairs = wedge_pairs(d)
    m = len(pairs)
    out = np.empty(a.shape[:-2] + (m, m))
    for r, (i, j) in enumerate(pairs):
        for c, (k, l) in enumerate(pairs):
            out[..., r, c] = a[..., i, k] * a[..., j, l] - a[..., i, l] * a[..., j, k]
    return out


# ---------------------------------------------------------------------------
# p-adic helpers


def _padd(x: PAdicScalar, y: PAdicScalar) -> PAdicScalar:
    """Addition where total cancellation yields exact zero (matrix-level convention)."""
    try:
        return x + y
    except PrecisionLoss:
        return PAdicScalar.zero(x.p, min(x.prec, y.prec))


def _pdot(row, col):
    acc = None
    for x, y in zip(row, col):
        t = x * y
        acc = t if acc is None else _padd(acc, t)
    return acc


def _pmax_abs(entries):
    return max(abs_value(x) for row in entries for x in row)


def _pmin_val(entries):
    return min(x.valuation for row in entries for x in row)


# ---------------------------------------------------------------------------
# public types


def _as_field(f):
    if f is None or f == "R" or isinstance(f, RealField):
        return REAL
    if isinstance(f, PAdicField):
        return f
    if isinstance(f, str) and f.startswith("Q"):
        return PAdicField(int(f[1:]))
    raise ValueError(f"unknown field {f!r}")


@dataclass(frozen=True, eq=False)
class Matrix:
    """Square matrix over R (float64 array) or Q_p (tuple of tuples of PAdicScalar).

    ``mode`` is ``"SL"`` or ``"GL"``; SL matrices must have determinant 1 (to
    1e-9 for reals, exactly at working precision for Q_p).
    """

    entries: object
    field: object = REAL
    mode: str = "SL"
    check: bool = dc_field(default=True, repr=False)

    def __post_init__(self):
        fld = _as_field(self.field)
        object.__setattr__(self, "field", fld)
        if self.mode not in ("SL", "GL"):
            raise ValueError(f"mode must be SL or GL, got {self.mode!r}")
        if fld is REAL:
            arr = np.array(self.entries, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
                raise ValueError("matrix must be square")
            if not np.all(np.isfinite(arr)):
                raise NumericalFailure("non-finite matrix entry")
            arr.setflags(write=False)
            object.__setattr__(self, "entries", arr)
        else:
            rows = tuple(tuple(PAdicScalar.from_rational(x, fld.p, fld.prec) if not isinstance(x, PAdicScalar) else x
                               for x in row) for row in self.entries)
            if any(len(r) != len(rows) for r in rows):
                raise ValueError("matrix must be square")
            object.__setattr__(self, "entries", rows)
        if self.check:
            self.validate()

    @property
    def d(self):
        return len(self.entries)

    @property
    def is_real(self):
        return self.field is REAL

    def validate(self):
        if not 1 <= self.d <= 15:
            raise ValueError(f"dimension {self.d} out of range")
        det = self.det()
        if self.is_real:
            if self.mode == "SL" and abs(det - 1.0) > SL_TOL:
                raise ValueError(f"SL matrix has det {det!r}")
            if self.mode == "GL" and det == 0.0:
                raise SingularMatrix("GL matrix is singular")
        else:
            if self.mode == "SL" and not (not det.is_zero and det == self.field.one()):
                raise ValueError(f"SL matrix has det {det}")
            if self.mode == "GL" and det.is_zero:
                raise SingularMatrix("GL matrix is singular")

    # algebra ------------------------------------------------------------
    def det(self):
        if self.is_real:
            return float(np.linalg.det(self.entries))
        return _padic_det(self.entries, self.field)

    def __matmul__(self, other: "Matrix") -> "Matrix":
        _same(self, other)
        if self.is_real:
            return Matrix(bmm(self.entries, other.entries), REAL, self.mode, check=False)
        cols = list(zip(*other.entries))
        rows = tuple(tuple(_pdot(r, c) for c in cols) for r in self.entries)
        return Matrix(rows, self.field, self.mode, check=False)

    def __sub__(self, other):
        _same(self, other)
        if self.is_real:
            return Matrix(self.entries - other.entries, REAL, "GL", check=False)
        rows = tuple(tuple(_padd(x, -y) for x, y in zip(r1, r2)) for r1, r2 in zip(self.entries, other.entries))
        return Matrix(rows, self.field, "GL", check=False)

    def inverse(self) -> "Matrix":
        if self.is_real:
            if self.d == 2:
                (a, b), (c, e) = self.entries
                det = a * e - b * c
                if det == 0:
                    raise SingularMatrix("singular 2x2 matrix")
                inv = np.array([[e, -b], [-c, a]]) / det
            else:
                try:
                    inv = np.linalg.inv(self.entries)
                except np.linalg.LinAlgError as exc:
                    raise SingularMatrix(str(exc)) from None
            return Matrix(inv, REAL, self.mode, check=False)
        return Matrix(_padic_inverse(self.entries, self.field), self.field, self.mode, check=False)

    def transpose(self):
        if self.is_real:
            return Matrix(self.entries.T, REAL, self.mode, check=False)
        return Matrix(tuple(zip(*self.entries)), self.field, self.mode, check=False)

    def apply(self, x):
        """Image of a coordinate vector (numpy array or tuple of PAdicScalar)."""
        if self.is_real:
            return self.entries @ np.asarray(x, dtype=np.float64)
        return tuple(_pdot(r, x) for r in self.entries)

    def __eq__(self, other):
        if not isinstance(other, Matrix) or self.field != other.field or self.d != other.d:
            return NotImplemented
        if self.is_real:
            return bool(np.array_equal(self.entries, other.entries))
        return all(x == y for r1, r2 in zip(self.entries, other.entries) for x, y in zip(r1, r2))

    def __hash__(self):
        if self.is_real:
            return hash(self.entries.tobytes())
        return hash(tuple(x for r in self.entries for x in r))

    def as_array(self):
        if not self.is_real:
            raise TypeError("p-adic matrix has no float array form")
        return self.entries

    # serialization ------------------------------------------------------
    def to_json(self) -> str:
        return json.dumps(self.to_rows())

    def to_rows(self):
        if self.is_real:
            return [[repr(float(x)) for x in row] for row in self.entries]
        return [[str(x) if not x.is_zero else "0" for x in row] for row in self.entries]

    @classmethod
    def from_rows(cls, rows, field=REAL, mode="SL"):
        fld = _as_field(field)
        if fld is REAL:
            return cls([[float(x) for x in r] for r in rows], REAL, mode)
        return cls([[_parse_padic_entry(x, fld) for x in r] for r in rows], fld, mode)

    @classmethod
    def from_json(cls, text, field=REAL, mode="SL"):
        return cls.from_rows(json.loads(text), field, mode)


def _parse_padic_entry(x, fld):
    if isinstance(x, str):
        x = x.strip()
        if x == "0":
            return fld.zero()
        if "^" in x:
            return PAdicScalar.parse(x, fld.prec)
        return fld(Fraction(x))
    return fld(x)


def _same(a, b):
    if a.field != b.field or a.d != b.d:
        raise ValueError("matrices must share field and dimension")


def identity(d, field=REAL, mode="SL"):
    fld = _as_field(field)
    if fld is REAL:
        return Matrix(np.eye(d), REAL, mode, check=False)
    rows = [[fld.one() if i == j else fld.zero() for j in range(d)] for i in range(d)]
    return Matrix(rows, fld, mode, check=False)


def diag(*values, field=REAL, mode="SL"):
    fld = _as_field(field)
    d = len(values)
    if fld is REAL:
        return Matrix(np.diag(np.asarray(values, dtype=np.float64)), REAL, mode)
    rows = [[fld(values[i]) if i == j else fld.zero() for j in range(d)] for i in range(d)]
    return Matrix(rows, fld, mode)


def _padic_det(rows, fld):
    a = [list(r) for r in rows]
    n = len(a)
    det = fld.one()
    for col in range(n):
        piv = None
        for r in range(col, n):
            if not a[r][col].is_zero and (piv is None or a[r][col].v < a[piv][col].v):
                piv = r
        if piv is None:
            return fld.zero()
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            det = -det
        det = det * a[col][col]
        inv = a[col][col].inv()
        for r in range(col + 1, n):
            if a[r][col].is_zero:
                continue
            f = a[r][col] * inv
            a[r] = [_padd(a[r][k], -(f * a[col][k])) for k in range(n)]
    return det


def _padic_inverse(rows, fld):
    n = len(rows)
    a = [list(r) + [fld.one() if i == j else fld.zero() for j in range(n)] for i, r in enumerate(rows)]
    for col in range(n):
        piv = None
        for r in range(col, n):
            if not a[r][col].is_zero and (piv is None or a[r][col].v < a[piv][col].v):
                piv = r
        if piv is None:
            raise SingularMatrix("singular p-adic matrix")
        a[col], a[piv] = a[piv], a[col]
        inv = a[col][col].inv()
        a[col] = [x * inv for x in a[col]]
        for r in range(n):
            if r == col or a[r][col].is_zero:
                continue
            f = a[r][col]
            a[r] = [_padd(a[r][k], -(f * a[col][k])) for k in range(2 * n)]
    return tuple(tuple(r[n:]) for r in a)


# ---------------------------------------------------------------------------
# norms, distances, exterior powers


def operator_norm(m: Matrix):
    """Spectral norm (reals) or max |entry| (Q_p, exact operator norm for the sup norm)."""
    if m.is_real:
        return float(opnorm_batch(m.entries))
    return _pmax_abs(m.entries)


def log_operator_norm(m: Matrix) -> float:
    if m.is_real:
        return math.log(operator_norm(m))
    return -_pmin_val(m.entries) * math.log(m.field.p)


def group_distance(a: Matrix, b: Matrix):
    """``||A - B||`` in SL mode, ``max(||A - B||, ||A^-1 - B^-1||)`` in GL mode."""
    _same(a, b)
    if a.mode != b.mode:
        raise ValueError("matrices must share group mode")
    dist = operator_norm(a - b)
    if a.mode == "GL":
        dist = max(dist, operator_norm(a.inverse() - b.inverse()))
    return dist


def wedge2(m: Matrix) -> Matrix:
    """Matrix of the induced map on the second exterior power."""
    if m.d < 2:
        raise ValueError("wedge2 needs d >= 2")
    if m.is_real:
        return Matrix(wedge2_batch(m.entries), REAL, m.mode, check=False)
    a = m.entries
    pairs = wedge_pairs(m.d)
    rows = tuple(tuple(_padd(a[i][k] * a[j][l], -(a[i][l] * a[j][k])) for (k, l) in pairs) for (i, j) in pairs)
    return Matrix(rows, m.field, m.mode, check=False)


def multiplicative_gap(m: Matrix):
    """``||wedge2 M|| / ||M||^2`` (equals s2/s1 over R)."""
    if m.is_real:
        return operator_norm(wedge2(m)) / operator_norm(m) ** 2
    return operator_norm(wedge2(m)) / operator_norm(m) ** 2


# ---------------------------------------------------------------------------
# projective points


@dataclass(frozen=True, eq=False)
class ProjPoint:
    """Point of P(K^d) (or of the dual space when ``dual`` is set), stored canonically.

    Real points have unit Euclidean norm with the first largest-magnitude
    coordinate positive.  p-adic points are scaled so that coordinate equals 1.
    """

    vector: object
    dual: bool = False

    def __post_init__(self):
        object.__setattr__(self, "vector", canonical_vector(self.vector))

    @property
    def is_real(self):
        return isinstance(self.vector, np.ndarray)

    @property
    def d(self):
        return len(self.vector)

    def __eq__(self, other):
        if not isinstance(other, ProjPoint) or other.dual != self.dual:
            return NotImplemented
        return projective_distance(self, other) == 0

    __hash__ = object.__hash__


def canonical_vector(x):
    if isinstance(x, (tuple, list)) and x and isinstance(x[0], PAdicScalar):
        vals = [c.valuation for c in x]
        vmin = min(vals)
        if vmin == math.inf:
            raise ValueError("zero vector has no projective class")
        lead = x[vals.index(vmin)]
        inv = lead.inv()
        return tuple(c * inv for c in x)
    v = np.array(x, dtype=np.float64)
    n = float(vnorm(v))
    if not n > 0:
        raise ValueError("zero vector has no projective class")
    v = v / n
    mags = np.abs(v)
    k = int(np.argmax(mags >= mags.max() * (1 - 1e-12)))
    if v[k] < 0:
        v = -v
    v.setflags(write=False)
    return v


def _wedge_norm_real(x, y):
    s = 0.0
    for i, j in wedge_pairs(len(x)):
        w = x[i] * y[j] - x[j] * y[i]
        s += w * w
    return math.sqrt(s)


def projective_distance(x: ProjPoint, y: ProjPoint) -> float:
    """``||x ^ y|| / (||x|| ||y||)``: sine of the angle over R, ultrametric over Q_p."""
    if x.dual != y.dual or x.d != y.d:
        raise ValueError("points must live in the same projective space")
    if x.is_real:
        return min(1.0, _wedge_norm_real(x.vector, y.vector))
    a, b = x.vector, y.vector
    best = None
    for i, j in wedge_pairs(len(a)):
        w = _padd(a[i] * b[j], -(a[j] * b[i]))
        av = abs_value(w)
        best = av if best is None else max(best, av)
    return float(best)


def pairing(x: ProjPoint, f: ProjPoint) -> float:
    """``|f(x)| / (||f|| ||x||)`` for a point and a dual point.

    Over R this is the sine distance from ``x`` to the hyperplane ``ker f``.
    """
    if x.dual == f.dual:
        raise ValueError("pairing needs one point and one dual point")
    if x.is_real:
        return abs(float(np.dot(x.vector, f.vector)))
    return float(abs_value(_pdot(x.vector, f.vector)))


# ---------------------------------------------------------------------------
# KAK data


@dataclass(frozen=True)
class KakData:
    gamma: float
    omega: ProjPoint
    iota: ProjPoint
    singular_values: tuple
    unique: bool = True


def _tie_break(vec):
    """Canonical representative: lexicographically largest of +-vec."""
    v = np.asarray(vec)
    return max([v, -v], key=lambda t: tuple(np.round(t, 12)))


def kak(m: Matrix) -> KakData:
    """Multiplicative gap and density points of a real matrix from its SVD."""
    if not m.is_real:
        raise TypeError("kak is only provided over R")
    u, s, v = jacobi_svd(m.entries)
    gamma = multiplicative_gap(m)
    unique = not (s[0] - s[1] <= TIE_TOL * s[0])
    om, io = u[:, 0], v[:, 0]
    if not unique:
        om, io = _tie_break(om), _tie_break(io)
    return KakData(gamma=gamma, omega=ProjPoint(om), iota=ProjPoint(io, dual=True),
                   singular_values=tuple(float(t) for t in s), unique=unique)


def alignment_violations(a, x, f):
    """Largest violation per sample of the KAK alignment inequalities.

    For real square matrices ``a`` (stacked), vectors ``x`` and functionals ``f``:

    * ``iota(x) <= |a x| / (|a| |x|) <= iota(x) + gamma``
    * ``f(omega) <= |f a| / (|f| |a|) <= f(omega) + gamma``
    * ``d(a x, omega) * iota(x) <= gamma``

    where ``iota(x)`` and ``f(omega)`` are normalized pairings with the top
    right/left singular directions.  Returns ``max(0, lhs - rhs)`` over the
    five inequalities for each sample.
    """
    a = np.asarray(a, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    u, s, v = jacobi_svd(a)
    s1 = s[..., 0]
    gamma = s[..., 1] / s1
    xn = x / vnorm(x)[:, None]
    fn = f / vnorm(f)[:, None]
    om, io = u[..., :, 0], v[..., :, 0]
    iota_x = np.abs(np.sum(io * xn, axis=-1))
    f_om = np.abs(np.sum(fn * om, axis=-1))
    ax = bmv(a, xn)
    r_x = vnorm(ax) / s1
    fa = bmv(np.swapaxes(a, -1, -2), fn)
    r_f = vnorm(fa) / s1
    axn = ax / vnorm(ax)[:, None]
    cosang = np.clip(np.abs(np.sum(axn * om, axis=-1)), 0.0, 1.0)
    dist = np.sqrt(np.maximum(0.0, 1.0 - cosang * cosang))
    v = np.stack([iota_x - r_x, r_x - iota_x - gamma, f_om - r_f, r_f - f_om - gamma, dist * iota_x - gamma])
    return np.maximum(0.0, v.max(axis=0))


def log_norm_of(m: Matrix) -> float:
    return log_operator_norm(m)


__all__ = [
    "Matrix", "ProjPoint", "KakData", "identity", "diag", "operator_norm", "log_operator_norm",
    "group_distance", "wedge2", "kak", "projective_distance", "pairing", "multiplicative_gap",
    "jacobi_svd", "opnorm_batch", "alignment_violations", "wedge2_batch", "bmm", "bmv", "vnorm", "log_abs",
]
