"""Scalars over the two supported local fields: the reals and fixed-precision Q_p.

Real scalars are plain Python floats (``RealScalar`` only adds a finiteness
check).  p-adic scalars carry ``p^v * u`` with ``u`` a unit known modulo
``p^prec``.  Precision follows the usual relative-precision bookkeeping:

* multiplication and inversion keep ``min(prec_x, prec_y)`` digits;
* addition keeps digits up to ``min(v_x + prec_x, v_y + prec_y)`` absolutely,
  so cancellation in the low digits is paid for out of the relative precision;
* a sum with no significant digit left raises :class:`PrecisionLoss`.

Absolute values of p-adic numbers are returned as exact ``Fraction`` objects so
multiplicativity and the ultrametric inequality hold exactly.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction

from .errors import DivisionByZero, NumericalFailure, PrecisionLoss

DEFAULT_PREC = 32


@dataclass(frozen=True)
class RealField:
    name: str = "R"

    def __str__(self):
        return "R"


@dataclass(frozen=True)
class PAdicField:
    p: int
    prec: int = DEFAULT_PREC

    def __post_init__(self):
        if self.p < 2 or any(self.p % q == 0 for q in range(2, math.isqrt(self.p) + 1)):
            raise ValueError(f"p must be prime, got {self.p}")
        if self.prec < 1:
            raise ValueError("precision must be positive")

    def __str__(self):
        return f"Q{self.p}"

    def __call__(self, x) -> "PAdicScalar":
        return PAdicScalar.from_rational(x, self.p, self.prec)

    def zero(self):
        return PAdicScalar.zero(self.p, self.prec)

    def one(self):
        return PAdicScalar(self.p, 0, 1, self.prec)


REAL = RealField()


@dataclass(frozen=True)
class RealScalar:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise NumericalFailure(f"non-finite real scalar {self.value!r}")

    def __float__(self):
        return self.value


def _val(n: int, p: int) -> int:
    k = 0
    while n % p == 0:
        n //= p
        k += 1
    return k


@dataclass(frozen=True, eq=False)
class PAdicScalar:
    p: int
    v: int
    unit: int
    prec: int
    is_zero: bool = False

    def __post_init__(self):
        if self.is_zero:
            return
        if self.prec < 1:
            raise PrecisionLoss("no significant digits")
        mod = self.p ** self.prec
        u = self.unit % mod
        if u % self.p == 0:
            raise ValueError("unit part must not be divisible by p; use from_rational")
        object.__setattr__(self, "unit", u)

    # construction -------------------------------------------------------
    @classmethod
    def zero(cls, p, prec=DEFAULT_PREC):
        return cls(p, 0, 0, prec, is_zero=True)

    @classmethod
    def from_rational(cls, x, p, prec=DEFAULT_PREC):
        if isinstance(x, PAdicScalar):
            return x
        q = Fraction(x)
        if q == 0:
            return cls.zero(p, prec)
        num, den = q.numerator, q.denominator
        v = 0
        k = _val(num, p)
        num //= p ** k
        v += k
        k = _val(den, p)
        den //= p ** k
        v -= k
        mod = p ** prec
        return cls(p, v, num * pow(den, -1, mod), prec)

    @classmethod
    def parse(cls, text: str, prec=DEFAULT_PREC):
        """Parse ``"p^v * u"`` (e.g. ``"5^-1 * 3"``) or the literal ``"0"`` with ``p`` given."""
        m = re.fullmatch(r"\s*(\d+)\s*\^\s*(-?\d+)\s*\*\s*(-?\d+)\s*", text)
        if not m:
            raise ValueError(f"cannot parse p-adic literal {text!r}")
        p, v, u = int(m.group(1)), int(m.group(2)), int(m.group(3))
        if u == 0:
            return cls.zero(p, prec)
        return cls.from_rational(Fraction(p) ** v * u, p, prec)

    def __str__(self):
        if self.is_zero:
            return "0"
        u = self.unit
        # prefer the symmetric representative for readability of small negatives
        mod = self.p ** self.prec
        if u > mod // 2:
            u -= mod
        return f"{self.p}^{self.v} * {u}"

    __repr__ = __str__

    # arithmetic ---------------------------------------------------------
    def _check(self, other):
        if not isinstance(other, PAdicScalar):
            other = PAdicScalar.from_rational(other, self.p, self.prec)
        if other.p != self.p:
            raise ValueError(f"prime mismatch {self.p} vs {other.p}")
        return other

    def __add__(self, other):
        other = self._check(other)
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        p = self.p
        m = min(self.v, other.v)
        top = min(self.v + self.prec, other.v + other.prec)
        s = (self.unit * p ** (self.v - m) + other.unit * p ** (other.v - m)) % p ** (top - m)
        if s == 0:
            raise PrecisionLoss(f"sum indistinguishable from 0 modulo {p}^{top}")
        k = _val(s, p)
        return PAdicScalar(p, m + k, s // p ** k, top - m - k)

    __radd__ = __add__

    def __neg__(self):
        if self.is_zero:
            return self
        return PAdicScalar(self.p, self.v, -self.unit, self.prec)

    def __sub__(self, other):
        return self + (-self._check(other))

    def __rsub__(self, other):
        return self._check(other) - self

    def __mul__(self, other):
        other = self._check(other)
        if self.is_zero or other.is_zero:
            return PAdicScalar.zero(self.p, min(self.prec, other.prec))
        prec = min(self.prec, other.prec)
        return PAdicScalar(self.p, self.v + other.v, self.unit * other.unit, prec)

    __rmul__ = __mul__

    def inv(self):
        if self.is_zero:
            raise DivisionByZero("inverse of p-adic zero")
        return PAdicScalar(self.p, -self.v, pow(self.unit, -1, self.p ** self.prec), self.prec)

    def __truediv__(self, other):
        return self * self._check(other).inv()

    def __eq__(self, other):
        if not isinstance(other, PAdicScalar):
            try:
                other = self._check(other)
            except (TypeError, ValueError):
                return NotImplemented
        if self.is_zero or other.is_zero:
            return self.is_zero and other.is_zero
        if self.p != other.p or self.v != other.v:
            return False
        n = min(self.prec, other.prec)
        return (self.unit - other.unit) % self.p ** n == 0

    def __hash__(self):
        return hash((self.p, self.v, self.unit % self.p, self.is_zero))

    @property
    def valuation(self):
        return math.inf if self.is_zero else self.v

    def shift(self, k: int) -> "PAdicScalar":
        """Multiply by ``p^k`` without touching the unit digits."""
        if self.is_zero:
            return self
        return PAdicScalar(self.p, self.v + k, self.unit, self.prec)


def abs_value(x):
    """Field absolute value: ``|x|`` for reals, ``p^{-v}`` (exact Fraction) for Q_p."""
    if isinstance(x, PAdicScalar):
        if x.is_zero:
            return Fraction(0)
        return Fraction(x.p) ** (-x.v)
    if isinstance(x, RealScalar):
        x = x.value
    return abs(float(x))


def log_abs(x) -> float:
    """``log |x|``; exact valuation arithmetic for Q_p, ``-inf`` at zero."""
    if isinstance(x, PAdicScalar):
        return -math.inf if x.is_zero else -x.v * math.log(x.p)
    x = float(x)
    return -math.inf if x == 0 else math.log(abs(x))


def field_arith(op: str, x, y=None):
    """Dispatch ``add``/``mul``/``inv`` on either field.  Real overflow raises."""
    if isinstance(x, RealScalar):
        x = x.value
    if isinstance(y, RealScalar):
        y = y.value
    if isinstance(x, PAdicScalar) or isinstance(y, PAdicScalar):
        if op == "add":
            return x + y
        if op == "mul":
            return x * y
        if op == "inv":
            return x.inv()
        raise ValueError(f"unknown op {op!r}")
    x = float(x)
    if op == "add":
        r = x + float(y)
    elif op == "mul":
        r = x * float(y)
    elif op == "inv":
        if x == 0.0:
            raise DivisionByZero("inverse of real zero")
        r = 1.0 / x
    else:
        raise ValueError(f"unknown op {op!r}")
    if not math.isfinite(r):
        raise NumericalFailure(f"real {op} overflowed")
    return r
