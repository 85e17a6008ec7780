"""Exact arithmetic in Q_p.

Numbers are arbitrary-precision rationals tagged with a prime; valuations
and absolute values are kept as integer exponents (never floats), so every
comparison in the rest of the package is an integer comparison.  The
projective line is the tagged union finite | infinity, and the spherical
metric is evaluated exactly through valuations.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union

Rational = Union[int, Fraction]

_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for q in _SMALL_PRIMES:
        if n == q:
            return True
        if n % q == 0:
            return False
    # deterministic trial division is fine for the small primes we support
    k = 41
    while k * k <= n:
        if n % k == 0:
            return False
        k += 2
    return True


class _Infinite:
    """Valuation of 0: a distinguished top element, not a sentinel integer."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "+inf"

    def __eq__(self, other):
        return isinstance(other, _Infinite)

    def __hash__(self):
        return hash("_Infinite")

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return isinstance(other, _Infinite)

    def __gt__(self, other):
        return not isinstance(other, _Infinite)

    def __ge__(self, other):
        return True

    def __add__(self, other):
        return self

    __radd__ = __add__


INF = _Infinite()

#: A valuation is either an int or INF (for the value 0).
Valuation = Union[int, _Infinite]


def int_valuation(n: int, p: int) -> Valuation:
    """Largest e with p^e | n; INF for n = 0."""
    if n == 0:
        return INF
    n = abs(n)
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return v


def rational_valuation(x: Rational, p: int) -> Valuation:
    """v_p(numerator) - v_p(denominator); INF for 0."""
    x = Fraction(x)
    if x == 0:
        return INF
    return int_valuation(x.numerator, p) - int_valuation(x.denominator, p)


@dataclass(frozen=True, order=False)
class AbsValue:
    """A p-adic absolute value |x|_p = p^(-vexp), stored as the exponent.

    Ordering follows the magnitude: larger |x| means smaller vexp.  The
    zero value (vexp = INF) is the minimum.
    """

    vexp: Valuation

    @property
    def is_zero(self) -> bool:
        return self.vexp is INF

    def __mul__(self, other: "AbsValue") -> "AbsValue":
        return AbsValue(self.vexp + other.vexp)

    def __lt__(self, other: "AbsValue") -> bool:
        return other.vexp < self.vexp

    def __le__(self, other: "AbsValue") -> bool:
        return other.vexp <= self.vexp

    def __gt__(self, other: "AbsValue") -> bool:
        return other.vexp > self.vexp

    def __ge__(self, other: "AbsValue") -> bool:
        return other.vexp >= self.vexp

    def as_float(self, p: int) -> float:
        if self.is_zero:
            return 0.0
        return float(p) ** (-self.vexp)

    def __repr__(self):
        if self.is_zero:
            return "AbsValue(0)"
        return f"AbsValue(p^{-self.vexp})"


ABS_ONE = AbsValue(0)


class PrimeMismatchError(ValueError):
    pass


def _check_same_prime(a: "PadicNumber", b: "PadicNumber") -> None:
    if a.prime != b.prime:
        raise PrimeMismatchError(f"mixed primes {a.prime} and {b.prime}")


@dataclass(frozen=True)
class PadicNumber:
    """An exact rational viewed as an element of Q_p."""

    value: Fraction
    prime: int

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))
        if not is_prime(self.prime):
            raise ValueError(f"{self.prime} is not prime")

    # -- arithmetic ----------------------------------------------------
    def _lift(self, other) -> "PadicNumber":
        if isinstance(other, PadicNumber):
            _check_same_prime(self, other)
            return other
        return PadicNumber(Fraction(other), self.prime)

    def __add__(self, other):
        o = self._lift(other)
        return PadicNumber(self.value + o.value, self.prime)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return PadicNumber(self.value - o.value, self.prime)

    def __rsub__(self, other):
        o = self._lift(other)
        return PadicNumber(o.value - self.value, self.prime)

    def __mul__(self, other):
        o = self._lift(other)
        return PadicNumber(self.value * o.value, self.prime)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        return PadicNumber(self.value / o.value, self.prime)

    def __neg__(self):
        return PadicNumber(-self.value, self.prime)

    def __eq__(self, other):
        if isinstance(other, PadicNumber):
            return self.prime == other.prime and self.value == other.value
        return self.value == other

    def __hash__(self):
        return hash((self.value, self.prime))

    # -- p-adic structure ----------------------------------------------
    @property
    def numerator(self) -> int:
        return self.value.numerator

    @property
    def denominator(self) -> int:
        return self.value.denominator

    def valuation(self) -> Valuation:
        return rational_valuation(self.value, self.prime)

    def abs_p(self) -> AbsValue:
        return AbsValue(self.valuation())

    @classmethod
    def parse(cls, text: str, prime: int) -> "PadicNumber":
        return cls(Fraction(text.strip()), prime)

    def __str__(self):
        return str(self.value)

    def __repr__(self):
        return f"PadicNumber({self.value}, p={self.prime})"


def valuation(x: PadicNumber) -> Valuation:
    """p-adic valuation of x; INF for x = 0."""
    return x.valuation()


def abs_p(x: PadicNumber) -> AbsValue:
    """|x|_p as an exact exponent."""
    return x.abs_p()


# ---------------------------------------------------------------------------
# projective line
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProjectivePoint:
    """A point of P^1(Q_p): finite(x) or the point at infinity."""

    prime: int
    value: PadicNumber | None  # None encodes infinity

    @classmethod
    def finite(cls, x: Rational | PadicNumber, prime: int | None = None) -> "ProjectivePoint":
        if isinstance(x, PadicNumber):
            return cls(x.prime, x)
        if prime is None:
            raise ValueError("prime required for a bare rational")
        return cls(prime, PadicNumber(Fraction(x), prime))

    @classmethod
    def infinity(cls, prime: int) -> "ProjectivePoint":
        return cls(prime, None)

    @property
    def is_infinity(self) -> bool:
        return self.value is None

    def __str__(self):
        return "inf" if self.is_infinity else str(self.value)


def spherical_distance(x: ProjectivePoint, y: ProjectivePoint) -> AbsValue:
    """Distance on P^1(Q_p): |x-y| / (max(|x|,1) max(|y|,1)), <= 1.

    The two infinity cases reduce to 1 for |x| <= 1 and 1/|x| otherwise.
    """
    if x.prime != y.prime:
        raise PrimeMismatchError(f"mixed primes {x.prime} and {y.prime}")
    if x.is_infinity and y.is_infinity:
        return AbsValue(INF)
    if x.is_infinity or y.is_infinity:
        fin = y if x.is_infinity else x
        v = fin.value.valuation()
        if v is INF or v >= 0:
            return ABS_ONE
        return AbsValue(-v)  # 1/|x|
    a, b = x.value, y.value
    vd = (a - b).valuation()
    if vd is INF:
        return AbsValue(INF)
    va = min(a.valuation(), 0) if a.value != 0 else 0
    vb = min(b.valuation(), 0) if b.value != 0 else 0
    # dividing by max(|x|,1) adds min(v(x), 0) back onto the exponent
    return AbsValue(vd - va - vb)


# ---------------------------------------------------------------------------
# digit expansions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DigitExpansion:
    """Digits d_i of x = sum d_i p^i starting at i = start."""

    prime: int
    start: int
    digits: tuple[int, ...]

    @property
    def is_empty(self) -> bool:
        return not self.digits

    def reconstruct(self) -> Fraction:
        return sum(
            (Fraction(d) * Fraction(self.prime) ** (self.start + i) for i, d in enumerate(self.digits)),
            Fraction(0),
        )

    def __str__(self):
        if self.is_empty:
            return "(empty) @ +inf"
        return " ".join(str(d) for d in self.digits) + f" @ {self.start}"


def digits(x: PadicNumber, count: int) -> DigitExpansion:
    """First `count` base-p digits of x, starting at position v(x).

    0 yields the distinguished empty expansion.  The reconstruction is
    congruent to x modulo p^(v(x)+count).
    """
    if count <= 0:
        raise ValueError("count must be positive")
    p = x.prime
    v = x.valuation()
    if v is INF:
        return DigitExpansion(p, 0, ())
    # unit part u = x / p^v has p-free denominator; read digits via inverse mod p^count
    u = x.value / Fraction(p) ** v
    num, den = u.numerator, u.denominator
    mod = p**count
    r = (num * pow(den, -1, mod)) % mod
    ds = []
    for _ in range(count):
        ds.append(r % p)
        r //= p
    return DigitExpansion(p, v, tuple(ds))


def residue(x: Rational, p: int, k: int) -> int:
    """x mod p^k as an integer in [0, p^k), for x with v_p(x) >= 0."""
    x = Fraction(x)
    mod = p**k
    den = x.denominator
    if den % p == 0:
        raise ValueError("negative valuation has no residue mod p^k")
    return (x.numerator * pow(den, -1, mod)) % mod


def from_residue(r: int, p: int, k: int) -> Fraction:
    """Canonical rational representative of a residue class mod p^k."""
    return Fraction(r % p**k)
