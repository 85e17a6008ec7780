"""Symbolic arithmetic for indexed disk families.

A family of disks like c(n) + p^(an+b) Z_p has a center that is a
polynomial in t = p^n with rational coefficients.  Valuations of such
expressions are eventually affine in n: v_p(c_k t^k) = v_p(c_k) + k n, and
for large n the minimum is reached by the smallest power present.  The
profile below captures that affine form together with the threshold after
which it is exact, so family-wide identities reduce to finitely many
concrete checks plus one affine comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import ceil, floor
from typing import Optional, Sequence

from .qp import INF, Valuation, rational_valuation


@dataclass(frozen=True)
class Affine:
    """n |-> slope*n + intercept with integer coefficients."""

    slope: int
    intercept: int

    def at(self, n: int) -> int:
        return self.slope * n + self.intercept

    def shifted(self, dn: int) -> "Affine":
        # composition with n |-> n + dn
        return Affine(self.slope, self.intercept + self.slope * dn)

    def __add__(self, other: "Affine") -> "Affine":
        return Affine(self.slope + other.slope, self.intercept + other.intercept)

    def __str__(self):
        if self.slope == 0:
            return str(self.intercept)
        head = "n" if self.slope == 1 else f"{self.slope}n"
        if self.intercept == 0:
            return head
        return f"{head}{self.intercept:+d}"

    @classmethod
    def parse(cls, text: str) -> "Affine":
        t = text.replace(" ", "")
        if "n" not in t:
            return cls(0, int(t))
        head, _, tail = t.partition("n")
        slope = 1 if head in ("", "+") else (-1 if head == "-" else int(head))
        return cls(slope, int(tail) if tail else 0)


@dataclass(frozen=True)
class ValProfile:
    """v_p(P(p^n)) = form.at(n) for all n >= from_n (None for P = 0)."""

    form: Optional[Affine]
    from_n: int

    @property
    def is_infinite(self) -> bool:
        return self.form is None


@dataclass(frozen=True)
class PowerPoly:
    """Polynomial in t = p^n over Q, e.g. 1 + 2t encodes 1 + 2^(n+1)."""

    prime: int
    coeffs: tuple[tuple[int, Fraction], ...]  # sorted (power, coeff), coeff != 0

    @classmethod
    def make(cls, prime: int, mapping: dict[int, Fraction]) -> "PowerPoly":
        items = tuple(sorted((k, Fraction(v)) for k, v in mapping.items() if v != 0))
        return cls(prime, items)

    @classmethod
    def constant(cls, prime: int, c) -> "PowerPoly":
        return cls.make(prime, {0: Fraction(c)})

    @classmethod
    def monomial(cls, prime: int, c, power: int) -> "PowerPoly":
        return cls.make(prime, {power: Fraction(c)})

    def as_dict(self) -> dict[int, Fraction]:
        return dict(self.coeffs)

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def at(self, n: int) -> Fraction:
        t = Fraction(self.prime) ** n
        return sum((c * t**k for k, c in self.coeffs), Fraction(0))

    def __add__(self, other: "PowerPoly") -> "PowerPoly":
        d = self.as_dict()
        for k, c in other.coeffs:
            d[k] = d.get(k, Fraction(0)) + c
        return PowerPoly.make(self.prime, d)

    def __sub__(self, other: "PowerPoly") -> "PowerPoly":
        d = self.as_dict()
        for k, c in other.coeffs:
            d[k] = d.get(k, Fraction(0)) - c
        return PowerPoly.make(self.prime, d)

    def __mul__(self, other: "PowerPoly") -> "PowerPoly":
        d: dict[int, Fraction] = {}
        for k1, c1 in self.coeffs:
            for k2, c2 in other.coeffs:
                d[k1 + k2] = d.get(k1 + k2, Fraction(0)) + c1 * c2
        return PowerPoly.make(self.prime, d)

    def scale(self, s) -> "PowerPoly":
        s = Fraction(s)
        return PowerPoly.make(self.prime, {k: c * s for k, c in self.coeffs})

    def substitute_index_shift(self, dn: int) -> "PowerPoly":
        """Replace n by n + dn, i.e. t by p^dn * t."""
        f = Fraction(self.prime) ** dn
        return PowerPoly.make(self.prime, {k: c * f**k for k, c in self.coeffs})

    def substitute_index_scale(self, d: int, dn: int = 0) -> "PowerPoly":
        """Replace n by d*n + dn, i.e. t by p^dn * t^d."""
        f = Fraction(self.prime) ** dn
        return PowerPoly.make(self.prime, {k * d: c * f**k for k, c in self.coeffs})

    def val_profile(self) -> ValProfile:
        """Eventually-exact affine form of v_p at t = p^n.

        For n below the threshold the valuation must be evaluated
        concretely; at and beyond it the smallest power dominates
        strictly, so no cancellation can occur.
        """
        if self.is_zero:
            return ValProfile(None, 0)
        p = self.prime
        k0, c0 = self.coeffs[0]
        v0 = rational_valuation(c0, p)
        from_n = 0
        for k, c in self.coeffs[1:]:
            vk = rational_valuation(c, p)
            # need (k - k0) n > v0 - vk
            need = floor(Fraction(v0 - vk, k - k0)) + 1
            from_n = max(from_n, need)
        return ValProfile(Affine(k0, v0), from_n)

    def valuation_at(self, n: int) -> Valuation:
        prof = self.val_profile()
        if prof.is_infinite:
            return INF
        if n >= prof.from_n:
            return prof.form.at(n)
        return rational_valuation(self.at(n), self.prime)

    def render(self, index_name: str = "n") -> str:
        """Formal-sum rendering, binary-expanding integer coefficients.

        5*t^2 over p=2 prints as "2^(2n) + 2^(2n+2)".
        """
        p = self.prime
        parts: list[str] = []
        for k, c in self.coeffs:
            if c.denominator == 1 and c > 0:
                m = c.numerator
                e = 0
                digs = []
                while m:
                    m, r = divmod(m, p)
                    if r:
                        digs.append((e, r))
                    e += 1
                for e, r in digs:
                    exp = _fmt_exp(k, e, index_name)
                    coef = "" if r == 1 else f"{r}*"
                    parts.append(f"{coef}{p}^({exp})" if k else (f"{coef}{p}^{e}" if e else str(r)))
            else:
                exp = _fmt_exp(k, 0, index_name)
                parts.append(f"{c}*{p}^({exp})" if k else str(c))
        return " + ".join(parts) if parts else "0"


def _fmt_exp(k: int, e: int, index_name: str) -> str:
    if k == 0:
        return str(e)
    head = index_name if k == 1 else f"{k}{index_name}"
    return f"{head}{e:+d}" if e else head


def compose_poly(coeffs: Sequence[Fraction], x: PowerPoly) -> PowerPoly:
    """Evaluate a Q-polynomial (dense coefficient list) at a PowerPoly."""
    acc = PowerPoly.constant(x.prime, 0)
    for a in reversed(list(coeffs)):
        acc = acc * x + PowerPoly.constant(x.prime, a)
    return acc


def affine_ge(lhs: ValProfile, rhs: Affine, n_lo: int, poly: PowerPoly) -> tuple[bool, int]:
    """Decide v_p(poly(p^n)) >= rhs(n) for all n >= some threshold.

    Returns (holds_eventually, threshold): for n in [n_lo, threshold) the
    caller must check concretely.  holds_eventually is False when the
    asymptotic slopes already rule it out.
    """
    if lhs.is_infinite:
        return True, n_lo
    a = lhs.form
    if a.slope > rhs.slope:
        # eventually dominates; threshold where a.at(n) >= rhs.at(n)
        need = ceil(Fraction(rhs.intercept - a.intercept, a.slope - rhs.slope))
        return True, max(n_lo, lhs.from_n, need)
    if a.slope == rhs.slope:
        if a.intercept >= rhs.intercept:
            return True, max(n_lo, lhs.from_n)
        return False, max(n_lo, lhs.from_n)
    return False, max(n_lo, lhs.from_n)
