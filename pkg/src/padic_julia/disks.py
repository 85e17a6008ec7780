"""Disks in P^1(Q_p) and the tree of closed disks.

Every ball is stored in the canonical closed form c + p^v Z_p.  Because the
value group of Q_p is the discrete lattice p^Z, an "open" ball of radius
p^-v has exactly the same Q_p-points as the closed ball of radius p^-(v+1),
so normalising to closed form makes equality decidable and disks hashable.
Complement-of-ball sets (the neighbourhoods of infinity) are a second
variant, and singletons are kept as their own type rather than zero-radius
balls.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .qp import (
    ABS_ONE,
    INF,
    AbsValue,
    PadicNumber,
    ProjectivePoint,
    Rational,
    rational_valuation,
    residue,
)


def canonical_center(c: Rational, p: int, rexp: int) -> Fraction:
    """Reduce a center modulo the radius lattice p^rexp.

    The representative has a terminating digit expansion: a plain integer
    when v(c) >= 0, otherwise an integer divided by the p-power tail.
    """
    c = Fraction(c)
    if c == 0:
        return c
    v = rational_valuation(c, p)
    if v >= rexp:
        return Fraction(0)
    e = max(0, -v)
    # scale into Z_p, reduce, scale back
    scaled = c * Fraction(p) ** e
    k = rexp + e
    if k <= 0:
        return Fraction(0)
    r = residue(scaled, p, k)
    return Fraction(r) / Fraction(p) ** e


@dataclass(frozen=True)
class Disk:
    """A ball c + p^v Z_p, or its complement in P^1(Q_p).

    `rexp` is the radius exponent: the ball form is {x : v(x - c) >= rexp},
    i.e. the closed ball of radius p^-rexp.  The complement form is
    {x : v(x - c) < rexp} together with infinity.
    """

    prime: int
    center: Fraction
    rexp: int
    complement: bool = False

    def __post_init__(self):
        cc = canonical_center(self.center, self.prime, self.rexp)
        object.__setattr__(self, "center", cc)

    # -- constructors ----------------------------------------------------
    @classmethod
    def closed_ball(cls, center: Rational, rexp: int, p: int) -> "Disk":
        return cls(p, Fraction(center), rexp)

    @classmethod
    def open_ball(cls, center: Rational, rexp: int, p: int) -> "Disk":
        # {v(x-c) > rexp} = {v(x-c) >= rexp+1}
        return cls(p, Fraction(center), rexp + 1)

    @classmethod
    def unit_ball(cls, p: int) -> "Disk":
        return cls(p, Fraction(0), 0)

    @classmethod
    def complement_of(cls, ball: "Disk") -> "Disk":
        if ball.complement:
            raise ValueError("already a complement")
        return cls(ball.prime, ball.center, ball.rexp, complement=True)

    # -- predicates ------------------------------------------------------
    @property
    def is_ball(self) -> bool:
        return not self.complement

    def radius(self) -> AbsValue:
        return AbsValue(self.rexp)

    def contains_value(self, x: Rational) -> bool:
        v = rational_valuation(Fraction(x) - self.center, self.prime)
        inside = (v is INF) or v >= self.rexp
        return inside if self.is_ball else not inside

    def contains_point(self, x: ProjectivePoint) -> bool:
        if x.prime != self.prime:
            raise ValueError("prime mismatch")
        if x.is_infinity:
            return self.complement
        return self.contains_value(x.value.value)

    def __str__(self):
        p = self.prime
        body = f"{self.center} + {p}^{self.rexp} * Z"
        return f"P1 \\ ({body})" if self.complement else body


def membership(x: ProjectivePoint, d: Disk) -> bool:
    """Exact ultrametric membership test."""
    return d.contains_point(x)


def contains(outer: Disk, inner: Disk) -> bool:
    """True iff every point of `inner` lies in `outer` (decided exactly)."""
    if outer.prime != inner.prime:
        raise ValueError("prime mismatch")
    p = outer.prime
    if outer.is_ball and inner.is_ball:
        if inner.rexp < outer.rexp:
            return False
        v = rational_valuation(inner.center - outer.center, p)
        return (v is INF) or v >= outer.rexp
    if outer.complement and inner.is_ball:
        # ball avoids the excluded ball entirely
        excl = Disk(p, outer.center, outer.rexp)
        return disjoint(excl, inner)
    if outer.complement and inner.complement:
        # P1 minus B_out contains P1 minus B_in iff B_in contains B_out
        return contains(Disk(p, inner.center, inner.rexp), Disk(p, outer.center, outer.rexp))
    # ball can never contain a complement (the latter includes infinity)
    return False


def disjoint(a: Disk, b: Disk) -> bool:
    if a.prime != b.prime:
        raise ValueError("prime mismatch")
    p = a.prime
    if a.is_ball and b.is_ball:
        v = rational_valuation(a.center - b.center, p)
        return not ((v is INF) or v >= min(a.rexp, b.rexp))
    if a.is_ball and b.complement:
        return contains(Disk(p, b.center, b.rexp), a)
    if a.complement and b.is_ball:
        return disjoint(b, a)
    return False  # two complements always share large points


def diameter(d: Disk) -> AbsValue:
    """sup of spherical distances over the disk, computed exactly.

    Supported for balls inside the unit ball (diameter = radius) and for
    balls of constant absolute value > 1, where the spherical metric
    rescales by |center|^-2.  Complement forms are rejected.
    """
    if d.complement:
        raise ValueError("diameter of a complement-form disk is not supported")
    vc = rational_valuation(d.center, d.prime)
    if d.rexp >= 0 and ((vc is INF) or vc >= 0):
        return AbsValue(d.rexp)
    if vc is not INF and vc < 0 and d.rexp > vc:
        # all points share valuation vc < 0; spherical metric divides by |x||y|
        return AbsValue(d.rexp - 2 * vc)
    raise ValueError("disk straddles the unit sphere; analyse it through a chart swap")


def tree_parent(d: Disk) -> Disk:
    """The smallest strictly larger closed disk: same center, one lattice step up."""
    if d.complement:
        raise ValueError("ball form required")
    return Disk(d.prime, d.center, d.rexp - 1)


def residue_children(d: Disk) -> list[Disk]:
    """The p closed sub-disks one lattice step down, partitioning d."""
    if d.complement:
        raise ValueError("ball form required")
    p = d.prime
    step = Fraction(p) ** d.rexp
    return [Disk(p, d.center + i * step, d.rexp + 1) for i in range(p)]


@dataclass(frozen=True)
class Singleton:
    """A one-point set; kept distinct from zero-radius balls."""

    prime: int
    point: Fraction

    def contains_value(self, x: Rational) -> bool:
        return Fraction(x) == self.point

    def __str__(self):
        return f"point({self.point})"


# ---------------------------------------------------------------------------
# tree of closed disks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiskTreeNode:
    """A vertex of the tree of closed disks, ordered by inclusion.

    Edges join each disk to the smallest closed disk strictly containing
    it; with radii in p^Z that parent is one exponent step up.  Nodes whose
    disk contains one of the supplied marked points are the removed ones.
    """

    disk: Disk

    def parent(self) -> "DiskTreeNode":
        return DiskTreeNode(tree_parent(self.disk))

    def children(self) -> list["DiskTreeNode"]:
        return [DiskTreeNode(c) for c in residue_children(self.disk)]

    def removed(self, marked_points: Iterable[Rational]) -> bool:
        return any(self.disk.contains_value(x) for x in marked_points)


# ---------------------------------------------------------------------------
# literal syntax:  "c + p^k * Z" | "closed(c, p^-k)" | "point(c)"
# ---------------------------------------------------------------------------

_BALL_RE = re.compile(r"^\s*(?P<c>[-0-9/]+)\s*\+\s*(?P<p>\d+)\^(?P<k>-?\d+)\s*\*\s*Z\s*$")
_CLOSED_RE = re.compile(r"^\s*closed\(\s*(?P<c>[-0-9/]+)\s*,\s*(?P<p>\d+)\^(?P<k>-?\d+)\s*\)\s*$")
_POINT_RE = re.compile(r"^\s*point\(\s*(?P<c>[-0-9/]+)\s*\)\s*$")


def parse_disk(text: str, prime: int) -> Disk | Singleton:
    """Parse a disk literal; the prime in the literal must match `prime`."""
    m = _BALL_RE.match(text)
    if m:
        if int(m.group("p")) != prime:
            raise ValueError(f"literal prime {m.group('p')} != {prime}")
        return Disk.closed_ball(Fraction(m.group("c")), int(m.group("k")), prime)
    m = _CLOSED_RE.match(text)
    if m:
        if int(m.group("p")) != prime:
            raise ValueError(f"literal prime {m.group('p')} != {prime}")
        return Disk.closed_ball(Fraction(m.group("c")), -int(m.group("k")), prime)
    m = _POINT_RE.match(text)
    if m:
        return Singleton(prime, Fraction(m.group("c")))
    raise ValueError(f"unrecognised disk literal: {text!r}")


def format_disk(d: Disk | Singleton) -> str:
    if isinstance(d, Singleton):
        return f"point({d.point})"
    return str(d)
