"""Rational maps over Q_p as dynamical systems.

Everything here is exact: Taylor coefficients are rationals, radii and
scaling ratios are integer exponents of p, and disk images are decided by
coefficient-valuation criteria rather than sampling.  The central object
is the maximal scaling disk of a point: the largest disk around it on
which the map multiplies all distances by one constant.  Its radius is
read off the recentred coefficients a_k through the inequalities
|a_k| r^(k-1) <= |a_1|, and the Q_p-points of that disk form a closed
ball on the lattice p^Z.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import floor
from typing import Optional, Sequence, Union

from .qp import (
    INF,
    AbsValue,
    PadicNumber,
    ProjectivePoint,
    Rational,
    Valuation,
    rational_valuation,
)
from .disks import Disk, Singleton, contains, residue_children

Poly = tuple[Fraction, ...]


# ---------------------------------------------------------------------------
# polynomial helpers (dense, over Fraction)
# ---------------------------------------------------------------------------


def poly_trim(c: Sequence[Fraction]) -> Poly:
    c = list(c)
    while c and c[-1] == 0:
        c.pop()
    return tuple(c)


def poly_eval(c: Poly, x: Fraction) -> Fraction:
    acc = Fraction(0)
    for a in reversed(c):
        acc = acc * x + a
    return acc


def poly_add(a: Poly, b: Poly) -> Poly:
    n = max(len(a), len(b))
    return poly_trim([(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)])


def poly_scale(a: Poly, s: Fraction) -> Poly:
    return poly_trim([s * x for x in a])


def poly_mul(a: Poly, b: Poly) -> Poly:
    if not a or not b:
        return ()
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x == 0:
            continue
        for j, y in enumerate(b):
            out[i + j] += x * y
    return poly_trim(out)


def poly_derive(c: Poly) -> Poly:
    return poly_trim([Fraction(i) * c[i] for i in range(1, len(c))])


def poly_divmod(a: Poly, b: Poly) -> tuple[Poly, Poly]:
    if not b:
        raise ZeroDivisionError("polynomial division by zero")
    a = list(a)
    q = [Fraction(0)] * max(0, len(a) - len(b) + 1)
    while len(a) >= len(b) and poly_trim(a):
        a = list(poly_trim(a))
        if len(a) < len(b):
            break
        coef = a[-1] / b[-1]
        deg = len(a) - len(b)
        q[deg] = coef
        for i, y in enumerate(b):
            a[deg + i] -= coef * y
    return poly_trim(q), poly_trim(a)


def poly_gcd(a: Poly, b: Poly) -> Poly:
    a, b = poly_trim(a), poly_trim(b)
    while b:
        _, r = poly_divmod(a, b)
        a, b = b, r
    if a:
        a = poly_scale(a, 1 / a[-1])  # monic
    return a


def poly_shift(c: Poly, x0: Fraction) -> Poly:
    """Coefficients of P(x0 + u) as a polynomial in u (exact Taylor shift)."""
    out: Poly = ()
    for a in reversed(c):
        out = poly_add(poly_mul(out, (x0, Fraction(1))), (a,))
    return tuple(out) + tuple(Fraction(0) for _ in range(len(c) - len(out)))


def _divisors(n: int) -> list[int]:
    n = abs(n)
    out = []
    i = 1
    while i * i <= n:
        if n % i == 0:
            out.append(i)
            if i != n // i:
                out.append(n // i)
        i += 1
    return sorted(out)


def rational_roots(c: Poly) -> list[tuple[Fraction, int]]:
    """All rational roots of c with multiplicities, by the divisor search."""
    c = poly_trim(c)
    if not c:
        raise ValueError("zero polynomial")
    roots: list[tuple[Fraction, int]] = []
    # factor out x^k
    k = 0
    while c and c[0] == 0:
        c = c[1:]
        k += 1
    if k:
        roots.append((Fraction(0), k))
    if len(c) <= 1:
        return roots
    lcm = 1
    for a in c:
        lcm = lcm * a.denominator // _gcd_int(lcm, a.denominator)
    ic = [int(a * lcm) for a in c]
    lead, tail = ic[-1], ic[0]
    cands = set()
    for num in _divisors(tail):
        for den in _divisors(lead):
            cands.add(Fraction(num, den))
            cands.add(Fraction(-num, den))
    for r in sorted(cands):
        mult = 0
        cur = tuple(Fraction(x) for x in ic)
        while poly_eval(cur, r) == 0:
            mult += 1
            cur, rem = poly_divmod(cur, (-r, Fraction(1)))
            assert not rem
        if mult:
            roots.append((r, mult))
    return sorted(roots)


def _gcd_int(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a if a else 1


# ---------------------------------------------------------------------------
# rational maps
# ---------------------------------------------------------------------------


class UnsupportedMapError(ValueError):
    """The map falls outside what this analysis handles exactly."""


class UndecidedImageError(RuntimeError):
    """Disk-image decomposition exceeded its depth bound."""


@dataclass(frozen=True)
class RationalMap:
    """num(x)/den(x) with exact rational coefficients, over Q_p."""

    prime: int
    num: Poly
    den: Poly = (Fraction(1),)

    def __post_init__(self):
        num = poly_trim(tuple(Fraction(c) for c in self.num))
        den = poly_trim(tuple(Fraction(c) for c in self.den))
        if not den:
            raise ValueError("zero denominator")
        g = poly_gcd(num, den)
        if len(g) > 1:
            num, _ = poly_divmod(num, g)
            den, _ = poly_divmod(den, g)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @property
    def degree(self) -> int:
        return max(len(self.num) - 1, len(self.den) - 1)

    @property
    def is_polynomial(self) -> bool:
        return len(self.den) == 1

    def __call__(self, x: Fraction) -> Fraction:
        return poly_eval(self.num, x) / poly_eval(self.den, x)

    def __str__(self):
        def fmt(c):
            return " + ".join(f"{a}*x^{i}" for i, a in enumerate(c) if a != 0) or "0"

        if self.is_polynomial and self.den[0] == 1:
            return fmt(self.num)
        return f"({fmt(self.num)}) / ({fmt(self.den)})"


def evaluate(map_: RationalMap, x) -> ProjectivePoint:
    """Exact evaluation on P^1, with poles sent to infinity."""
    p = map_.prime
    if isinstance(x, ProjectivePoint):
        if x.is_infinity:
            dn, dd = len(map_.num) - 1, len(map_.den) - 1
            if dn > dd:
                return ProjectivePoint.infinity(p)
            if dn < dd:
                return ProjectivePoint.finite(Fraction(0), p)
            return ProjectivePoint.finite(map_.num[-1] / map_.den[-1], p)
        xv = x.value.value
    elif isinstance(x, PadicNumber):
        xv = x.value
    else:
        xv = Fraction(x)
    dv = poly_eval(map_.den, xv)
    nv = poly_eval(map_.num, xv)
    if dv == 0:
        if nv == 0:
            raise UnsupportedMapError("common root of numerator and denominator")
        return ProjectivePoint.infinity(p)
    return ProjectivePoint.finite(nv / dv, p)


def derivative(map_: RationalMap) -> RationalMap:
    """Formal quotient-rule derivative, normalised."""
    n, d = map_.num, map_.den
    num = poly_add(poly_mul(poly_derive(n), d), poly_scale(poly_mul(n, poly_derive(d)), Fraction(-1)))
    den = poly_mul(d, d)
    if not num:
        num = (Fraction(0),)
    return RationalMap(map_.prime, num, den)


def taylor_recenter(map_: RationalMap, x0: Rational, order: Optional[int] = None) -> list[Fraction]:
    """Exact coefficients of the expansion of the map around x0.

    Polynomials expand completely; rational maps expand to `order` terms
    by power-series division (x0 must not be a pole).
    """
    x0 = Fraction(x0)
    num = poly_shift(map_.num, x0)
    den = poly_shift(map_.den, x0)
    if map_.is_polynomial:
        c = poly_scale(num, 1 / den[0])
        out = list(c)
        if order is not None:
            out = (out + [Fraction(0)] * order)[:order]
        return [Fraction(x) for x in out]
    if den[0] == 0:
        raise UnsupportedMapError(f"pole at {x0}")
    if order is None:
        order = max(len(num), len(den)) + 4
    inv = _series_invert(den, order)
    prod = poly_mul(poly_trim(num), poly_trim(inv))
    out = list(prod[:order]) + [Fraction(0)] * max(0, order - len(prod))
    return [Fraction(x) for x in out[:order]]


def _series_invert(den: Poly, order: int) -> Poly:
    inv = [Fraction(1) / den[0]]
    for n in range(1, order):
        s = Fraction(0)
        for k in range(1, min(n, len(den) - 1) + 1):
            s += den[k] * inv[n - k]
        inv.append(-s / den[0])
    return tuple(inv)


# ---------------------------------------------------------------------------
# critical points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CriticalPoint:
    location: ProjectivePoint
    local_degree: int
    wild: bool
    leading_vexp: Valuation  # v_p of the first nonvanishing coefficient b_m

    @property
    def tame(self) -> bool:
        return not self.wild


@dataclass(frozen=True)
class CriticalReport:
    points: tuple[CriticalPoint, ...]
    missing: int  # Wronskian degree unaccounted for by rational roots

    @property
    def complete(self) -> bool:
        return self.missing == 0

    def finite_values(self) -> list[Fraction]:
        return [c.location.value.value for c in self.points if not c.location.is_infinity]


def _wronskian(map_: RationalMap) -> Poly:
    n, d = map_.num, map_.den
    w = poly_add(poly_mul(poly_derive(n), d), poly_scale(poly_mul(n, poly_derive(d)), Fraction(-1)))
    return poly_trim(w)


def local_degree_at(map_: RationalMap, c: Fraction) -> tuple[int, Valuation]:
    """Local degree m and v_p of the leading coefficient b_m at a point c."""
    coeffs = taylor_recenter(map_, c, order=None if map_.is_polynomial else 2 * map_.degree + 4)
    for m in range(1, len(coeffs)):
        if coeffs[m] != 0:
            return m, rational_valuation(coeffs[m], map_.prime)
    raise UnsupportedMapError("locally constant map")


@lru_cache(maxsize=None)
def rational_critical_points(map_: RationalMap) -> CriticalReport:
    """Critical points of the map that are rational, with multiplicity data.

    Finite critical points are the rational roots of the Wronskian; the
    point at infinity is appended when its local degree is at least 2.
    A nonzero `missing` count flags Wronskian roots outside Q.
    """
    if map_.degree < 1:
        raise UnsupportedMapError("constant map")
    p = map_.prime
    w = _wronskian(map_)
    pts: list[CriticalPoint] = []
    accounted = 0
    if w:
        for r, mult in rational_roots(w):
            if poly_eval(map_.den, r) == 0:
                accounted += mult  # pole; handled through the chart swap
                continue
            m, lead_v = local_degree_at(map_, r)
            pts.append(
                CriticalPoint(ProjectivePoint.finite(r, p), m, wild=(m % p == 0), leading_vexp=lead_v)
            )
            accounted += mult
    missing = max(0, (len(w) - 1) - accounted) if w else 0
    m_inf = _local_degree_at_infinity(map_)
    if m_inf >= 2:
        pts.append(CriticalPoint(ProjectivePoint.infinity(p), m_inf, wild=(m_inf % p == 0), leading_vexp=0))
    return CriticalReport(tuple(pts), missing)


def _local_degree_at_infinity(map_: RationalMap) -> int:
    dn, dd = len(map_.num) - 1, len(map_.den) - 1
    if dn > dd:
        return dn - dd  # infinity is fixed with this local degree
    if dn < dd:
        return dd - dn
    # phi(inf) finite: expand phi(1/z) - value at z = 0
    n_rev = tuple(reversed(map_.num))
    d_rev = tuple(reversed(map_.den))
    conj = RationalMap(map_.prime, n_rev, d_rev)
    val = conj.num[0] / conj.den[0]
    shifted = poly_add(conj.num, poly_scale(conj.den, -val))
    order = next((i for i, a in enumerate(shifted) if a != 0), None)
    return order if order is not None else 1


def finite_critical_values(map_: RationalMap) -> list[Fraction]:
    return rational_critical_points(map_).finite_values()


def newton_polygon_root_valuations(poly: Poly, p: int) -> list[tuple[Fraction, int]]:
    """(valuation, count) for the roots of poly in C_p, by the lower hull."""
    pts = [(k, rational_valuation(c, p)) for k, c in enumerate(poly) if c != 0]
    if len(pts) < 2:
        return []
    hull = [pts[0]]
    for q in pts[1:]:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (y2 - y1) * (q[0] - x1) >= (q[1] - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append(q)
    out = []
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        slope = Fraction(y2 - y1, x2 - x1)
        out.append((-slope, x2 - x1))
    return out


def unaccounted_critical_roots(map_: RationalMap) -> list[tuple[Fraction, int]]:
    """Valuations of Wronskian roots beyond the rational critical points.

    Roots with negative valuation lie outside Z_p, and roots with
    non-integral valuation are never Q_p-rational; either way they cannot
    be Julia critical points of the Q_p-side analysis.
    """
    w = _wronskian(map_)
    if not w or len(w) == 1:
        return []
    for r, mult in rational_roots(w):
        for _ in range(mult):
            w, rem = poly_divmod(w, (-r, Fraction(1)))
            assert not rem
    if len(w) <= 1:
        return []
    return newton_polygon_root_valuations(w, map_.prime)


# ---------------------------------------------------------------------------
# scaling disks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingDisk:
    """A disk on which the map scales all distances by p^(-ratio_vexp).

    `disk` is the set of Q_p-points of the maximal disk certified by the
    coefficient criterion, stored in canonical closed form.
    """

    disk: Disk
    ratio_vexp: int

    def ratio(self) -> AbsValue:
        return AbsValue(self.ratio_vexp)


def _vex(x: Fraction, p: int) -> Valuation:
    return rational_valuation(x, p)


def maximal_scaling_disk(map_: RationalMap, x0: Rational) -> ScalingDisk:
    """Largest disk around x0 on which the map is scaling, with its ratio.

    Criterion: with a_k the recentred coefficients, every k >= 2 must
    satisfy |a_k| r^(k-1) <= |a_1| (for rational maps the denominator must
    additionally have constant absolute value).  x0 must not be critical.
    """
    p = map_.prime
    x0 = Fraction(x0)
    if poly_eval(map_.den, x0) == 0:
        raise UnsupportedMapError(f"pole at {x0}")
    A = poly_shift(map_.num, x0)
    B = poly_shift(map_.den, x0)
    if map_.is_polynomial:
        a1v = _vex(A[1] / B[0], p) if len(A) > 1 and A[1] != 0 else INF
        if a1v is INF:
            raise UnsupportedMapError(f"critical point at {x0}")
        bound: Optional[Fraction] = None
        for k in range(2, len(A)):
            if A[k] == 0:
                continue
            cand = Fraction(a1v - _vex(A[k] / B[0], p), k - 1)
            bound = cand if bound is None or cand > bound else bound
        if bound is None:
            raise UnsupportedMapError("degree < 2 map has no finite maximal scaling disk")
        trace = floor(bound) + 1
        return ScalingDisk(Disk(p, x0, trace), a1v)
    # bivariate criterion: H(u,v) = (A(u)B(v) - A(v)B(u)) / (u - v)
    Hc: dict[tuple[int, int], Fraction] = {}
    for k in range(len(A)):
        for l in range(len(B)):
            coef = A[k] * B[l]
            if coef == 0:
                continue
            if k > l:
                for i in range(k - l):
                    key = (l + i, l + (k - l - 1 - i))
                    Hc[key] = Hc.get(key, Fraction(0)) + coef
            elif l > k:
                for i in range(l - k):
                    key = (k + i, k + (l - k - 1 - i))
                    Hc[key] = Hc.get(key, Fraction(0)) - coef
    c00 = Hc.get((0, 0), Fraction(0))
    if c00 == 0:
        raise UnsupportedMapError(f"critical point at {x0}")
    v00 = _vex(c00, p)
    bound = None
    for (i, j), coef in Hc.items():
        if (i, j) == (0, 0) or coef == 0:
            continue
        cand = Fraction(v00 - _vex(coef, p), i + j)
        bound = cand if bound is None or cand > bound else bound
    vB0 = _vex(B[0], p)
    for k in range(1, len(B)):
        if B[k] == 0:
            continue
        cand = Fraction(vB0 - _vex(B[k], p), k)
        bound = cand if bound is None or cand > bound else bound
    if bound is None:
        raise UnsupportedMapError("degree < 2 map has no finite maximal scaling disk")
    trace = floor(bound) + 1
    return ScalingDisk(Disk(p, x0, trace), v00 - 2 * vB0)


def critical_trace_rexp(map_: RationalMap, c: Fraction) -> tuple[int, int, Valuation]:
    """Radius exponent within which |f(x)-f(c)| = |b_m| |x-c|^m holds.

    Returns (trace_rexp, m, v(b_m)).  Criterion: |b_k| r^(k-m) <= |b_m|
    for every k > m.
    """
    p = map_.prime
    coeffs = taylor_recenter(map_, c, order=None if map_.is_polynomial else 2 * map_.degree + 6)
    m, bmv = local_degree_at(map_, c)
    bound: Optional[Fraction] = None
    for k in range(m + 1, len(coeffs)):
        if coeffs[k] == 0:
            continue
        cand = Fraction(bmv - _vex(coeffs[k], p), k - m)
        bound = cand if bound is None or cand > bound else bound
    if bound is None:  # pure power map around c
        return (-(10**6), m, bmv)
    return (floor(bound) + 1, m, bmv)


def scaling_violation_pair(
    map_: RationalMap, x0: Rational, rexp: int, span: int = 6
) -> Optional[tuple[Fraction, Fraction]]:
    """Search a pair in x0 + p^rexp Z_p violating |f(x)-f(y)| = ratio |x-y|."""
    p = map_.prime
    x0 = Fraction(x0)
    ratio_v = _vex(poly_eval(_wronskian(map_), x0) / poly_eval(map_.den, x0) ** 2, p)
    step = Fraction(p) ** rexp
    reps = [x0 + step * t for t in range(p**span)]
    for x, y in itertools.combinations(reps, 2):
        dy = poly_eval(map_.den, y)
        dx = poly_eval(map_.den, x)
        if dx == 0 or dy == 0:
            return (x, y)
        lhs = _vex(map_(x) - map_(y), p)
        rhs = ratio_v + _vex(x - y, p)
        if lhs != rhs:
            return (x, y)
    return None


# ---------------------------------------------------------------------------
# disk images
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailSpec:
    """Images of the spheres around `point` from level `from_level` on.

    They accumulate at `value` (the image of the point) and are all
    contained in `enclosure`.
    """

    point: Fraction
    value: Fraction
    from_level: int
    enclosure: Disk


@dataclass(frozen=True)
class DiskUnion:
    """An exact image that is not a single disk: points, disks, and a tail."""

    points: tuple[Fraction, ...]
    disks: tuple[Disk, ...]
    tail: Optional[TailSpec] = None

    def covers_value(self, x: Fraction) -> Optional[bool]:
        """Membership when decidable from the listed pieces (None if only
        the tail enclosure contains x)."""
        if any(x == q for q in self.points):
            return True
        if any(d.contains_value(x) for d in self.disks):
            return True
        if self.tail and self.tail.enclosure.contains_value(x):
            return None
        return False


ImageResult = Union[Disk, DiskUnion]


def scaling_image(map_: RationalMap, d: Disk, sd: ScalingDisk) -> Disk:
    center = map_(d.center)
    return Disk(map_.prime, center, d.rexp + sd.ratio_vexp)


def disk_image(
    map_: RationalMap,
    d: Disk,
    max_depth: int = 32,
    tail_levels: int = 24,
) -> ImageResult:
    """Exact image of a ball under the map.

    If the ball sits inside the maximal scaling disk of its center, the
    image is the ball around the image of the center with the radius
    scaled by the ratio.  A ball centred at a critical point decomposes
    into the critical value plus the images of the spheres around it; the
    result is then a union descriptor with an explicit tail.  Any other
    ball is split into residue children recursively; exceeding the depth
    bound raises UndecidedImageError rather than returning anything
    approximate.
    """
    if d.complement:
        raise UnsupportedMapError("complement-form disks need the chart swap first")
    report = rational_critical_points(map_)
    crits = [c for c in report.finite_values() if d.contains_value(c)]
    pieces_points: list[Fraction] = []
    pieces_disks: list[Disk] = []
    tail: Optional[TailSpec] = None

    def recurse(dd: Disk, depth: int) -> None:
        nonlocal tail
        inner = [c for c in crits if dd.contains_value(c)]
        if not inner:
            sd = maximal_scaling_disk(map_, dd.center)
            if contains(sd.disk, dd):
                pieces_disks.append(scaling_image(map_, dd, sd))
                return
        elif len(inner) == 1:
            c = inner[0]
            trace, m, bmv = critical_trace_rexp(map_, c)
            if dd.rexp >= trace:
                value = map_(c)
                pieces_points.append(value)
                p = map_.prime
                for j in range(dd.rexp, dd.rexp + tail_levels):
                    for u in range(1, p):
                        sphere_piece = Disk(p, c + u * Fraction(p) ** j, j + 1)
                        recurse(sphere_piece, depth - 1)
                enc_rexp = bmv + m * (dd.rexp + tail_levels)
                tail = TailSpec(
                    point=c,
                    value=value,
                    from_level=dd.rexp + tail_levels,
                    enclosure=Disk(p, value, enc_rexp),
                )
                return
        if depth <= 0:
            raise UndecidedImageError(f"decomposition depth exhausted at {dd}")
        for child in residue_children(dd):
            recurse(child, depth - 1)

    recurse(d, max_depth)
    if not pieces_points and tail is None and len(pieces_disks) >= 1:
        merged = _merge_disks(pieces_disks)
        if len(merged) == 1:
            return merged[0]
        return DiskUnion((), tuple(merged), None)
    return DiskUnion(tuple(pieces_points), tuple(_merge_disks(pieces_disks)), tail)


def _merge_disks(ds: list[Disk]) -> list[Disk]:
    """Merge sibling balls into parents until no full residue family remains."""
    cur = set(ds)
    changed = True
    while changed:
        changed = False
        # drop balls contained in others
        drop = set()
        for a in cur:
            for b in cur:
                if a is not b and a != b and contains(b, a):
                    drop.add(a)
        cur -= drop
        by_parent: dict[Disk, set[Disk]] = {}
        for a in cur:
            by_parent.setdefault(Disk(a.prime, a.center, a.rexp - 1), set()).add(a)
        for parent, kids in by_parent.items():
            if len(kids) == parent.prime and kids == set(residue_children(parent)):
                cur -= kids
                cur.add(parent)
                changed = True
                break
    return sorted(cur, key=lambda x: (x.rexp, x.center))


def image_diameter(map_: RationalMap, d: Disk, max_depth: int = 32) -> AbsValue:
    """Exact spherical diameter of the image of a ball inside Z_p."""
    img = disk_image(map_, d, max_depth=max_depth)
    if isinstance(img, Disk):
        return AbsValue(img.rexp)
    best: Valuation = INF
    values = list(img.points)
    for piece in img.disks:
        best = min(best, piece.rexp)
        values.append(piece.center)
    # distances between distinct pieces can exceed every piece's radius
    for a, b in itertools.combinations(values, 2):
        v = rational_valuation(a - b, map_.prime)
        best = min(best, v)
    if img.tail is not None:
        for a in values:
            v = rational_valuation(a - img.tail.value, map_.prime)
            best = min(best, v)
    return AbsValue(best)


# ---------------------------------------------------------------------------
# critical orbits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EscapeRule:
    """Certified growth zone: v(x) <= vexp_threshold implies v(f(x)) = slope*v(x) + shift < v(x)."""

    vexp_threshold: int
    slope: int
    shift: int


def escape_rule(map_: RationalMap) -> Optional[EscapeRule]:
    """Leading-term domination zone near infinity (None if infinity does
    not attract, e.g. deg num <= deg den)."""
    if len(map_.num) - 1 <= len(map_.den) - 1:
        return None
    p = map_.prime
    lead_v = _vex(map_.num[-1], p) - _vex(map_.den[-1], p)
    d = (len(map_.num) - 1) - (len(map_.den) - 1)
    t_bound: Optional[int] = None

    def upd(t):
        nonlocal t_bound
        t_bound = t if t_bound is None else min(t_bound, t)

    dn = len(map_.num) - 1
    vn = _vex(map_.num[-1], p)
    for k in range(dn):
        if map_.num[k] == 0:
            continue
        # need vn + dn*w < v(a_k) + k*w strictly
        gap = _vex(map_.num[k], p) - vn
        upd(_floor_div_strict(gap, dn - k))
    dd = len(map_.den) - 1
    vd = _vex(map_.den[-1], p)
    for k in range(dd):
        if map_.den[k] == 0:
            continue
        gap = _vex(map_.den[k], p) - vd
        upd(_floor_div_strict(gap, dd - k))
    # strict decrease of valuation: lead_v + d*w < w
    if d > 1:
        upd(_floor_div_strict(-lead_v, d - 1))
    thr = min(t_bound if t_bound is not None else -1, -1)
    return EscapeRule(thr, d, lead_v)


def _floor_div_strict(a: int, b: int) -> int:
    """Largest integer w with b*w < a (b > 0)."""
    q = Fraction(a, b)
    f = floor(q)
    return f - 1 if f == q else f


@dataclass(frozen=True)
class OrbitEntry:
    start: ProjectivePoint
    orbit: tuple[ProjectivePoint, ...]
    status: str  # "eventually-periodic" | "escapes" | "undetermined"
    preperiod: int = 0
    period: int = 0
    multiplier_vexp: Optional[Valuation] = None
    cycle_class: str = ""  # repelling | indifferent | attracting | superattracting
    escape_step: Optional[int] = None

    @property
    def julia(self) -> bool:
        return self.status == "eventually-periodic" and self.cycle_class == "repelling"

    @property
    def iteratedly_prefixed(self) -> bool:
        return self.status == "eventually-periodic" and self.period == 1


@dataclass(frozen=True)
class OrbitReport:
    map: RationalMap
    entries: tuple[OrbitEntry, ...]
    critical_report: CriticalReport
    classes: tuple[tuple[int, ...], ...]  # indices into entries, ~ classes of Julia crits
    minimal_classes: tuple[int, ...]  # indices into `classes`

    @property
    def geometrically_finite(self) -> Optional[bool]:
        """Certificate over the rational critical set (None when undetermined)."""
        if any(e.status == "undetermined" for e in self.entries):
            return None
        return all(e.status in ("eventually-periodic", "escapes") for e in self.entries)

    def julia_entries(self) -> list[OrbitEntry]:
        return [e for e in self.entries if e.julia]


def orbit_of(map_: RationalMap, x0, horizon: int = 10**4, bit_cap: int = 10**6) -> OrbitEntry:
    """Exact forward orbit of a point until repeat, certified escape, or horizon."""
    p = map_.prime
    start = x0 if isinstance(x0, ProjectivePoint) else ProjectivePoint.finite(Fraction(x0), p)
    esc = escape_rule(map_)
    orbit: list[ProjectivePoint] = [start]
    seen: dict[ProjectivePoint, int] = {start: 0}
    cur = start
    for step in range(1, horizon + 1):
        if cur.is_infinity:
            nxt = evaluate(map_, cur)
        else:
            if esc is not None:
                v = cur.value.valuation()
                if v is not INF and v <= esc.vexp_threshold:
                    return OrbitEntry(start, tuple(orbit), "escapes", escape_step=step - 1)
            if cur.value.numerator.bit_length() + cur.value.denominator.bit_length() > bit_cap:
                return OrbitEntry(start, tuple(orbit), "undetermined")
            nxt = evaluate(map_, cur)
        if nxt in seen:
            pre = seen[nxt]
            cyc = orbit[pre:]
            mv, cls = _classify_cycle(map_, cyc)
            return OrbitEntry(
                start,
                tuple(orbit),
                "eventually-periodic",
                preperiod=pre,
                period=len(orbit) - pre,
                multiplier_vexp=mv,
                cycle_class=cls,
            )
        orbit.append(nxt)
        seen[nxt] = len(orbit) - 1
        cur = nxt
    return OrbitEntry(start, tuple(orbit), "undetermined")


def _classify_cycle(map_: RationalMap, cycle: list[ProjectivePoint]) -> tuple[Valuation, str]:
    if any(pt.is_infinity for pt in cycle):
        if map_.is_polynomial and len(cycle) == 1:
            return INF, "superattracting"
        raise UnsupportedMapError("cycle through infinity for a non-polynomial map")
    dmap = derivative(map_)
    total: Valuation = 0
    for pt in cycle:
        val = evaluate(dmap, pt)
        if val.is_infinity:
            raise UnsupportedMapError("derivative pole on a cycle")
        v = val.value.valuation()
        total = total + v if v is not INF else INF
    if total is INF:
        return INF, "superattracting"
    if total < 0:
        return total, "repelling"
    if total == 0:
        return total, "indifferent"
    return total, "attracting"


def critical_orbit_analysis(
    map_: RationalMap,
    crits: Optional[Sequence[Fraction]] = None,
    horizon: int = 10**4,
    bit_cap: int = 10**6,
) -> OrbitReport:
    """Forward-orbit classification of the critical points.

    Produces the eventual-periodicity certificates, the equivalence
    classes under mutual orbit membership, and the minimal classes in
    the orbit-inclusion order.
    """
    if map_.degree < 2:
        raise UnsupportedMapError("dynamical analysis needs degree >= 2")
    report = rational_critical_points(map_)
    if crits is None:
        values = report.finite_values()
    else:
        values = [Fraction(c) for c in crits]
    entries = tuple(orbit_of(map_, c, horizon=horizon, bit_cap=bit_cap) for c in values)

    # ~ classes among Julia critical points, at finite-orbit scale
    julia_idx = [i for i, e in enumerate(entries) if e.julia]
    orbit_sets = {i: {pt for pt in entries[i].orbit} for i in julia_idx}
    classes: list[list[int]] = []
    for i in julia_idx:
        placed = False
        for cl in classes:
            j = cl[0]
            if entries[i].start in orbit_sets[j] and entries[j].start in orbit_sets[i]:
                cl.append(i)
                placed = True
                break
        if not placed:
            classes.append([i])
    minimal: list[int] = []
    for a, cla in enumerate(classes):
        is_min = True
        for b, clb in enumerate(classes):
            if a == b:
                continue
            if orbit_sets[clb[0]] < orbit_sets[cla[0]]:
                is_min = False
                break
        if is_min:
            minimal.append(a)
    return OrbitReport(map_, entries, report, tuple(tuple(c) for c in classes), tuple(minimal))
