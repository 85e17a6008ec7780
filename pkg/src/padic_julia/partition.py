"""Markov partition of the Julia region and the coding machinery.

The builder works in three stages.  First it certifies the escape and
attracting basins on residue disks and keeps the uncertified remainder as
the Julia region.  Second it explores concretely: the region is cut into
spheres around the critical-orbit points, pieces are split until each one
sits inside a maximal scaling disk and its image is exactly a union of
pieces, and pieces that fall into a certified basin are discarded.  Third
it recognises the surviving pieces as indexed families (centers are
polynomials in p^n, radii affine in n) and re-verifies every family
identity symbolically through valuation profiles, so the final model is
exact for all indices, not just the explored ones.

Coding iterates residues modulo a power of p (two bits of precision per
step are enough for the example map's denominator), and decoding pulls a
target point back through the scaling inverse branches with Newton
iterations on residues.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import ceil, gcd
from typing import Optional, Sequence, Union

from .qp import INF, ProjectivePoint, Rational, rational_valuation, residue
from .disks import Disk, Singleton, contains, disjoint
from .familypoly import Affine, PowerPoly, ValProfile, affine_ge, compose_poly
from .maps import (
    CriticalReport,
    EscapeRule,
    OrbitReport,
    RationalMap,
    UnsupportedMapError,
    critical_orbit_analysis,
    critical_trace_rexp,
    derivative,
    escape_rule,
    evaluate,
    maximal_scaling_disk,
    poly_eval,
    poly_trim,
    rational_critical_points,
    rational_roots,
    scaling_image,
    taylor_recenter,
)
from .shift import (
    ConcreteEdge,
    FamilySpec,
    RangeEdge,
    ShiftRule,
    Symbol,
    TransitionGraph,
    parse_symbol,
)

GREEK_NAMES = ("alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta")


class UndeterminedError(RuntimeError):
    """Horizon or size cap exhausted without a certificate."""


class CompatibilityError(RuntimeError):
    """The covering could not be made compatible; carries the offender."""


# ---------------------------------------------------------------------------
# basins
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttractingDisk:
    disk: Disk
    point: Fraction
    contraction_vexp: int  # |f(x)-q| <= p^-contraction_vexp * |x-q| on the disk


@dataclass(frozen=True)
class BasinInfo:
    prime: int
    escape: Optional[EscapeRule]
    escape_disks: tuple[Disk, ...]
    attracting: tuple[AttractingDisk, ...]
    region: tuple[Disk, ...]  # complement: the Julia region at this level
    level: int

    def in_certified_fatou(self, x: Fraction) -> bool:
        v = rational_valuation(x, self.prime)
        if self.escape is not None and v is not INF and v <= self.escape.vexp_threshold:
            return True
        if any(d.contains_value(x) for d in self.escape_disks):
            return True
        return any(a.disk.contains_value(x) for a in self.attracting)

    def fatou_covers(self, d: Disk) -> bool:
        if self.escape is not None and d.rexp <= 0:
            vc = rational_valuation(d.center, self.prime)
            if vc is not INF and vc <= self.escape.vexp_threshold and vc < d.rexp:
                return True
        if any(contains(e, d) for e in self.escape_disks):
            return True
        return any(contains(a.disk, d) for a in self.attracting)


def rational_fixed_points(map_: RationalMap) -> list[Fraction]:
    """Rational solutions of num(x) = x * den(x)."""
    from .maps import poly_add, poly_mul, poly_scale

    shifted = poly_add(map_.num, poly_scale(poly_mul((Fraction(0), Fraction(1)), map_.den), Fraction(-1)))
    if not poly_trim(shifted):
        raise UnsupportedMapError("identity map")
    return [r for r, _ in rational_roots(poly_trim(shifted))]


def _attracting_certificate(map_: RationalMap, q: Fraction, d: Disk) -> Optional[int]:
    """Non-expansion exponent toward the fixed point q, with f(d) inside d.

    Forward invariance of a disk of spherical diameter < 1 keeps every
    iterate's diameter below 1, which rules out Julia points in d; the
    returned exponent c certifies |f(x)-q| <= p^-c |x-q| on d (c = 0 is
    the 1-Lipschitz case).
    """
    if d.rexp < 1 or not d.contains_value(q):
        return None
    crit_vals = rational_critical_points(map_).finite_values()
    if q in crit_vals:
        trace, m, bmv = critical_trace_rexp(map_, q)
        if d.rexp >= trace:
            c = bmv + (m - 1) * d.rexp
            invariant = bmv + m * d.rexp >= d.rexp
            if c >= 0 and invariant:
                return c
        return None
    sd = maximal_scaling_disk(map_, q)
    if contains(sd.disk, d) and sd.ratio_vexp >= 0:
        return sd.ratio_vexp
    return None


def certify_basins(map_: RationalMap, level: int = 2, chase: int = 6) -> BasinInfo:
    """Classify the residue disks mod p^level into escape / attracting / region.

    A disk is escape-certified when it is inside the leading-term growth
    zone or maps into it in at most `chase` whole-disk steps; attracting
    when it contains a rational attracting fixed point with an exact
    contraction certificate, or maps into such a disk.  Everything else
    is kept in the region.
    """
    p = map_.prime
    esc = escape_rule(map_)
    attracting: list[AttractingDisk] = []
    fixed = rational_fixed_points(map_)
    level_disks = [Disk(p, Fraction(r), level) for r in range(p**level)]
    for q in fixed:
        home = next((d for d in level_disks if d.contains_value(q)), None)
        if home is None:
            continue
        c = _attracting_certificate(map_, q, home)
        if c is not None:
            attracting.append(AttractingDisk(home, q, c))
    escape_disks: list[Disk] = []
    region: list[Disk] = []
    base_attr = list(attracting)

    def disk_escapes(d: Disk) -> bool:
        if esc is None:
            return False
        vc = rational_valuation(d.center, p)
        return vc is not INF and vc <= esc.vexp_threshold and vc < d.rexp

    for d in level_disks:
        if any(a.disk == d for a in base_attr):
            continue
        cur = d
        fate = "region"
        for _ in range(chase):
            if disk_escapes(cur):
                fate = "escape"
                break
            if any(contains(a.disk, cur) for a in base_attr):
                fate = "attracted"
                break
            try:
                sd = maximal_scaling_disk(map_, cur.center)
            except UnsupportedMapError:
                break
            if not contains(sd.disk, cur):
                break
            cur = scaling_image(map_, cur, sd)
        if fate == "escape":
            escape_disks.append(d)
        elif fate == "attracted":
            attracting.append(AttractingDisk(d, next(a.point for a in base_attr if contains(a.disk, cur)), 0))
        else:
            region.append(d)
    return BasinInfo(p, esc, tuple(escape_disks), tuple(attracting), tuple(_merge_region(region)), level)


def _merge_region(disks: list[Disk]) -> list[Disk]:
    cur = set(disks)
    changed = True
    while changed:
        changed = False
        parents: dict[Disk, set[Disk]] = {}
        for d in cur:
            parents.setdefault(Disk(d.prime, d.center, d.rexp - 1), set()).add(d)
        for parent, kids in parents.items():
            from .disks import residue_children

            if len(kids) == parent.prime and kids == set(residue_children(parent)):
                cur -= kids
                cur.add(parent)
                changed = True
                break
    return sorted(cur, key=lambda x: (x.rexp, x.center))


# ---------------------------------------------------------------------------
# Fatou certificates for points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    kind: str  # "escape" | "attracting" | "julia-candidate"
    step: int
    basin_point: Optional[Fraction] = None
    horizon: int = 0


def _clear_denominators(map_: RationalMap) -> tuple[list[int], int, int]:
    """Integer numerator coefficients A_k with map = (sum A_k x^k) / (p^e * odd)."""
    p = map_.prime
    if not map_.is_polynomial:
        raise UnsupportedMapError("residue iteration needs a polynomial map")
    den = map_.den[0]
    lcm = den.denominator
    for c in map_.num:
        lcm = lcm * c.denominator // gcd(lcm, c.denominator)
    scaled = [int(c * lcm) for c in map_.num]
    d_int = int(den * lcm)
    e = 0
    odd = d_int
    while odd % p == 0:
        odd //= p
        e += 1
    return scaled, e, odd


def fatou_certificate(map_: RationalMap, x, horizon: int = 10**6, bit_cap: int = 10**6) -> Certificate:
    """Exact orbit classification of a single point.

    Escape and attraction are certified through the basin machinery;
    an orbit that stays inside the uncertified region for the whole
    (precision-limited) horizon comes back as a julia-candidate, which is
    a valid outcome rather than an error.
    """
    p = map_.prime
    basins = certify_basins(map_)
    if isinstance(x, ProjectivePoint):
        if x.is_infinity:
            return Certificate("escape", 0)
        x = x.value.value
    x = Fraction(x)
    v = rational_valuation(x, p)
    if v is not INF and v < 0:
        # finitely many exact steps until the growth zone certifies escape
        cur = x
        for step in range(0, 64):
            vv = rational_valuation(cur, p)
            if vv is not INF and basins.escape is not None and vv <= basins.escape.vexp_threshold:
                return Certificate("escape", step)
            if vv is INF or vv >= 0:
                x = cur
                break
            cur = map_(cur)
        else:
            return Certificate("julia-candidate", 0, horizon=0)
        if rational_valuation(x, p) is not INF and rational_valuation(x, p) < 0:
            return Certificate("escape", 0)
    A, e, odd = _clear_denominators(map_)
    # precision budget: e bits of valuation lost per step
    K = min(2 * horizon * max(1, e) + basins.level + 8, bit_cap)
    steps_possible = horizon if e == 0 else max(0, (K - basins.level - 8) // e)
    mod = p**K
    r = residue(x, p, K)
    inv_odd = pow(odd, -1, mod)
    cur_r = r
    for step in range(steps_possible + 1):
        rep = Fraction(cur_r % p**basins.level)
        if basins.escape is not None:
            vrep = rational_valuation(Fraction(cur_r), p) if cur_r else INF
            if vrep is not INF and vrep <= basins.escape.vexp_threshold and step > 0:
                return Certificate("escape", step)
        hit = next((a for a in basins.attracting if a.disk.contains_value(rep)), None)
        if hit is not None:
            return Certificate("attracting", step, basin_point=hit.point)
        if any(d.contains_value(rep) for d in basins.escape_disks):
            return Certificate("escape", step + 1)
        if step == steps_possible:
            break
        s = sum(a * pow(cur_r, k, mod) for k, a in enumerate(A)) % mod
        if e and s % p**e != 0:
            # the image left Z_p; only possible outside the region
            return Certificate("escape", step + 1)
        cur_r = (s // p**e) * inv_odd % (mod // p**e)
        mod //= p**e
    return Certificate("julia-candidate", 0, horizon=min(horizon, steps_possible))


# ---------------------------------------------------------------------------
# indexed disk families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiskFamily:
    """Disks c(n) + p^(radius(n)) Z_p for n >= n_min, accumulating at `site`."""

    prime: int
    label: str
    site: Fraction
    center: PowerPoly  # absolute center, polynomial in t = p^n
    radius: Affine
    n_min: int
    scaling: Affine  # v_p of the derivative on the member disks
    scaling_from: int = 1

    def member(self, n: int) -> Disk:
        if n < self.n_min:
            raise ValueError(f"{self.label}: index {n} below n_min={self.n_min}")
        return Disk(self.prime, self.center.at(n), self.radius.at(n))

    def level(self, n: int) -> int:
        v = rational_valuation(self.center.at(n) - self.site, self.prime)
        return v if v is not INF else self.radius.at(n)

    def level_form(self) -> ValProfile:
        return (self.center - PowerPoly.constant(self.prime, self.site)).val_profile()

    def index_of(self, x: Fraction) -> Optional[int]:
        """Solve the index from v(x - site) and verify exactly."""
        v = rational_valuation(x - self.site, self.prime)
        if v is INF:
            return None
        prof = self.level_form()
        if prof.is_infinite:
            return None
        a, b = prof.form.slope, prof.form.intercept
        lo = self.n_min
        # exact candidates below the profile threshold
        for n in range(lo, prof.from_n + 1):
            if self.member(n).contains_value(x):
                return n
        if a > 0 and (v - b) % a == 0:
            n = (v - b) // a
            if n >= max(lo, prof.from_n) and self.member(n).contains_value(x):
                return n
        return None

    def reindexed(self, new_min: int = 1) -> "DiskFamily":
        dn = self.n_min - new_min
        if dn == 0:
            return self
        return DiskFamily(
            self.prime,
            self.label,
            self.site,
            self.center.substitute_index_shift(dn),
            self.radius.shifted(dn),
            new_min,
            self.scaling.shifted(dn),
            max(1, self.scaling_from - dn),
        )


# ---------------------------------------------------------------------------
# concrete exploration
# ---------------------------------------------------------------------------


@dataclass
class _Piece:
    disk: Disk
    site: Optional[Fraction]  # orbit point this piece circles, if any
    alive: bool = True
    fatou: bool = False
    edge: Optional[dict] = None  # {"targets": [Disk...], "fanout_site": q or None}


class _Explorer:
    """Concrete fixpoint: split until every piece is scaling and compatible."""

    def __init__(self, map_: RationalMap, basins: BasinInfo, orbit_points: list[Fraction],
                 probe_levels: int, max_width: int = 12):
        self.map = map_
        self.p = map_.prime
        self.basins = basins
        self.orbit_points = orbit_points
        self.max_level = basins.level + probe_levels
        self.max_width = max_width
        self.pieces: list[_Piece] = []
        self.plain_cells: list[_Piece] = []

    # -- construction ---------------------------------------------------
    def seed(self) -> None:
        for rd in self.basins.region:
            pts = [q for q in self.orbit_points if rd.contains_value(q)]
            if not pts:
                self.plain_cells.append(_Piece(rd, None))
                continue
            if len(pts) > 1:
                raise UnsupportedMapError(
                    "several orbit points share one region disk; raise the region level"
                )
            q = pts[0]
            for j in range(rd.rexp, self.max_level + 1):
                for u in range(1, self.p):
                    c = q + u * Fraction(self.p) ** j
                    self.pieces.append(_Piece(Disk(self.p, c, j + 1), q))

    def _split(self, piece: _Piece) -> list[_Piece]:
        from .disks import residue_children

        if piece.disk.rexp - self._level(piece) > self.max_width:
            raise CompatibilityError(f"piece {piece.disk} refined past width bound")
        piece.alive = False
        kids = [(_Piece(d, piece.site)) for d in residue_children(piece.disk)]
        self.pieces.extend(kids)
        return kids

    def _level(self, piece: _Piece) -> int:
        if piece.site is None:
            return piece.disk.rexp
        v = rational_valuation(piece.disk.center - piece.site, self.p)
        return v if v is not INF else piece.disk.rexp

    # -- the fixpoint -----------------------------------------------------
    def run(self) -> None:
        self.seed()
        for _round in range(200):
            if not self._split_to_scaling():
                if not self._resolve_images():
                    break
        else:
            raise CompatibilityError("covering did not stabilise")
        self._propagate_fatou()

    def _alive(self) -> list[_Piece]:
        return [x for x in self.pieces + self.plain_cells if x.alive and not x.fatou]

    def _split_to_scaling(self) -> bool:
        changed = False
        for piece in list(self._alive()):
            d = piece.disk
            crit_inside = [c for c in rational_critical_points(self.map).finite_values()
                           if d.contains_value(c)]
            if crit_inside:
                self._split_piece(piece)
                changed = True
                continue
            sd = maximal_scaling_disk(self.map, d.center)
            if not contains(sd.disk, d):
                self._split_piece(piece)
                changed = True
        return changed

    def _split_piece(self, piece: _Piece) -> None:
        if piece in self.plain_cells:
            from .disks import residue_children

            piece.alive = False
            self.plain_cells.extend(_Piece(d, None) for d in residue_children(piece.disk))
        else:
            self._split(piece)

    def _resolve_images(self) -> bool:
        """Classify all images; returns True if any split was requested."""
        alive = self._alive()
        alive_disks = {id(x): x.disk for x in alive}
        changed = False
        for piece in alive:
            sd = maximal_scaling_disk(self.map, piece.disk.center)
            img = scaling_image(self.map, piece.disk, sd)
            outcome = self._classify(img, piece, alive)
            if outcome == "split-source":
                self._split_piece(piece)
                changed = True
            elif outcome == "split-target":
                changed = True
            elif outcome == "fatou":
                piece.fatou = True
            # "ok" leaves the piece; edges are recomputed at the end
        return changed

    def _classify(self, img: Disk, src: _Piece, alive: list[_Piece]) -> str:
        if self.basins.fatou_covers(img):
            return "fatou"
        if any(x.fatou and contains(x.disk, img) for x in self.pieces + self.plain_cells):
            return "fatou"
        # images accumulating deeper than the probe horizon are left to the
        # symbolic verification stage
        if img.rexp > self.max_level:
            return "ok"
        for q in self.orbit_points:
            Lq = rational_valuation(img.center - q, self.p)
            if Lq is INF or Lq >= self.max_level - 4:
                return "ok"
        exact = [x for x in alive if x.disk == img]
        if exact:
            return "ok"
        coarser = [x for x in alive if contains(x.disk, img) and x.disk != img]
        if coarser:
            for x in coarser:
                self._split_piece(x)
            return "split-target"
        inside = [x for x in alive if contains(img, x.disk)]
        fatou_inside = self._fatou_overlap(img)
        qs = [q for q in self.orbit_points if img.contains_value(q)]
        if fatou_inside and (inside or qs):
            return "split-source"
        if qs:
            lvl_need = img.rexp
            if lvl_need > self.max_level:
                raise CompatibilityError("fan-out image outruns the probe bound")
            return "ok"  # fan-out; coverage checked during recognition
        if inside:
            # exact union of pieces required
            total = Fraction(0)
            for x in inside:
                total += Fraction(1, self.p ** (x.disk.rexp - img.rexp))
            if total == 1:
                return "ok"
            if img.rexp >= self.max_level:
                return "ok"  # beyond the probe horizon; symbolic stage re-checks
            return "split-source"
        # image matches nothing we know: if it leaves the region entirely the
        # source is Fatou-bound, otherwise split and retry
        if all(disjoint(img, rd) for rd in self.basins.region):
            return "fatou"
        return "split-source"

    def _fatou_overlap(self, img: Disk) -> bool:
        for x in self.pieces + self.plain_cells:
            if x.fatou and (contains(img, x.disk) and not contains(x.disk, img)):
                return True
        for d in self.basins.escape_disks:
            if contains(img, d):
                return True
        for a in self.basins.attracting:
            if contains(img, a.disk):
                return True
        return False

    def _propagate_fatou(self) -> None:
        changed = True
        while changed:
            changed = False
            for piece in self._alive():
                sd = maximal_scaling_disk(self.map, piece.disk.center)
                img = scaling_image(self.map, piece.disk, sd)
                if self.basins.fatou_covers(img):
                    piece.fatou = True
                    changed = True
                    continue
                fat = [x for x in self.pieces + self.plain_cells if x.fatou and contains(x.disk, img)]
                if fat:
                    piece.fatou = True
                    changed = True


# ---------------------------------------------------------------------------
# family recognition
# ---------------------------------------------------------------------------


def _shape_key(piece: _Piece, p: int) -> Optional[tuple]:
    """(site, offset digits, width): constant along one indexed family."""
    if piece.site is None:
        return None
    lvl = rational_valuation(piece.disk.center - piece.site, p)
    if lvl is INF:
        return None
    width = piece.disk.rexp - lvl
    u = (piece.disk.center - piece.site) / Fraction(p) ** lvl
    digs = tuple(residue(u, p, width) // p**i % p for i in range(width))
    return (piece.site, digs, width)


@dataclass(frozen=True)
class _ProtoFamily:
    site: Fraction
    digits: tuple[int, ...]
    width: int
    step: int  # level = step*m + offset
    offset: int
    m_min: int
    m_max: int
    fatou: bool

    def level_at(self, m: int) -> int:
        return self.step * m + self.offset

    def center_poly(self, p: int) -> PowerPoly:
        base = PowerPoly.constant(p, self.site)
        for i, dig in enumerate(self.digits):
            if dig:
                base = base + PowerPoly.monomial(p, dig * Fraction(p) ** (i + self.offset), self.step)
        return base

    def radius_affine(self) -> Affine:
        return Affine(self.step, self.offset + self.width)


def _recognise_families(pieces: list[_Piece], p: int, max_level: int,
                        margin: int = 3) -> tuple[list[_ProtoFamily], list[_Piece]]:
    """Group explored pieces into arithmetic level progressions.

    Pieces deeper than the resolvable horizon (whose images were left to
    the symbolic stage) are dropped: the families recognised below them
    cover those levels once verified.  A group is accepted as a family
    when its levels form a progression that runs to the horizon;
    stragglers stay concrete.
    """
    horizon = max_level - 6
    groups: dict[tuple, list[_Piece]] = {}
    leftovers: list[_Piece] = []
    for piece in pieces:
        key = _shape_key(piece, p)
        if key is None:
            leftovers.append(piece)
            continue
        lvl = rational_valuation(piece.disk.center - piece.site, p)
        if lvl is not INF and lvl > horizon:
            continue
        groups.setdefault(key + (piece.fatou,), []).append(piece)
    families: list[_ProtoFamily] = []
    for key, members in groups.items():
        site, digs, width, fatou = key[0], key[1], key[2], key[3]
        levels = sorted({rational_valuation(x.disk.center - site, p) for x in members})
        if len(levels) < 3:
            leftovers.extend(members)
            continue
        diffs = {b - a for a, b in zip(levels, levels[1:])}
        step = min(diffs)
        if diffs != {step} or levels[-1] < horizon - step - margin:
            leftovers.extend(members)
            continue
        offset = levels[0] % step if step else 0
        m_min = (levels[0] - offset) // step
        m_max = (levels[-1] - offset) // step
        families.append(_ProtoFamily(site, digs, width, step, offset, m_min, m_max, fatou))
    return families, leftovers


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PartitionModel:
    map: RationalMap
    prime: int
    sites: tuple[tuple[str, Fraction], ...]  # (label, point), label also names the singleton
    singletons: tuple[tuple[str, Fraction], ...]
    families: tuple[DiskFamily, ...]
    cells: tuple[tuple[str, Disk], ...]
    cell_scaling: tuple[tuple[str, int], ...]  # label -> derivative vexp on the cell
    julia_region: tuple[Disk, ...]
    basins: BasinInfo
    fatou_families: tuple[DiskFamily, ...]
    graph: TransitionGraph
    subdivision_factor: int = 1

    # -- lookups -----------------------------------------------------------
    def family(self, label: str) -> DiskFamily:
        for f in self.families:
            if f.label == label:
                return f
        raise KeyError(label)

    def singleton_point(self, label: str) -> Fraction:
        for lab, q in self.singletons:
            if lab == label:
                return q
        raise KeyError(label)

    def cell_disk(self, label: str) -> Disk:
        for lab, d in self.cells:
            if lab == label:
                return d
        raise KeyError(label)

    def symbol_set(self, s: Symbol) -> Union[Fraction, Disk]:
        if s.kind == "singleton":
            return self.singleton_point(s.label)
        if s.kind == "member":
            return self.family(s.label).member(s.index)
        return self.cell_disk(s.label)

    def scaling_vexp(self, s: Symbol) -> int:
        if s.kind == "member":
            f = self.family(s.label)
            if s.index < f.scaling_from:
                d = f.member(s.index)
                sd = maximal_scaling_disk(self.map, d.center)
                return sd.ratio_vexp
            return f.scaling.at(s.index)
        if s.kind == "cell":
            for lab, v in self.cell_scaling:
                if lab == s.label:
                    return v
            raise KeyError(s.label)
        raise ValueError("singletons have no scaling ratio")

    def symbol_of(self, x) -> Optional[Symbol]:
        """Exact symbol lookup (None when x is certified or probed Fatou)."""
        if isinstance(x, ProjectivePoint):
            if x.is_infinity:
                return None
            x = x.value.value
        x = Fraction(x)
        for lab, q in self.singletons:
            if x == q:
                return Symbol.singleton(lab)
        for f in self.families:
            n = f.index_of(x)
            if n is not None:
                return Symbol.member(f.label, n)
        for lab, d in self.cells:
            if d.contains_value(x):
                return Symbol.cell(lab)
        return None

    def in_fatou(self, x: Fraction) -> bool:
        if self.basins.in_certified_fatou(x):
            return True
        return any(f.index_of(x) is not None for f in self.fatou_families)


# ---------------------------------------------------------------------------
# symbolic verification
# ---------------------------------------------------------------------------


def _divided_derivative_polys(map_: RationalMap) -> list[tuple[Fraction, ...]]:
    """Coefficient lists of f^(k)/k! for k = 0..deg (polynomial maps)."""
    if not map_.is_polynomial:
        raise UnsupportedMapError("symbolic family verification needs a polynomial map")
    base = tuple(c / map_.den[0] for c in map_.num)
    out = [base]
    cur = base
    k = 1
    from .maps import poly_derive, poly_scale

    while len(cur) > 1:
        cur = poly_scale(poly_derive(cur), Fraction(1, k))
        out.append(cur)
        k += 1
    return out


def _check_profile_ge(poly: PowerPoly, target: Affine, n_lo: int, n_probe_hi: int,
                      what: str) -> None:
    """v_p(poly(p^n)) >= target(n) for all n >= n_lo, or CompatibilityError."""
    prof = poly.val_profile()
    ok, thr = affine_ge(prof, target, n_lo, poly)
    if not ok:
        raise CompatibilityError(f"{what}: valuation slope too small for all n")
    for n in range(n_lo, max(thr, n_lo)):
        v = poly.valuation_at(n)
        if not (v is INF or v >= target.at(n)):
            raise CompatibilityError(f"{what}: fails at n={n}")


def _verify_family_scaling(map_: RationalMap, fam: DiskFamily) -> None:
    """Members sit in maximal scaling disks and the ratio matches `scaling`."""
    dd = _divided_derivative_polys(map_)
    a1 = compose_poly(dd[1], fam.center)
    prof1 = a1.val_profile()
    if prof1.is_infinite:
        raise CompatibilityError(f"{fam.label}: derivative vanishes on the family")
    if (prof1.form.slope, prof1.form.intercept) != (fam.scaling.slope, fam.scaling.intercept):
        raise CompatibilityError(f"{fam.label}: scaling exponent form mismatch")
    for n in range(fam.n_min, max(fam.n_min, prof1.from_n, fam.scaling_from)):
        v = a1.valuation_at(n)
        sd = maximal_scaling_disk(map_, fam.center.at(n))
        if v != sd.ratio_vexp or not contains(sd.disk, fam.member(n)):
            raise CompatibilityError(f"{fam.label}: member n={n} not scaling as recorded")
    # |a_k| r^(k-1) <= |a_1| for all k >= 2, i.e. v(a_k) + (k-1) r(n) >= v(a_1)
    for k in range(2, len(dd)):
        ak = compose_poly(dd[k], fam.center)
        if ak.is_zero:
            continue
        prof_k = ak.val_profile()
        target_slope = fam.scaling.slope - (k - 1) * fam.radius.slope
        target_int = fam.scaling.intercept - (k - 1) * fam.radius.intercept
        shifted = Affine(target_slope, target_int)
        ok, thr = affine_ge(prof_k, shifted, fam.n_min, fam.n_min)
        if not ok:
            raise CompatibilityError(f"{fam.label}: coefficient k={k} breaks the scaling bound")
        for n in range(fam.n_min, max(thr, fam.n_min)):
            v = ak.valuation_at(n)
            if not (v is INF or v + (k - 1) * fam.radius.at(n) >= a1.valuation_at(n)):
                raise CompatibilityError(f"{fam.label}: scaling bound fails at n={n}, k={k}")


def _verify_shift_rule(map_: RationalMap, src: DiskFamily, dst: DiskFamily,
                       rule: ShiftRule) -> None:
    """f(src(n)) == dst(n+shift) exactly, for every n >= rule.n_from."""
    coeffs = tuple(c / map_.den[0] for c in map_.num)
    ic = compose_poly(coeffs, src.center)
    r_img = Affine(src.radius.slope + src.scaling.slope,
                   src.radius.intercept + src.scaling.intercept)
    r_dst = Affine(dst.radius.slope, dst.radius.intercept + dst.radius.slope * rule.shift)
    if (r_img.slope, r_img.intercept) != (r_dst.slope, r_dst.intercept):
        raise CompatibilityError(
            f"{src.label}->{dst.label}: image radius {r_img} != target radius {r_dst}")
    delta = ic - dst.center.substitute_index_shift(rule.shift)
    _check_profile_ge(delta, r_img, rule.n_from, rule.n_from + 4,
                      f"{src.label}->{dst.label}: center congruence")
    # scaling exponents must be affine from n_from on
    for n in range(rule.n_from, rule.n_from + 2):
        if n < src.scaling_from:
            raise CompatibilityError(f"{src.label}: rule starts before scaling form is exact")


def _verify_concrete_edge(map_: RationalMap, model_sets, e: ConcreteEdge, model) -> None:
    src_set = model_sets(e.src)
    if isinstance(src_set, Fraction):
        img_pt = map_(src_set)
        dst = model_sets(e.dst)
        if isinstance(dst, Fraction):
            if img_pt != dst:
                raise CompatibilityError(f"{e.src}->{e.dst}: point image mismatch")
        else:
            if not dst.contains_value(img_pt):
                raise CompatibilityError(f"{e.src}->{e.dst}: point lands outside")
        return
    sd = maximal_scaling_disk(map_, src_set.center)
    if not contains(sd.disk, src_set):
        raise CompatibilityError(f"{e.src}: concrete cell not scaling")
    img = scaling_image(map_, src_set, sd)
    dst = model_sets(e.dst)
    if isinstance(dst, Fraction):
        # singleton target inside a fan-out image
        if not img.contains_value(dst):
            raise CompatibilityError(f"{e.src}->{e.dst}: point target outside the image")
        return
    if not contains(img, dst):
        raise CompatibilityError(f"{e.src}->{e.dst}: declared target not inside the image")


def _verify_fanout_cover(model: "PartitionModel", src: Symbol, img: Disk, q: Fraction) -> None:
    """img must equal {q} plus the site's family members of level >= img.rexp."""
    p = model.prime
    if not img.contains_value(q):
        raise CompatibilityError(f"{src}: fan-out image misses its accumulation point")
    fams = [f for f in model.families if f.site == q]
    if not fams:
        raise CompatibilityError(f"{src}: fan-out site has no families")
    # periodicity of the level pattern: checking one full period of levels
    period = 1
    for f in fams:
        period = period * f.level_form().form.slope // gcd(period, f.level_form().form.slope)
    for j in range(img.rexp, img.rexp + 2 * period + 2):
        covered = Fraction(0)
        seen: list[Disk] = []
        for f in fams:
            prof = f.level_form()
            a, b = prof.form.slope, prof.form.intercept
            if (j - b) % a:
                continue
            m = (j - b) // a
            if m < f.n_min:
                raise CompatibilityError(f"{src}: fan-out reaches below {f.label}'s first index")
            if m < prof.from_n:
                if f.level(m) != j:
                    continue
            d = f.member(m)
            if any(not disjoint(d, other) for other in seen):
                raise CompatibilityError(f"{src}: fan-out families overlap at level {j}")
            seen.append(d)
            covered += Fraction(1, p ** (d.rexp - (j + 1)))
        # the level-j sphere around q is p-1 cosets of radius exponent j+1
        if covered != p - 1:
            raise CompatibilityError(
                f"{src}: level {j} around {q} covered with weight {covered}, expected {p - 1}")
        # also make sure no Fatou family lives at this level
        for f in model.fatou_families:
            if f.site != q:
                continue
            prof = f.level_form()
            a, b = prof.form.slope, prof.form.intercept
            if a and (j - b) % a == 0 and (j - b) // a >= f.n_min:
                raise CompatibilityError(f"{src}: fan-out level {j} intersects a Fatou family")


def verify_model(model: PartitionModel) -> None:
    """Re-derive every edge of the model exactly; raise on any mismatch."""
    g = model.graph
    for fam in model.families:
        _verify_family_scaling(model.map, fam)
    for rule in g.shift_rules:
        _verify_shift_rule(model.map, model.family(rule.src_label), model.family(rule.dst_label), rule)
    for e in g.concrete_edges:
        _verify_concrete_edge(model.map, model.symbol_set, e, model)
    # grouped exactness: concrete disk sources must cover their image exactly
    by_src: dict[Symbol, list[Symbol]] = {}
    for e in g.concrete_edges:
        by_src.setdefault(e.src, []).append(e.dst)
    fan_by_src: dict[Symbol, list[RangeEdge]] = {}
    for e in g.range_edges:
        fan_by_src.setdefault(e.src, []).append(e)
    for src, dsts in by_src.items():
        sset = model.symbol_set(src)
        if isinstance(sset, Fraction):
            continue
        sd = maximal_scaling_disk(model.map, sset.center)
        img = scaling_image(model.map, sset, sd)
        fans = fan_by_src.get(src, [])
        if fans:
            q = next(pt for lab, pt in model.singletons if img.contains_value(pt))
            if Symbol.singleton(next(lab for lab, pt in model.singletons if pt == q)) not in dsts:
                raise CompatibilityError(f"{src}: fan-out misses the singleton target")
            _verify_fanout_cover(model, src, img, q)
            continue
        total = Fraction(0)
        for t in dsts:
            tset = model.symbol_set(t)
            if isinstance(tset, Fraction):
                raise CompatibilityError(f"{src}: point target without fan-out")
            if not contains(img, tset):
                raise CompatibilityError(f"{src}->{t}: target outside image")
            total += Fraction(1, model.prime ** (tset.rexp - img.rexp))
        if total != 1:
            raise CompatibilityError(f"{src}: image covered with weight {total}")


# ---------------------------------------------------------------------------
# building the model
# ---------------------------------------------------------------------------


def _map_power(map_: RationalMap, n: int) -> RationalMap:
    from .maps import poly_add, poly_mul, poly_scale

    if not map_.is_polynomial:
        raise UnsupportedMapError("iterate composition implemented for polynomials only")
    cur = tuple(c / map_.den[0] for c in map_.num)
    base = cur
    for _ in range(n - 1):
        acc: tuple = (Fraction(0),)
        for a in reversed(base):
            acc = poly_add(poly_mul(acc, cur), (a,))
        cur2 = acc
        cur = cur2
    return RationalMap(map_.prime, cur)


def _site_labels(orbit_chains: list[list[Fraction]]) -> list[tuple[str, Fraction, int]]:
    """Assign Greek letters by distance from the landed fixed point."""
    by_point: dict[Fraction, int] = {}
    for chain in orbit_chains:
        # chain = [c, f(c), ..., fixed]; distance = steps remaining to the end
        L = len(chain)
        for i, q in enumerate(chain):
            dist = L - 1 - i
            if q not in by_point or dist < by_point[q]:
                by_point[q] = dist
    used: dict[str, int] = {}
    out = []
    for q, dist in sorted(by_point.items(), key=lambda kv: (kv[1], kv[0])):
        base = GREEK_NAMES[dist] if dist < len(GREEK_NAMES) else f"site{dist}"
        label = base if base not in used else f"{base}{used.get(base, 0) + 1}"
        used[base] = used.get(base, 0) + 1
        out.append((label, q, dist))
    return out


def _family_letter(site_label: str, rank: int) -> str:
    return site_label + "'" * rank


@dataclass
class _Draft:
    """Mutable bag passed through the assembly steps."""

    families: list[DiskFamily]
    fatou_families: list[DiskFamily]
    cells: list[tuple[str, Disk]]
    cell_scaling: list[tuple[str, int]]
    singletons: list[tuple[str, Fraction]]
    proto_index: dict[str, _ProtoFamily]


def _assemble_families(map_: RationalMap, protos: list[_ProtoFamily],
                       sites: list[tuple[str, Fraction, int]]) -> _Draft:
    p = map_.prime
    site_label = {q: lab for lab, q, _ in sites}
    by_site: dict[Fraction, list[_ProtoFamily]] = {}
    for pf in protos:
        by_site.setdefault(pf.site, []).append(pf)
    families: list[DiskFamily] = []
    fatou_families: list[DiskFamily] = []
    proto_index: dict[str, _ProtoFamily] = {}
    for q, pfs in sorted(by_site.items()):
        alive = sorted([x for x in pfs if not x.fatou],
                       key=lambda f: (f.step, f.offset, f.width, f.digits))
        dead = sorted([x for x in pfs if x.fatou],
                      key=lambda f: (f.step, f.offset, f.width, f.digits))
        for rank, pf in enumerate(alive):
            label = _family_letter(site_label[q], rank)
            fam = _proto_to_family(map_, pf, label)
            families.append(fam)
            proto_index[label] = pf
        for rank, pf in enumerate(dead):
            label = f"fatou:{site_label[q]}:{rank}"
            fatou_families.append(_proto_to_family(map_, pf, label, need_scaling=False))
    return _Draft(families, fatou_families, [], [], [], proto_index)


def _proto_to_family(map_: RationalMap, pf: _ProtoFamily, label: str,
                     need_scaling: bool = True) -> DiskFamily:
    p = map_.prime
    center = pf.center_poly(p)
    radius = pf.radius_affine()
    if need_scaling:
        dd = _divided_derivative_polys(map_)
        a1 = compose_poly(dd[1], center)
        prof = a1.val_profile()
        if prof.is_infinite:
            raise CompatibilityError(f"{label}: derivative vanishes identically")
        scaling = prof.form
        scaling_from = prof.from_n
    else:
        scaling = Affine(0, 0)
        scaling_from = pf.m_min
    return DiskFamily(p, label, pf.site, center, radius, pf.m_min, scaling, scaling_from)


def _match_symbol_exact(model_like, img: Disk) -> Optional[Symbol]:
    """Symbol whose set equals img exactly."""
    s = model_like.symbol_of(img.center)
    if s is None or s.kind == "singleton":
        return None
    tset = model_like.symbol_set(s)
    if isinstance(tset, Disk) and tset == img:
        return s
    return None


def _resolve_image_targets(model_like, img: Disk) -> tuple[list[Symbol], list[tuple[str, int]], Optional[Fraction]]:
    """img as an exact union of symbols: (concrete, family ranges, fan-out site).

    Either a single exact symbol, or a fan-out {q} + all site families from
    the level img.rexp on, or a finite union of symbols covering img with
    total weight one.  Raises when img cannot be written that way.
    """
    p = model_like.prime
    exact = _match_symbol_exact(model_like, img)
    if exact is not None:
        return [exact], [], None
    inside_singletons = [(lab, q) for lab, q in model_like.singletons if img.contains_value(q)]
    if inside_singletons:
        if len(inside_singletons) > 1:
            raise CompatibilityError(f"image {img} spans several orbit points")
        lab, q = inside_singletons[0]
        rngs: list[tuple[str, int]] = []
        for f in model_like.families:
            if f.site != q:
                continue
            prof = f.level_form()
            a, b = prof.form.slope, prof.form.intercept
            n0 = max(f.n_min, ceil(Fraction(img.rexp - b, a)))
            rngs.append((f.label, n0))
        if not rngs:
            raise CompatibilityError(f"image {img} needs families around {q}")
        return [Symbol.singleton(lab)], rngs, q
    # finite union: without an orbit point inside, every point of img has a
    # fixed level around each site, so only finitely many members qualify
    targets: list[Symbol] = []
    total = Fraction(0)
    for clab, d in model_like.cells:
        if contains(img, d):
            targets.append(Symbol.cell(clab))
            total += Fraction(1, p ** (d.rexp - img.rexp))
    for f in model_like.families:
        prof = f.level_form()
        a, b = prof.form.slope, prof.form.intercept
        L = rational_valuation(img.center - f.site, p)
        if L is INF or L >= img.rexp:
            continue
        candidates = set(range(f.n_min, prof.from_n + 1))
        if a > 0 and (L - b) % a == 0:
            candidates.add((L - b) // a)
        for n in sorted(candidates):
            if n < f.n_min:
                continue
            d = f.member(n)
            if contains(img, d):
                targets.append(Symbol.member(f.label, n))
                total += Fraction(1, p ** (d.rexp - img.rexp))
    if total == 1:
        return targets, [], None
    raise CompatibilityError(f"image {img} covered with weight {total}, not 1")


def _fit_shift_rule(outcomes: dict[int, tuple[str, int]]) -> Optional[tuple[str, int, int]]:
    """(dst_label, shift, n_from) consistent with the tail of the outcomes."""
    ms = sorted(outcomes)
    if len(ms) < 3:
        return None
    glabel, mp = outcomes[ms[-1]]
    k = mp - ms[-1]
    n_from = ms[-1]
    for m in reversed(ms):
        if outcomes.get(m) == (glabel, m + k):
            n_from = m
        else:
            break
    if ms[-1] - n_from < 2:
        return None
    return glabel, k, n_from


def build_partition(
    map_: RationalMap,
    report: Optional[OrbitReport] = None,
    *,
    level: int = 2,
    probe_levels: int = 26,
    horizon: int = 10**4,
) -> PartitionModel:
    """Construct and verify the compatible covering of the Julia region.

    Requires every Julia critical point to be rational with an eventually
    periodic orbit; orbits landing on longer repelling cycles are reduced
    through the corresponding iterate of the map, with the subdivision
    factor recorded on the model.  The returned model has passed
    verify_model, so each edge identity holds for every family index.
    """
    p = map_.prime
    if map_.degree < 2:
        raise UnsupportedMapError("dynamics needs degree >= 2")
    if report is None:
        report = critical_orbit_analysis(map_, horizon=horizon)
    if report.critical_report.missing:
        from .maps import unaccounted_critical_roots

        for val, count in unaccounted_critical_roots(map_):
            if val >= 0 and val.denominator == 1:
                raise UnsupportedMapError(
                    "a critical point outside Q may lie in Z_p "
                    f"(valuation {val}); the covering cannot be built exactly")
    if any(e.status == "undetermined" for e in report.entries):
        raise UndeterminedError("critical orbit classification hit the horizon")
    julia = report.julia_entries()
    periods = sorted({e.period for e in julia})
    if any(q > 1 for q in periods):
        n = 1
        for q in periods:
            n = n * q // gcd(n, q)
        if map_.degree**n > 800:
            raise UnsupportedMapError(f"iterate degree {map_.degree}**{n} too large to analyse")
        power = _map_power(map_, n)
        sub = build_partition(power, level=level, probe_levels=probe_levels, horizon=horizon)
        return replace(sub, subdivision_factor=n)
    basins = certify_basins(map_, level)
    if not basins.region:
        return PartitionModel(map_, p, (), (), (), (), (), (), basins, (), TransitionGraph(), 1)
    chains = [[pt.value.value for pt in e.orbit if not pt.is_infinity] for e in julia]
    sites = _site_labels(chains)
    orbit_points = [q for _, q, _ in sites]
    ex = _Explorer(map_, basins, orbit_points, probe_levels)
    ex.run()
    site_alive = [x for x in ex.pieces if x.alive and not x.fatou]
    site_fatou = [x for x in ex.pieces if x.alive and x.fatou]
    plain_alive = [x for x in ex.plain_cells if x.alive and not x.fatou]
    plain_fatou = [x for x in ex.plain_cells if x.alive and x.fatou]
    protos, leftovers = _recognise_families(site_alive + site_fatou, p, ex.max_level)
    bad = [x for x in leftovers if not x.fatou and x.disk.rexp > basins.level + 8]
    if bad:
        raise CompatibilityError(f"unrecognised deep structure at {bad[0].disk}")
    draft = _assemble_families(map_, protos, sites)
    cells: list[tuple[str, Disk]] = []
    cell_scaling: list[tuple[str, int]] = []
    for i, piece in enumerate(plain_alive + [x for x in leftovers if not x.fatou]):
        lab = f"u{i}"
        sd = maximal_scaling_disk(map_, piece.disk.center)
        cells.append((lab, piece.disk))
        cell_scaling.append((lab, sd.ratio_vexp))
    singletons = [(lab, q) for lab, q, _ in sites]
    proto_model = PartitionModel(
        map_, p, tuple((lab, q) for lab, q, _ in sites), tuple(singletons),
        tuple(draft.families), tuple(cells), tuple(cell_scaling),
        basins.region, basins, tuple(draft.fatou_families), TransitionGraph(), 1)

    concrete_edges: list[ConcreteEdge] = []
    range_edges: list[RangeEdge] = []
    shift_rules: list[ShiftRule] = []

    def add_resolution(src: Symbol, img: Disk) -> None:
        targets, ranges, site_pt = _resolve_image_targets(proto_model, img)
        for t in targets:
            concrete_edges.append(ConcreteEdge(src, t))
        for lab, n0 in ranges:
            range_edges.append(RangeEdge(src, lab, n0))

    for lab, q in singletons:
        y = evaluate(map_, q)
        if y.is_infinity:
            raise CompatibilityError(f"orbit point {q} maps to infinity")
        t = proto_model.symbol_of(y.value.value)
        if t is None:
            raise CompatibilityError(f"orbit point {q} leaves the covering")
        concrete_edges.append(ConcreteEdge(Symbol.singleton(lab), t))

    for fam in draft.families:
        pf = draft.proto_index[fam.label]
        outcomes: dict[int, tuple[str, int]] = {}
        odd_members: dict[int, Disk] = {}
        for m in range(fam.n_min, pf.m_max + 1):
            d = fam.member(m)
            sd = maximal_scaling_disk(map_, d.center)
            if not contains(sd.disk, d):
                raise CompatibilityError(f"{fam.label}({m}) not inside its scaling disk")
            img = scaling_image(map_, d, sd)
            exact = _match_symbol_exact(proto_model, img)
            if exact is not None and exact.kind == "member":
                outcomes[m] = (exact.label, exact.index)
            else:
                odd_members[m] = img
        fit = _fit_shift_rule(outcomes)
        if fit is None:
            raise CompatibilityError(f"{fam.label}: no stable successor rule")
        glabel, k, n_from = fit
        shift_rules.append(ShiftRule(fam.label, glabel, k, n_from))
        for m in sorted(outcomes):
            if m < n_from:
                concrete_edges.append(
                    ConcreteEdge(Symbol.member(fam.label, m), Symbol.member(outcomes[m][0], outcomes[m][1])))
        for m, img in sorted(odd_members.items()):
            if m >= n_from:
                raise CompatibilityError(f"{fam.label}({m}): unresolved image inside the rule range")
            add_resolution(Symbol.member(fam.label, m), img)

    for lab, d in cells:
        sd = maximal_scaling_disk(map_, d.center)
        if not contains(sd.disk, d):
            raise CompatibilityError(f"cell {lab} not inside its scaling disk")
        add_resolution(Symbol.cell(lab), scaling_image(map_, d, sd))

    # reindex every family so indices start at 1
    offset = {f.label: f.n_min - 1 for f in draft.families}
    for f in draft.fatou_families:
        offset[f.label] = f.n_min - 1
    new_families = tuple(f.reindexed(1) for f in draft.families)
    new_fatou = tuple(f.reindexed(1) for f in draft.fatou_families)

    def remap_symbol(s: Symbol) -> Symbol:
        if s.kind == "member":
            return Symbol.member(s.label, s.index - offset[s.label])
        return s

    new_concrete = tuple(ConcreteEdge(remap_symbol(e.src), remap_symbol(e.dst)) for e in concrete_edges)
    new_ranges = tuple(
        RangeEdge(remap_symbol(e.src), e.dst_label, e.n_from - offset[e.dst_label]) for e in range_edges)
    new_rules = tuple(
        ShiftRule(r.src_label, r.dst_label, r.shift + offset[r.src_label] - offset[r.dst_label],
                  r.n_from - offset[r.src_label])
        for r in shift_rules)
    graph = TransitionGraph(
        families=tuple(FamilySpec(f.label, 1) for f in new_families),
        symbols=tuple([Symbol.singleton(lab) for lab, _ in singletons] + [Symbol.cell(lab) for lab, _ in cells]),
        concrete_edges=new_concrete,
        shift_rules=new_rules,
        range_edges=new_ranges,
    )
    model = PartitionModel(
        map_, p, tuple((lab, q) for lab, q, _ in sites), tuple(singletons),
        new_families, tuple(cells), tuple(cell_scaling),
        basins.region, basins, new_fatou, graph, 1)
    verify_model(model)
    return model


# ---------------------------------------------------------------------------
# coding
# ---------------------------------------------------------------------------


class FatouEscapeError(RuntimeError):
    """The point left the Julia covering; carries the escape step."""

    def __init__(self, step: int):
        super().__init__(f"orbit leaves the Julia covering at step {step}")
        self.step = step


class InsufficientWordError(ValueError):
    """The word is too short for the requested precision."""

    def __init__(self, achievable: int, requested: int):
        super().__init__(f"word reaches precision exponent {achievable} < requested {requested}")
        self.achievable = achievable
        self.requested = requested


@dataclass(frozen=True)
class CodeSequence:
    symbols: tuple[Symbol, ...]
    horizon: int

    def __str__(self):
        return " ".join(str(s) for s in self.symbols)


class _PrecisionLoss(RuntimeError):
    pass


def _vint_p(r: int, p: int):
    if r == 0:
        return INF
    v = 0
    while r % p == 0:
        r //= p
        v += 1
    return v


def _symbol_of_residue(model: PartitionModel, r: int, K: int, guard: int = 8) -> Optional[Symbol]:
    """Symbol lookup from a residue mod p^K; raises _PrecisionLoss when the
    residue cannot distinguish the candidates."""
    p = model.prime
    mod = p**K
    r %= mod
    for lab, q in model.singletons:
        rq = residue(q, p, K)
        if r == rq:
            raise _PrecisionLoss(f"residue matches singleton {lab} to full precision")
        v = _vint_p((r - rq) % mod, p)
        if v is not INF and v >= K - guard:
            raise _PrecisionLoss(f"residue too close to singleton {lab}")
    for f in model.families:
        rq = residue(f.site, p, K)
        v = _vint_p((r - rq) % mod, p)
        if v is INF or v >= K - guard:
            raise _PrecisionLoss(f"residue too close to site {f.site}")
        prof = f.level_form()
        a, b = prof.form.slope, prof.form.intercept
        candidates = set(range(f.n_min, prof.from_n + 1))
        if a > 0 and (v - b) % a == 0:
            candidates.add((v - b) // a)
        for n in sorted(candidates):
            if n < f.n_min:
                continue
            rad = f.radius.at(n)
            if rad + guard > K:
                raise _PrecisionLoss(f"family {f.label} needs precision {rad + guard} > {K}")
            rc = residue(f.center.at(n), p, K)
            if _vint_p((r - rc) % mod, p) >= rad:
                return Symbol.member(f.label, n)
    for lab, d in model.cells:
        if d.rexp + guard > K:
            raise _PrecisionLoss(f"cell {lab} needs more precision")
        rc = residue(d.center, p, K)
        if _vint_p((r - rc) % mod, p) >= d.rexp:
            return Symbol.cell(lab)
    return None


def code_point(model: PartitionModel, x, length: int, bit_cap: int = 10**6) -> CodeSequence:
    """The first `length` symbols of the itinerary of x.

    Iterates exactly while the rational stays small, then switches to
    residue arithmetic with enough precision for the remaining symbol
    lookups (retrying with more bits when a lookup is ambiguous).  A point
    that leaves the covering raises FatouEscapeError with the step.
    """
    p = model.prime
    if isinstance(x, ProjectivePoint):
        if x.is_infinity:
            raise FatouEscapeError(0)
        x = x.value.value
    x = Fraction(x)
    v = rational_valuation(x, p)
    if v is not INF and v < 0:
        raise FatouEscapeError(0)
    A, e, odd = _clear_denominators(model.map)
    out: list[Symbol] = []
    exact_cap = 1 << 14
    cur: Optional[Fraction] = x
    step = 0
    while cur is not None and step < length:
        if cur.numerator.bit_length() + cur.denominator.bit_length() > exact_cap:
            break
        s = model.symbol_of(cur)
        if s is None:
            raise FatouEscapeError(step)
        out.append(s)
        step += 1
        cur = model.map(cur)
        if rational_valuation(cur, p) is not INF and rational_valuation(cur, p) < 0:
            if step < length:
                raise FatouEscapeError(step)
            cur = None
    if step >= length:
        return CodeSequence(tuple(out[:length]), length)
    # residue phase for the remaining steps
    remaining = length - step
    K = 2 * (remaining + 8) + e * remaining + 32
    while True:
        if K > bit_cap:
            raise UndeterminedError("precision cap exceeded while coding")
        try:
            syms = list(out)
            mod = p**K
            r = residue(cur, p, K)
            inv_odd = pow(odd, -1, mod)
            Kc = K
            for j in range(remaining):
                s = _symbol_of_residue(model, r, Kc)
                if s is None:
                    raise FatouEscapeError(step + j)
                syms.append(s)
                if j == remaining - 1:
                    break
                acc = sum(a * pow(r, k, p**Kc) for k, a in enumerate(A)) % (p**Kc)
                if e and acc % p**e != 0:
                    raise FatouEscapeError(step + j + 1)
                Kc -= e
                r = (acc // p**e) * inv_odd % (p**Kc)
            return CodeSequence(tuple(syms), length)
        except _PrecisionLoss:
            K *= 2


@dataclass(frozen=True)
class WordSpec:
    """An admissible word given as a prefix plus a periodic tail, or a
    prefix ending in a singleton (whose forced orbit extends it)."""

    prefix: tuple[Symbol, ...] = ()
    period: tuple[Symbol, ...] = ()

    def symbol_at(self, j: int) -> Symbol:
        if j < len(self.prefix):
            return self.prefix[j]
        if self.period:
            return self.period[(j - len(self.prefix)) % len(self.period)]
        raise IndexError(j)

    @property
    def finite_length(self) -> Optional[int]:
        return None if self.period else len(self.prefix)


class InadmissibleWordError(ValueError):
    pass


def _check_word_admissible(model: PartitionModel, word: WordSpec) -> None:
    g = model.graph
    seq = list(word.prefix) + list(word.period) * 2
    for a, b in zip(seq, seq[1:]):
        if not g.has_symbol(a) or not g.has_symbol(b) or not g.successors(a).admits(b):
            raise InadmissibleWordError(f"pair {a} -> {b} is not admissible")
    if word.period:
        last, first = word.period[-1], word.period[0]
        if not g.successors(last).admits(first):
            raise InadmissibleWordError(f"period wrap {last} -> {first} is not admissible")


def _newton_pullback(model: PartitionModel, sym: Symbol, y_num: int, y_den_odd: int,
                     K: int) -> int:
    """Residue mod p^K of the x in set(sym) with f(x) = y (y = y_num/odd)."""
    p = model.prime
    A, e, odd_map = _clear_denominators(model.map)
    d = model.symbol_set(sym)
    assert isinstance(d, Disk)
    s = model.scaling_vexp(sym)
    big = K + max(0, s) + e + 48
    mod = p**big
    y = y_num * pow(y_den_odd, -1, mod) % mod
    # g(z) = odd_map * p^e * (f(z) - y) has integer coefficients
    coeff = [a % mod for a in A]
    coeff[0] = (coeff[0] - (odd_map * p**e % mod) * y) % mod

    def g(z: int) -> int:
        acc = 0
        for a in reversed(coeff):
            acc = (acc * z + a) % mod
        return acc

    dcoeff = [(k * a) % mod for k, a in enumerate(coeff)][1:]

    def gp(z: int) -> int:
        acc = 0
        for a in reversed(dcoeff):
            acc = (acc * z + a) % mod
        return acc

    z = residue(d.center, p, big)
    vgp = _vint_p(gp(z), p)
    if vgp is INF or vgp > big // 2:
        raise UndeterminedError("derivative valuation too large in pullback")
    target = K + vgp
    for _ in range(64):
        gz = g(z)
        vg = _vint_p(gz, p)
        if vg is INF or vg >= target:
            break
        unit = gp(z) // p**vgp
        z = (z - (gz // p**vgp) * pow(unit, -1, mod)) % mod
    else:
        raise UndeterminedError("pullback Newton did not converge")
    if not d.contains_value(Fraction(z % p**min(K, big))):
        # the canonical residue may stick out of the disk only through the
        # high digits; verify through the center instead
        rc = residue(d.center, p, min(K, d.rexp + 8))
        if _vint_p((z - rc) % p**min(K, d.rexp + 8), p) < d.rexp:
            raise CompatibilityError(f"pullback left {sym}")
    return z % p**K


def decode_word(model: PartitionModel, word: WordSpec, precision_exp: int):
    """The point whose itinerary is `word`, to precision p^-precision_exp.

    Periodic words pull the final cell back through the scaling inverse
    branches until the nested disk is small enough; words hitting a
    singleton resolve exactly from that point backwards.  Returns
    (PadicNumber representative, achieved precision exponent).
    """
    from .qp import PadicNumber

    p = model.prime
    _check_word_admissible(model, word)
    seq_len_cap = 100000
    # find the first singleton, if any
    sing_pos: Optional[int] = None
    probe = list(word.prefix) + list(word.period)
    for j in range(len(probe)):
        if word.symbol_at(j).kind == "singleton":
            sing_pos = j
            break
    if sing_pos is not None:
        if sing_pos == 0:
            q = model.singleton_point(word.symbol_at(0).label)
            return PadicNumber(q, p), precision_exp
        T = sing_pos
        N = precision_exp
        q = model.singleton_point(word.symbol_at(T).label)
        if q.denominator % p == 0:
            raise InadmissibleWordError("singleton outside Z_p")
        width = N + sum(abs(model.scaling_vexp(word.symbol_at(j))) for j in range(T)) + 16
        ynum, yodd = q.numerator, q.denominator
        z = 0
        for j in range(T - 1, -1, -1):
            z = _newton_pullback(model, word.symbol_at(j), ynum, yodd, width)
            ynum, yodd = z, 1
        return PadicNumber(Fraction(z % p**N), p), N
    if word.finite_length is not None:
        # finite word without singleton: precision limited by the prefix
        T = word.finite_length - 1
        rexp = _set_rexp(model, word.symbol_at(T))
        for j in range(T - 1, -1, -1):
            rexp -= model.scaling_vexp(word.symbol_at(j))
        if rexp < precision_exp:
            raise InsufficientWordError(rexp, precision_exp)
        return _decode_pullback(model, word, T, precision_exp)
    # periodic: extend until the projected precision is enough
    T = len(word.prefix) + len(word.period)
    best = None
    for _ in range(seq_len_cap):
        rexp = _set_rexp(model, word.symbol_at(T))
        for j in range(T - 1, -1, -1):
            rexp -= model.scaling_vexp(word.symbol_at(j))
        if rexp >= precision_exp:
            best = T
            break
        T += len(word.period)
    if best is None:
        raise UndeterminedError("word never reaches the requested precision (nonexpanding)")
    return _decode_pullback(model, word, best, precision_exp)


def _set_rexp(model: PartitionModel, s: Symbol) -> int:
    d = model.symbol_set(s)
    if isinstance(d, Fraction):
        raise InadmissibleWordError("unexpected singleton")
    return d.rexp


def _decode_pullback(model: PartitionModel, word: WordSpec, T: int, N: int):
    from .qp import PadicNumber

    p = model.prime
    d = model.symbol_set(word.symbol_at(T))
    width = N + sum(abs(model.scaling_vexp(word.symbol_at(j))) for j in range(T)) + 32
    ynum = residue(d.center, p, width)
    yodd = 1
    z = ynum
    for j in range(T - 1, -1, -1):
        z = _newton_pullback(model, word.symbol_at(j), ynum, yodd, width)
        ynum, yodd = z, 1
    return PadicNumber(Fraction(z % p**N), p), N


# ---------------------------------------------------------------------------
# Julia residues (outer approximation)
# ---------------------------------------------------------------------------


def julia_residues(model: PartitionModel, level: int) -> list[Disk]:
    """Residue disks mod p^level surviving `level` region pullbacks.

    A disk survives when some nested chain of refinements keeps every
    iterate's piece meeting the Julia region for `level` steps; the
    result is an outer approximation of the Julia set at scale p^-level.
    """
    p = model.prime
    region = model.julia_region

    def meets_region(d: Disk) -> bool:
        return any(not disjoint(d, rd) for rd in region)

    crit_vals = rational_critical_points(model.map).finite_values()

    def alive(d: Disk, depth: int, width: int) -> bool:
        if not meets_region(d):
            return False
        if depth == 0:
            return True
        if width > 14:
            return True  # conservatively keep: outer approximation
        if any(d.contains_value(c) for c in crit_vals):
            from .disks import residue_children

            return any(alive(ch, depth, width + 1) for ch in residue_children(d))
        sd = maximal_scaling_disk(model.map, d.center)
        if not contains(sd.disk, d):
            from .disks import residue_children

            return any(alive(ch, depth, width + 1) for ch in residue_children(d))
        return alive(scaling_image(model.map, d, sd), depth - 1, 0)

    if level == 0:
        return [Disk(p, Fraction(0), 0)]
    out = []
    for r in range(p**level):
        d = Disk(p, Fraction(r), level)
        if alive(d, level, 0):
            out.append(d)
    return out
