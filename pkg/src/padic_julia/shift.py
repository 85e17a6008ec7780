"""Countable-state Markov shifts presented by structured transition graphs.

The alphabet mixes concrete symbols (singletons, isolated disks) with
indexed families; edges are either concrete, affine index shifts
(family n -> family n+k for n >= n0), or fan-outs onto a co-finite index
range.  These shapes keep every first-return enumeration finite: along a
path of length L the family index can move by at most L times the largest
shift plus the largest range offset.

Entropy comes from the first-return generating function G(z) = sum
delta(n) z^n at a base symbol: the root R of 1 - G in (0,1) is isolated
by bisection in exact rational arithmetic, and h = -log R is only read
out in floating point at the very end.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Symbol:
    """One state: a singleton point, an indexed family member, or a disk."""

    kind: str  # "singleton" | "member" | "cell"
    label: str
    index: Optional[int] = None

    def __post_init__(self):
        if self.kind == "member" and self.index is None:
            raise ValueError("family member needs an index")
        if self.kind in ("singleton", "cell") and self.index is not None:
            raise ValueError(f"{self.kind} symbol carries no index")

    def __str__(self):
        if self.kind == "singleton":
            return f"{self.label}_inf"
        if self.kind == "member":
            return f"{self.label}_{self.index}"
        return self.label

    @classmethod
    def singleton(cls, label: str) -> "Symbol":
        return cls("singleton", label)

    @classmethod
    def member(cls, label: str, index: int) -> "Symbol":
        return cls("member", label, index)

    @classmethod
    def cell(cls, label: str) -> "Symbol":
        return cls("cell", label)


def parse_symbol(text: str, family_labels: Iterable[str]) -> Symbol:
    """Parse "alpha_1", "beta'_2", "alpha_inf", or a cell label."""
    text = text.strip()
    fams = sorted(family_labels, key=len, reverse=True)
    if text.endswith("_inf"):
        return Symbol.singleton(text[: -len("_inf")])
    for lab in fams:
        pre = lab + "_"
        if text.startswith(pre):
            idx = text[len(pre):]
            if idx.lstrip("-").isdigit():
                return Symbol.member(lab, int(idx))
    if "_" in text:
        lab, _, idx = text.rpartition("_")
        if idx.lstrip("-").isdigit() and lab:
            return Symbol.member(lab, int(idx))
    return Symbol.cell(text)


# ---------------------------------------------------------------------------
# graph presentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FamilySpec:
    label: str
    n_min: int = 1


@dataclass(frozen=True)
class ConcreteEdge:
    src: Symbol
    dst: Symbol


@dataclass(frozen=True)
class ShiftRule:
    """(src_label, n) -> (dst_label, n + shift) for all n >= n_from."""

    src_label: str
    dst_label: str
    shift: int
    n_from: int


@dataclass(frozen=True)
class RangeEdge:
    """src -> (dst_label, n) for every n >= n_from (co-finite fan-out)."""

    src: Symbol
    dst_label: str
    n_from: int


@dataclass(frozen=True)
class SuccessorSet:
    concrete: tuple[Symbol, ...]
    ranges: tuple[tuple[str, int], ...]  # (family label, n_from)

    def admits(self, t: Symbol) -> bool:
        if t in self.concrete:
            return True
        if t.kind == "member":
            return any(t.label == lab and t.index >= n0 for lab, n0 in self.ranges)
        return False

    def instantiate(self, index_cap: int) -> list[Symbol]:
        out = list(self.concrete)
        for lab, n0 in self.ranges:
            out.extend(Symbol.member(lab, n) for n in range(n0, index_cap + 1))
        return out

    @property
    def is_unique(self) -> bool:
        return not self.ranges and len(self.concrete) == 1


class SymbolNotFoundError(KeyError):
    pass


@dataclass(frozen=True)
class TransitionGraph:
    families: tuple[FamilySpec, ...] = ()
    symbols: tuple[Symbol, ...] = ()  # concrete symbols (singletons, cells)
    concrete_edges: tuple[ConcreteEdge, ...] = ()
    shift_rules: tuple[ShiftRule, ...] = ()
    range_edges: tuple[RangeEdge, ...] = ()

    # -- alphabet ------------------------------------------------------
    def family(self, label: str) -> Optional[FamilySpec]:
        for f in self.families:
            if f.label == label:
                return f
        return None

    def has_symbol(self, s: Symbol) -> bool:
        if s.kind == "member":
            f = self.family(s.label)
            return f is not None and s.index >= f.n_min
        return s in self.symbols

    def family_labels(self) -> list[str]:
        return [f.label for f in self.families]

    # -- edges -----------------------------------------------------------
    def successors(self, s: Symbol) -> SuccessorSet:
        """Exact out-neighbourhood: finite symbols plus co-finite ranges."""
        if not self.has_symbol(s):
            raise SymbolNotFoundError(str(s))
        conc: list[Symbol] = []
        rngs: list[tuple[str, int]] = []
        for e in self.concrete_edges:
            if e.src == s:
                conc.append(e.dst)
        for e in self.range_edges:
            if e.src == s:
                rngs.append((e.dst_label, e.n_from))
        if s.kind == "member":
            for r in self.shift_rules:
                if r.src_label == s.label and s.index >= r.n_from:
                    t = Symbol.member(r.dst_label, s.index + r.shift)
                    if self.has_symbol(t):
                        conc.append(t)
        return SuccessorSet(tuple(dict.fromkeys(conc)), tuple(rngs))

    def max_shift(self) -> int:
        return max((abs(r.shift) for r in self.shift_rules), default=0)

    def max_range_offset(self) -> int:
        out = max((e.n_from for e in self.range_edges), default=0)
        return max(out, max((f.n_min for f in self.families), default=0))

    # -- truncation ------------------------------------------------------
    def truncated_symbols(self, index_cap: int) -> list[Symbol]:
        out = list(self.symbols)
        for f in self.families:
            out.extend(Symbol.member(f.label, n) for n in range(f.n_min, index_cap + 1))
        return out

    def truncated_adjacency(self, index_cap: int) -> dict[Symbol, list[Symbol]]:
        syms = self.truncated_symbols(index_cap)
        inset = set(syms)
        adj: dict[Symbol, list[Symbol]] = {}
        for s in syms:
            adj[s] = [t for t in self.successors(s).instantiate(index_cap) if t in inset]
        return adj

    # -- serialisation -----------------------------------------------------
    def to_json_dict(self) -> dict:
        return {
            "families": [{"label": f.label, "n_min": f.n_min} for f in self.families],
            "symbols": [str(s) for s in self.symbols],
            "concrete_edges": [[str(e.src), str(e.dst)] for e in self.concrete_edges],
            "shift_rules": [
                {"src": r.src_label, "dst": r.dst_label, "shift": r.shift, "n_from": r.n_from}
                for r in self.shift_rules
            ],
            "range_edges": [
                {"src": str(e.src), "dst_family": e.dst_label, "n_from": e.n_from}
                for e in self.range_edges
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TransitionGraph":
        labels = [f["label"] for f in d.get("families", [])]

        def ps(t: str) -> Symbol:
            return parse_symbol(t, labels)

        return cls(
            families=tuple(FamilySpec(f["label"], f.get("n_min", 1)) for f in d.get("families", [])),
            symbols=tuple(ps(t) for t in d.get("symbols", [])),
            concrete_edges=tuple(ConcreteEdge(ps(a), ps(b)) for a, b in d.get("concrete_edges", [])),
            shift_rules=tuple(
                ShiftRule(r["src"], r["dst"], r["shift"], r["n_from"]) for r in d.get("shift_rules", [])
            ),
            range_edges=tuple(
                RangeEdge(ps(e["src"]), e["dst_family"], e["n_from"]) for e in d.get("range_edges", [])
            ),
        )


def is_admissible(graph: TransitionGraph, word: Sequence[Symbol]) -> bool:
    """All consecutive pairs satisfy the edge relation (empty word: True)."""
    for a, b in zip(word, word[1:]):
        if not graph.has_symbol(a) or not graph.has_symbol(b):
            return False
        if not graph.successors(a).admits(b):
            return False
    return True


# ---------------------------------------------------------------------------
# strongly connected components on truncations
# ---------------------------------------------------------------------------


def _tarjan_component(adj: dict, seed) -> set:
    """SCC of `seed` (iterative Tarjan restricted to reachable part)."""
    index: dict = {}
    low: dict = {}
    on: set = set()
    stack: list = []
    comp_of: dict = {}
    counter = [0]
    call: list = [(seed, iter(adj.get(seed, ())), None)]
    order: list = [seed]
    index[seed] = low[seed] = 0
    counter[0] = 1
    stack.append(seed)
    on.add(seed)
    while call:
        v, it, _ = call[-1]
        advanced = False
        for w in it:
            if w not in adj:
                continue
            if w not in index:
                index[w] = low[w] = counter[0]
                counter[0] += 1
                stack.append(w)
                on.add(w)
                call.append((w, iter(adj.get(w, ())), None))
                advanced = True
                break
            elif w in on:
                low[v] = min(low[v], index[w])
        if advanced:
            continue
        call.pop()
        if call:
            u = call[-1][0]
            low[u] = min(low[u], low[v])
        if low[v] == index[v]:
            comp = set()
            while True:
                w = stack.pop()
                on.discard(w)
                comp.add(w)
                if w == v:
                    break
            for w in comp:
                comp_of[w] = comp
    return comp_of.get(seed, {seed})


def _component_signature(comp: set, cap: int) -> tuple:
    """Stable description: concrete symbols + per-family index patterns."""
    concrete = sorted(str(s) for s in comp if s.kind != "member")
    fams: dict[str, list[int]] = {}
    for s in comp:
        if s.kind == "member":
            fams.setdefault(s.label, []).append(s.index)
    pattern = []
    for lab in sorted(fams):
        idx = sorted(fams[lab])
        # co-finite within the truncation: contiguous run ending at cap
        n0 = idx[-1]
        while n0 - 1 in set(idx):
            n0 -= 1
        if idx[-1] == cap and set(range(n0, cap + 1)) <= set(idx):
            extra = tuple(i for i in idx if i < n0)
            pattern.append((lab, "cofinite", n0, extra))
        else:
            pattern.append((lab, "finite", tuple(idx)))
    return (tuple(concrete), tuple(pattern))


@dataclass(frozen=True)
class ComponentResult:
    graph: Optional[TransitionGraph]
    stabilized: bool
    signatures: tuple = ()


def irreducible_component(
    graph: TransitionGraph, seed: Symbol, probe_bound: int = 16
) -> ComponentResult:
    """Strongly connected component of `seed`, as a structured graph.

    Computed on index truncations at probe_bound and 2*probe_bound; the
    result is accepted only when the family-pattern description is the
    same at both bounds.  Otherwise the two truncated signatures are
    returned with stabilized=False.
    """
    sigs = []
    comps = []
    for cap in (probe_bound, 2 * probe_bound):
        adj = graph.truncated_adjacency(cap)
        comp = _tarjan_component(adj, seed)
        comps.append(comp)
        sigs.append(_component_signature(comp, cap))
    s1, s2 = sigs
    if s1[0] != s2[0] or len(s1[1]) != len(s2[1]) or any(
        a[:2] != b[:2] or (a[1] == "cofinite" and a[2:] != b[2:]) or (a[1] == "finite" and a != b)
        for a, b in zip(s1[1], s2[1])
    ):
        return ComponentResult(None, False, tuple(sigs))
    comp = comps[1]
    labels = {lab for (lab, *_rest) in s1[1]}
    fam_min: dict[str, int] = {}
    fam_extra: dict[str, tuple] = {}
    for entry in s1[1]:
        if entry[1] == "cofinite":
            fam_min[entry[0]] = entry[2]
            fam_extra[entry[0]] = entry[3]
        else:
            fam_extra[entry[0]] = entry[2]
    if any(v for v in fam_extra.values()):
        # isolated low indices alongside a co-finite run: keep them as cells? reject for now
        return ComponentResult(None, False, tuple(sigs))
    concrete_syms = tuple(s for s in graph.symbols if s in comp)
    families = tuple(FamilySpec(lab, n0) for lab, n0 in sorted(fam_min.items()))

    def inside(sym: Symbol) -> bool:
        if sym.kind == "member":
            return sym.label in fam_min and sym.index >= fam_min[sym.label]
        return sym in concrete_syms

    cedges = tuple(e for e in graph.concrete_edges if inside(e.src) and inside(e.dst))
    srules = []
    for r in graph.shift_rules:
        if r.src_label in fam_min and r.dst_label in fam_min:
            n_from = max(r.n_from, fam_min[r.src_label], fam_min[r.dst_label] - r.shift)
            srules.append(ShiftRule(r.src_label, r.dst_label, r.shift, n_from))
    redges = []
    for e in graph.range_edges:
        if inside(e.src) and e.dst_label in fam_min:
            redges.append(RangeEdge(e.src, e.dst_label, max(e.n_from, fam_min[e.dst_label])))
    # concrete member symbols that appear in edges but are below a family's
    # inherited n_min need their own family floor; handled by fam_min above.
    sub = TransitionGraph(families, concrete_syms, cedges, tuple(srules), tuple(redges))
    return ComponentResult(sub, True, tuple(sigs))


# ---------------------------------------------------------------------------
# first-return loops
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoopCensus:
    base: Symbol
    counts: tuple[int, ...]  # counts[i] = delta(i+1)
    tail: Optional[tuple[int, int]] = None  # (n0, value at n0) when recognised
    geo_ratio: int = 1  # delta(n) = value * geo_ratio^(n-n0) for n >= n0

    def delta(self, n: int) -> int:
        if 1 <= n <= len(self.counts):
            return self.counts[n - 1]
        if self.tail is not None and n >= self.tail[0]:
            return self.tail[1] * self.geo_ratio ** (n - self.tail[0])
        raise ValueError(f"delta({n}) outside the computed range")


def _census_index_cap(graph: TransitionGraph, base: Symbol, max_len: int) -> int:
    base_idx = base.index if base.kind == "member" else 1
    return base_idx + max_len * max(1, graph.max_shift()) + graph.max_range_offset() + 2


def first_return_census(
    graph: TransitionGraph, base: Symbol, max_len: int, tail_window: int = 16
) -> LoopCensus:
    """delta(n) for n <= max_len by exhaustive depth-first enumeration.

    Indices reachable in max_len steps are bounded, so the search is
    finite.  If the last `tail_window` counts are constant the census
    records the eventually-constant closed form.
    """
    if not graph.has_symbol(base):
        raise SymbolNotFoundError(str(base))
    cap = _census_index_cap(graph, base, max_len)
    counts = [0] * (max_len + 1)
    stack: list[tuple[Symbol, int]] = [(base, 0)]
    while stack:
        s, depth = stack.pop()
        if depth >= max_len:
            continue
        for t in graph.successors(s).instantiate(cap):
            if t == base:
                counts[depth + 1] += 1
            elif depth + 1 < max_len and graph.has_symbol(t):
                stack.append((t, depth + 1))
    tail = None
    ratio = 1
    if max_len >= tail_window:
        last = counts[max_len - tail_window + 1 : max_len + 1]
        if len(set(last)) == 1:
            c = last[0]
            n0 = max_len
            while n0 > 1 and counts[n0 - 1] == c:
                n0 -= 1
            if n0 < max_len - tail_window + 2:
                tail = (n0, c)
        elif all(x > 0 for x in last):
            # geometric tail with an exact integer ratio
            q, r = divmod(last[1], last[0])
            if r == 0 and q >= 2 and all(b == a * q for a, b in zip(last, last[1:])):
                n0 = max_len
                while n0 > 1 and counts[n0 - 1] * q == counts[n0]:
                    n0 -= 1
                if n0 < max_len - tail_window + 2:
                    tail = (n0, counts[n0])
                    ratio = q
    return LoopCensus(base, tuple(counts[1:]), tail, ratio)


def first_return_census_dp(graph: TransitionGraph, base: Symbol, max_len: int) -> tuple[int, ...]:
    """Independent memoised count: layered path counts avoiding the base."""
    cap = _census_index_cap(graph, base, max_len)
    layer: dict[Symbol, int] = {base: 1}
    out = []
    for _ in range(max_len):
        nxt: dict[Symbol, int] = {}
        back = 0
        for s, cnt in layer.items():
            for t in graph.successors(s).instantiate(cap):
                if t == base:
                    back += cnt
                elif graph.has_symbol(t):
                    nxt[t] = nxt.get(t, 0) + cnt
        out.append(back)
        layer = nxt
    return tuple(out)


# ---------------------------------------------------------------------------
# entropy
# ---------------------------------------------------------------------------


class EntropyDiagnostic(RuntimeError):
    """Raised when no root exists in (0,1): entropy 0 or divergent census."""


@dataclass(frozen=True)
class EntropyResult:
    R_lo: Fraction
    R_hi: Fraction
    h_lo: float
    h_hi: float
    method: str  # "closed-form" | "truncation-bracket" | "polynomial"
    polynomial: tuple = ()  # coefficients of the exact root polynomial, low degree first
    assumptions: tuple[str, ...] = ()

    @property
    def R_mid(self) -> float:
        return float((self.R_lo + self.R_hi) / 2)

    @property
    def h_mid(self) -> float:
        return (self.h_lo + self.h_hi) / 2

    def to_json_dict(self) -> dict:
        return {
            "R_lo": str(self.R_lo),
            "R_hi": str(self.R_hi),
            "R": self.R_mid,
            "h_lo": self.h_lo,
            "h_hi": self.h_hi,
            "h": self.h_mid,
            "method": self.method,
            "polynomial": [str(c) for c in self.polynomial],
            "assumptions": list(self.assumptions),
        }


def _bisect_root(G, width: Fraction, hi_cap: Fraction = Fraction(1)) -> tuple[Fraction, Fraction]:
    """Root of G(z) = 1 on (0,hi_cap) for strictly increasing G, to given width."""
    lo = min(Fraction(1, 2**20), hi_cap / 2)
    hi = hi_cap - hi_cap / 2**20
    if G(lo) >= 1:
        hi = lo
        lo = Fraction(1, 2**60)
        if G(lo) >= 1:
            raise EntropyDiagnostic("generating function already >= 1 near 0")
    if G(hi) <= 1:
        raise EntropyDiagnostic("entropy 0 or divergent census: no root in (0,1)")
    while hi - lo > width:
        mid = (lo + hi) / 2
        if G(mid) < 1:
            lo = mid
        else:
            hi = mid
    return lo, hi


def _h_interval(R_lo: Fraction, R_hi: Fraction) -> tuple[float, float]:
    # read-out only: pad by a few ulps so the float interval stays outward
    pad = 5e-15
    return (-math.log(float(R_hi)) - pad, -math.log(float(R_lo)) + pad)


def gurevich_entropy(
    census: LoopCensus,
    width: Fraction = Fraction(1, 10**13),
    delta_bound: Optional[int] = None,
) -> EntropyResult:
    """Certified interval for R and h = -log R from a loop census.

    With an eventually-constant tail c from n0 the generating function has
    the closed form sum_{n<n0} delta(n) z^n + c z^n0 / (1-z); the root of
    1 - G is then a root of an explicit polynomial, isolated by exact
    bisection.  Without a recognised tail a certified bound on delta(n)
    is required and yields a bracket instead.
    """
    if not census.counts and census.tail is None:
        raise EntropyDiagnostic("empty census")
    if census.tail is not None:
        n0, c = census.tail
        rho = census.geo_ratio
        head = [(n, census.delta(n)) for n in range(1, n0)]

        def G(z: Fraction) -> Fraction:
            s = sum(d * z**n for n, d in head)
            return s + c * z**n0 / (1 - rho * z)

        if c == 0:
            return _polynomial_census_entropy(head, width)
        R_lo, R_hi = _bisect_root(G, width, hi_cap=Fraction(1, rho))
        # (1 - rho z)(1 - sum head) - c z^n0 = 0 at the root
        poly = [Fraction(0)] * (max(n0, max((n for n, _ in head), default=0) + 1) + 1)
        poly[0] += 1
        poly[1] -= rho
        for n, d in head:
            poly[n] -= d
            poly[n + 1] += rho * d
        poly[n0] -= c
        h_lo, h_hi = _h_interval(R_lo, R_hi)
        return EntropyResult(R_lo, R_hi, h_lo, h_hi, "closed-form", tuple(poly), ())
    if delta_bound is not None:
        L = len(census.counts)
        head = [(n, census.counts[n - 1]) for n in range(1, L + 1)]

        def G_hi(z: Fraction) -> Fraction:
            return sum(d * z**n for n, d in head) + delta_bound * z ** (L + 1) / (1 - z)

        def G_lo(z: Fraction) -> Fraction:
            return sum(d * z**n for n, d in head)

        R_lo, _ = _bisect_root(G_hi, width)
        try:
            _, R_hi = _bisect_root(G_lo, width)
        except EntropyDiagnostic:
            R_hi = Fraction(1)
        h_lo, h_hi = _h_interval(R_lo, R_hi)
        return EntropyResult(
            R_lo,
            R_hi,
            h_lo,
            h_hi,
            "truncation-bracket",
            (),
            ("tail bounded by the supplied delta bound; convergence on (0,R) assumed",),
        )
    return _polynomial_census_entropy(
        [(n, census.counts[n - 1]) for n in range(1, len(census.counts) + 1)], width
    )


def _polynomial_census_entropy(head, width) -> EntropyResult:
    total = sum(d for _, d in head)
    if total < 1:
        raise EntropyDiagnostic("entropy 0 or divergent census: G(1) < 1")
    if total == 1:
        return EntropyResult(Fraction(1), Fraction(1), 0.0, 0.0, "polynomial", (), ())

    def G(z: Fraction) -> Fraction:
        return sum(d * z**n for n, d in head)

    R_lo, R_hi = _bisect_root(G, width)
    poly = [Fraction(0)] * (max(n for n, _ in head) + 1)
    poly[0] = Fraction(1)
    for n, d in head:
        poly[n] -= d
    h_lo, h_hi = _h_interval(R_lo, R_hi)
    return EntropyResult(R_lo, R_hi, h_lo, h_hi, "polynomial", tuple(poly), ())


# ---------------------------------------------------------------------------
# truncated Perron values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PerronResult:
    value: float
    lo: Fraction
    hi: Fraction
    index_bound: int


def truncated_perron(graph: TransitionGraph, index_bound: int, tol: float = 1e-8,
                     max_iter: int = 10000) -> PerronResult:
    """Spectral radius of the index-truncated adjacency matrix.

    Reducible truncations take the maximum over strongly connected
    blocks.  Each block is handled by exact integer power iteration on
    A+I with Collatz-Wielandt bounds, so `lo <= lambda <= hi` is a
    certified rational bracket; `value` is the floating read-out.
    """
    adj = graph.truncated_adjacency(index_bound)
    blocks = _all_sccs(adj)
    best: Optional[tuple[Fraction, Fraction]] = None
    for block in blocks:
        if len(block) == 1:
            s = next(iter(block))
            if s not in adj.get(s, ()):
                continue  # no self-loop: spectral radius 0
        lo, hi = _block_perron(adj, sorted(block, key=str), tol, max_iter)
        if best is None or lo > best[0]:
            best = (lo, hi)
    if best is None:
        return PerronResult(0.0, Fraction(0), Fraction(0), index_bound)
    lo, hi = best
    return PerronResult(float((lo + hi) / 2), lo, hi, index_bound)


def _all_sccs(adj: dict) -> list[set]:
    seen: set = set()
    out = []
    for v in adj:
        if v in seen:
            continue
        comp = _tarjan_component(adj, v)
        # _tarjan_component returns the seed's SCC; mark and continue
        seen |= comp
        out.append(comp)
    return out


def _block_perron(adj: dict, block: list, tol: float, max_iter: int) -> tuple[Fraction, Fraction]:
    idx = {s: i for i, s in enumerate(block)}
    rows: list[list[int]] = [[] for _ in block]
    has_edge = False
    for s in block:
        for t in adj.get(s, ()):
            if t in idx:
                rows[idx[s]].append(idx[t])
                has_edge = True
    if not has_edge:
        return Fraction(0), Fraction(0)
    n = len(block)
    v = [1] * n
    lo, hi = Fraction(0), Fraction(10**6)
    for _ in range(max_iter):
        w = [v[i] + sum(v[j] for j in rows[i]) for i in range(n)]  # (A+I) v
        ratios = [Fraction(w[i], v[i]) for i in range(n)]
        lo, hi = min(ratios) - 1, max(ratios) - 1
        if float(hi - lo) <= tol:
            break
        # keep integers small-ish
        g = 0
        for x in w:
            g = math.gcd(g, x)
        v = [x // g for x in w] if g > 1 else w
    return lo, hi


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------

_GREEK = {
    "alpha": "α",
    "beta": "β",
    "gamma": "γ",
    "delta": "δ",
    "epsilon": "ε",
    "zeta": "ζ",
}


def pretty_symbol(s: Symbol) -> str:
    base = s.label
    primes = ""
    while base.endswith("'"):
        primes += "′"
        base = base[:-1]
    name = _GREEK.get(base, base) + primes
    if s.kind == "singleton":
        return f"{name}_∞"
    if s.kind == "member":
        return f"{name}_{s.index}"
    return name


def _dot_id(s: Symbol) -> str:
    return str(s).replace("'", "p")


def graph_to_dot(graph: TransitionGraph, index_cap: int, name: str = "shift") -> str:
    adj = graph.truncated_adjacency(index_cap)
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for s in sorted(adj, key=str):
        lines.append(f'  {_dot_id(s)} [label="{pretty_symbol(s)}"];')
    for s in sorted(adj, key=str):
        for t in sorted(adj[s], key=str):
            lines.append(f"  {_dot_id(s)} -> {_dot_id(t)};")
    lines.append("}")
    return "\n".join(lines)
