"""Exact finite metric spaces over the rationals.

Everything here works with :class:`fractions.Fraction`, so comparisons are
exact and re-running an operation gives bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from operator import add, le
from typing import Hashable, Iterable, Mapping, Sequence

Point = Hashable


class MetricStructureError(ValueError):
    """Malformed distance data (shape, negative entries, unknown points)."""


class MetricDomainError(ValueError):
    """A well-formed request outside the operation's domain."""


def parse_rational(value) -> Fraction:
    """Parse ``"p/q"``, ``"p"``, an int or a Fraction. Floats are rejected."""
    if isinstance(value, bool):
        raise MetricStructureError(f"not a rational: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        if "/" in text:
            num, _, den = text.partition("/")
            try:
                n, d = int(num), int(den)
            except ValueError as exc:
                raise MetricStructureError(f"bad rational {value!r}") from exc
            if d == 0:
                raise MetricStructureError(f"zero denominator in {value!r}")
            return Fraction(n, d)
        try:
            return Fraction(int(text))
        except ValueError as exc:
            raise MetricStructureError(f"bad rational {value!r}") from exc
    raise MetricStructureError(f"not a rational: {value!r}")


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


def pair(x: Point, y: Point) -> frozenset:
    return frozenset((x, y))


def _sort_key(p):
    return (type(p).__name__, repr(p)) if not isinstance(p, str) else ("", p)


@dataclass(frozen=True)
class FiniteMetricSpace:
    """Finite point set with an exact distance table.

    ``skeleton`` optionally records a 1-skeleton (adjacency) used for
    connectivity questions. ``None`` means the space is treated as one
    connected blob, i.e. every two points are adjacent.
    """

    points: tuple
    table: tuple
    marked_pairs: tuple = ()
    skeleton: frozenset | None = None
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        pts = tuple(self.points)
        object.__setattr__(self, "points", pts)
        if len(set(pts)) != len(pts):
            raise MetricStructureError("duplicate point identifiers")
        rows = tuple(tuple(Fraction(v) for v in row) for row in self.table)
        if len(rows) != len(pts) or any(len(r) != len(pts) for r in rows):
            raise MetricStructureError(
                f"distance table is not {len(pts)}x{len(pts)}")
        for i, row in enumerate(rows):
            for j, v in enumerate(row):
                if v < 0:
                    raise MetricStructureError(
                        f"negative distance {v} at ({pts[i]!r}, {pts[j]!r})")
        object.__setattr__(self, "table", rows)
        index = {p: i for i, p in enumerate(pts)}
        object.__setattr__(self, "_index", index)
        marked = tuple(frozenset(p) for p in self.marked_pairs)
        for m in marked:
            if len(m) != 2 or not m <= index.keys():
                raise MetricStructureError(f"bad marked pair {sorted(m, key=_sort_key)}")
        object.__setattr__(self, "marked_pairs", marked)
        if self.skeleton is not None:
            sk = frozenset(frozenset(e) for e in self.skeleton)
            for e in sk:
                if len(e) != 2 or not e <= index.keys():
                    raise MetricStructureError(f"bad skeleton edge {sorted(e, key=_sort_key)}")
            object.__setattr__(self, "skeleton", sk)

    # construction helpers -------------------------------------------------
    @classmethod
    def from_function(cls, points: Sequence, dist, **kw) -> "FiniteMetricSpace":
        pts = tuple(points)
        return cls(pts, tuple(tuple(Fraction(dist(x, y)) for y in pts) for x in pts), **kw)

    @classmethod
    def from_pairs(cls, points: Sequence, dists: Mapping, **kw) -> "FiniteMetricSpace":
        """Build from a mapping ``{(x, y): d}`` covering each unordered pair once."""
        pts = tuple(points)
        lookup = {}
        for (x, y), v in dists.items():
            lookup[pair(x, y)] = parse_rational(v)

        def dist(x, y):
            if x == y:
                return Fraction(0)
            try:
                return lookup[pair(x, y)]
            except KeyError:
                raise MetricStructureError(f"missing distance for ({x!r}, {y!r})") from None

        return cls.from_function(pts, dist, **kw)

    @classmethod
    def from_graph(cls, points: Sequence, edges: Iterable, weights: Mapping | None = None,
                   **kw) -> "FiniteMetricSpace":
        """Shortest-path metric of a connected graph (unit weights by default)."""
        pts = tuple(points)
        idx = {p: i for i, p in enumerate(pts)}
        n = len(pts)
        inf = None
        d = [[inf] * n for _ in range(n)]
        for i in range(n):
            d[i][i] = Fraction(0)
        edge_set = set()
        for e in edges:
            x, y = tuple(e)
            if x not in idx or y not in idx:
                raise MetricStructureError(f"edge ({x!r}, {y!r}) uses an unknown point")
            w = Fraction(1) if weights is None else parse_rational(weights[pair(x, y)])
            if w <= 0:
                raise MetricStructureError("edge weights must be positive")
            i, j = idx[x], idx[y]
            if d[i][j] is None or w < d[i][j]:
                d[i][j] = d[j][i] = w
            edge_set.add(pair(x, y))
        for k in range(n):
            dk = d[k]
            for i in range(n):
                dik = d[i][k]
                if dik is None:
                    continue
                di = d[i]
                for j in range(n):
                    if dk[j] is None:
                        continue
                    cand = dik + dk[j]
                    if di[j] is None or cand < di[j]:
                        di[j] = cand
        if any(v is None for row in d for v in row):
            raise MetricStructureError("graph is disconnected; no path metric")
        kw.setdefault("skeleton", frozenset(edge_set))
        return cls(pts, tuple(tuple(r) for r in d), **kw)

    # queries --------------------------------------------------------------
    def index(self, x: Point) -> int:
        try:
            return self._index[x]
        except KeyError:
            raise MetricStructureError(f"unknown point {x!r}") from None

    def __contains__(self, x) -> bool:
        return x in self._index

    def __len__(self) -> int:
        return len(self.points)

    def d(self, x: Point, y: Point) -> Fraction:
        return self.table[self.index(x)][self.index(y)]

    def diameter(self) -> Fraction:
        return max((max(r) for r in self.table), default=Fraction(0))

    def diameter_of(self, subset: Iterable) -> Fraction:
        s = list(subset)
        return max((self.d(x, y) for x, y in combinations(s, 2)), default=Fraction(0))

    def adjacent(self, x: Point, y: Point) -> bool:
        if x == y:
            return False
        if self.skeleton is None:
            return True
        return pair(x, y) in self.skeleton

    def skeleton_edges(self) -> list:
        if self.skeleton is not None:
            return sorted((tuple(sorted(e, key=_sort_key)) for e in self.skeleton),
                          key=lambda e: (_sort_key(e[0]), _sort_key(e[1])))
        return [(x, y) for x, y in combinations(self.points, 2)]

    # derived spaces -------------------------------------------------------
    def scaled(self, factor) -> "FiniteMetricSpace":
        c = Fraction(factor)
        if c <= 0:
            raise MetricDomainError("scale factor must be positive")
        return FiniteMetricSpace(self.points, tuple(tuple(v * c for v in r) for r in self.table),
                                 self.marked_pairs, self.skeleton)

    def restrict(self, subset: Iterable) -> "FiniteMetricSpace":
        keep = [p for p in self.points if p in set(subset)]
        idx = [self.index(p) for p in keep]
        ks = set(keep)
        sk = None if self.skeleton is None else frozenset(e for e in self.skeleton if e <= ks)
        return FiniteMetricSpace(tuple(keep),
                                 tuple(tuple(self.table[i][j] for j in idx) for i in idx),
                                 tuple(m for m in self.marked_pairs if m <= ks), sk)

    def with_marked(self, pairs_: Iterable) -> "FiniteMetricSpace":
        return FiniteMetricSpace(self.points, self.table, tuple(pairs_), self.skeleton)

    # serialization --------------------------------------------------------
    def to_json(self) -> dict:
        out = {
            "points": [str(p) for p in self.points],
            "dist": [[format_rational(v) for v in row] for row in self.table],
        }
        if self.marked_pairs:
            out["marked_pairs"] = [sorted(str(p) for p in m) for m in self.marked_pairs]
        if self.skeleton is not None:
            out["edges"] = [[str(a), str(b)] for a, b in self.skeleton_edges()]
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "FiniteMetricSpace":
        if "points" not in data:
            raise MetricStructureError("space needs a 'points' list")
        pts = tuple(str(p) for p in data["points"])
        marked = tuple(frozenset(m) for m in data.get("marked_pairs", ()))
        edges = data.get("edges")
        if "dist" in data:
            rows = data["dist"]
            if not isinstance(rows, list) or len(rows) != len(pts) or any(
                    not isinstance(r, list) or len(r) != len(pts) for r in rows):
                raise MetricStructureError(f"'dist' must be a {len(pts)}x{len(pts)} table")
            table = []
            for i, r in enumerate(rows):
                row = []
                for j, v in enumerate(r):
                    try:
                        row.append(parse_rational(v))
                    except MetricStructureError as exc:
                        raise MetricStructureError(f"dist[{i}][{j}]: {exc}") from None
                table.append(tuple(row))
            sk = None if edges is None else frozenset(frozenset(e) for e in edges)
            return cls(pts, tuple(table), marked, sk)
        if edges is not None:
            return cls.from_graph(pts, [tuple(e) for e in edges], marked_pairs=marked)
        if len(pts) == 1:
            return cls(pts, ((Fraction(0),),), marked)
        raise MetricStructureError("space needs 'dist' or 'edges'")


@dataclass(frozen=True)
class PairCollection:
    """Unordered two-point subsets of a space; pairwise overlaps of size at most one."""

    pairs: tuple

    def __post_init__(self):
        ps = tuple(frozenset(p) for p in self.pairs)
        for p in ps:
            if len(p) != 2:
                raise MetricStructureError(f"pair must have two distinct points: {sorted(p, key=_sort_key)}")
        for p, q in combinations(ps, 2):
            if len(p & q) > 1:
                raise MetricStructureError(f"pairs overlap in two points: {sorted(p, key=_sort_key)}")
        object.__setattr__(self, "pairs", ps)

    def check_in(self, space: FiniteMetricSpace) -> None:
        for p in self.pairs:
            for x in p:
                if x not in space:
                    raise MetricStructureError(f"pair point {x!r} is not in the space")

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)


@dataclass(frozen=True)
class Violation:
    axiom: str
    witness: tuple
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"ok": self.ok,
                "violations": [{"axiom": v.axiom, "witness": [str(w) for w in v.witness],
                                "detail": v.detail} for v in self.violations]}


def validate_metric(space: FiniteMetricSpace, limit: int | None = None) -> ValidationReport:
    """List every violated metric axiom with a witnessing tuple.

    Structural problems raise :class:`MetricStructureError` at construction
    time, so by the time a space reaches this function only axioms remain.
    ``limit`` caps the number of triangle witnesses reported.
    """
    pts, t = space.points, space.table
    n = len(pts)
    if len(t) != n or any(len(r) != n for r in t):
        raise MetricStructureError("distance table is not square")
    out = []
    for i in range(n):
        if t[i][i] != 0:
            out.append(Violation("identity", (pts[i],), f"d(x,x) = {t[i][i]}"))
    for i, j in combinations(range(n), 2):
        if t[i][j] != t[j][i]:
            out.append(Violation("symmetry", (pts[i], pts[j]),
                                 f"{t[i][j]} != {t[j][i]}"))
        if t[i][j] == 0 or t[j][i] == 0:
            out.append(Violation("positivity", (pts[i], pts[j]), "distinct points at distance 0"))
    # Triangle inequality with integer arithmetic on a common denominator; a
    # row-wise C-level scan keeps this fast for a few hundred points.
    den = 1
    for row in t:
        for v in row:
            den = den * v.denominator // _gcd(den, v.denominator)
    it = [[v.numerator * (den // v.denominator) for v in row] for row in t]
    found = 0
    for i in range(n):
        row_i = it[i]
        for j in range(n):
            dij = row_i[j]
            row_j = it[j]
            if all(map(le, row_i, map(add, [dij] * n, row_j))):
                continue
            for k in range(n):
                if row_i[k] > dij + row_j[k] and i < k:
                    out.append(Violation(
                        "triangle", (pts[i], pts[k], pts[j]),
                        f"d(x,z)={t[i][k]} > d(x,y)+d(y,z)={t[i][j] + t[j][k]}"))
                    found += 1
                    if limit is not None and found >= limit:
                        return ValidationReport(tuple(out))
    return ValidationReport(tuple(out))


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def urysohn_map(space: FiniteMetricSpace, p: Point, q: Point) -> dict:
    """u(x) = d(x,p) d(p,q) / (d(x,p) + d(x,q)); a 1-Lipschitz map onto [0, d(p,q)]."""
    if p == q:
        raise MetricDomainError("Urysohn map needs two distinct points")
    dpq = space.d(p, q)
    out = {}
    for x in space.points:
        dxp, dxq = space.d(x, p), space.d(x, q)
        out[x] = dxp * dpq / (dxp + dxq)
    return out


@dataclass(frozen=True)
class HalverParameters:
    """Intermediate data of the diameter-halving rescale (normalised to K = 1)."""

    u: dict
    l1: Fraction
    l2: Fraction
    f: dict
    exceptional: tuple


def _ramp(t: Fraction, l1: Fraction, l2: Fraction) -> Fraction:
    half = Fraction(1, 2)
    if t <= l1:
        return half * t / l1 if l1 > 0 else half
    if t <= l2:
        return half
    return half + half * (t - l2) / (1 - l2) if l2 < 1 else half


def halver_parameters(space: FiniteMetricSpace, collection: PairCollection,
                      anchor_pair) -> HalverParameters:
    anchor = frozenset(anchor_pair)
    if len(anchor) != 2:
        raise MetricDomainError("anchor pair needs two distinct points")
    if anchor not in set(collection.pairs):
        raise ValueError("anchor pair is not a member of the collection")
    collection.check_in(space)
    a, b = sorted(anchor, key=_sort_key)
    scale = space.d(a, b)
    dn = space.scaled(1 / scale)
    half = Fraction(1, 2)
    exceptional = tuple(C for C in collection.pairs
                        if C != anchor and dn.diameter_of(C) > half)
    u = {}
    for x in dn.points:
        dxa, dxb = dn.d(x, a), dn.d(x, b)
        u[x] = dxa / (dxa + dxb)
    A = set().union(*exceptional) - anchor if exceptional else set()
    vals = [u[x] for x in A] + [half]
    l1, l2 = min(vals), max(vals)
    f = {x: _ramp(u[x], l1, l2) for x in dn.points}
    return HalverParameters(u, l1, l2, f, exceptional)


def halver_rescale(space: FiniteMetricSpace, collection: PairCollection, anchor_pair,
                   K) -> FiniteMetricSpace:
    """Rescale so the diameter is ``K``, attained by the anchor pair, with every
    other collection pair of diameter at most ``K/2``.

    The metric is the max of a shrunken copy of the input metric and the
    distance between values of a reparametrised Urysohn function.
    """
    K = Fraction(K)
    if K <= 0:
        raise MetricDomainError("K must be positive")
    params = halver_parameters(space, collection, anchor_pair)
    a, b = sorted(frozenset(anchor_pair), key=_sort_key)
    dn = space.scaled(1 / space.d(a, b))
    two_diam = 2 * dn.diameter()
    f = params.f
    pts = dn.points
    rows = []
    for i, x in enumerate(pts):
        row = []
        for j, y in enumerate(pts):
            row.append(K * max(dn.table[i][j] / two_diam, abs(f[x] - f[y])))
        rows.append(tuple(row))
    return FiniteMetricSpace(pts, tuple(rows), space.marked_pairs, space.skeleton)


def null_check(space: FiniteMetricSpace, collection: PairCollection | Iterable, eps) -> list:
    """Pairs of the collection whose two points are more than ``eps`` apart."""
    eps = Fraction(eps)
    pairs_ = collection.pairs if isinstance(collection, PairCollection) else [frozenset(p) for p in collection]
    out = []
    for C in pairs_:
        x, y = tuple(C)
        if space.d(x, y) > eps:
            out.append(C)
    return out
