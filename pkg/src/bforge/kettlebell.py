"""Kettlebell spaces, bonding maps between them, threads and nested arcs.

A kettlebell space over a finite subtree F is M_F with one arc [0, d(a,b)]
attached along every frontier pair {a, b}. Arcs are keyed by the glued
classes of their endpoints, ordered so that parameter 0 is the smaller
class id. Distinct frontier edges carrying the same pair share one arc.

Bonding maps are composed from single steps along an augmenting order.
Removing a W-node changes nothing; removing a leaf V-node v attached at w
collapses M_v and the arcs hanging off it onto the arc of M_w with the
Urysohn map computed from d_v.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .exact_metric import format_rational
from .glue_space import EndDescriptor, GluedSpace, advance_end, enumerate_ends, glue_classes
from .tree_system import MetricAssignment, TreeSystem, assign_shrinking, frontier_data, unfold_template


class KettlebellError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ArcPoint:
    key: tuple       # (class a, class b) with a < b
    t: Fraction

    def __str__(self):
        return f"{self.key[0]}~{self.key[1]}@{format_rational(self.t)}"


@dataclass(frozen=True)
class Interval:
    key: tuple
    lo: Fraction
    hi: Fraction

    @property
    def length(self) -> Fraction:
        return self.hi - self.lo

    def within(self, other: "Interval") -> bool:
        return self.key == other.key and other.lo <= self.lo and self.hi <= other.hi

    def interior_of(self, length: Fraction) -> bool:
        return 0 < self.lo and self.hi < length

    def to_json(self) -> dict:
        return {"arc": list(self.key), "lo": format_rational(self.lo), "hi": format_rational(self.hi)}


def _key(a, b) -> tuple:
    return (a, b) if a < b else (b, a)


class KettlebellContext:
    """Shared lookup tables for all kettlebell spaces of one tree system."""

    def __init__(self, system: TreeSystem, metrics: MetricAssignment, glued: GluedSpace | None = None):
        self.system = system
        self.metrics = metrics
        self.glued = glued
        if glued is not None:
            self.member_of, self.members = glued.member_of, glued.members
        else:
            self.member_of, self.members = glue_classes(system)
        tree = system.tree
        self.dist = tree.distances()
        self.local = {}
        for v in tree.v_nodes:
            self.local[v] = {self.member_of[(v, p)]: p for p in system.constituent[v].points}
        self.w_key = {}
        for w in tree.w_nodes:
            x, y = system.cut_pair[w]
            self.w_key[w] = _key(self.member_of[(w, x)], self.member_of[(w, y)])
        self.key_length = {}
        for w, k in self.w_key.items():
            self.key_length[k] = metrics[w].d(*system.cut_pair[w])
        self._arcs = {}
        self._classes = {}

    # -- structure of M_F^* -------------------------------------------------
    def classes_in(self, F: frozenset) -> frozenset:
        F = frozenset(F)
        if F not in self._classes:
            out = set()
            for u in F:
                if u in self.local:
                    out.update(self.local[u])
                else:
                    out.update(self.w_key[u])
            self._classes[F] = frozenset(out)
        return self._classes[F]

    def arcs_of(self, F: frozenset) -> dict:
        F = frozenset(F)
        if F not in self._arcs:
            pairs, _ = frontier_data(self.system, F)
            arcs = {}
            for (n1, p1), (n2, p2) in pairs:
                a, b = self.member_of[(n1, p1)], self.member_of[(n2, p2)]
                k = _key(a, b)
                length = self._pair_length(n1, p1, p2)
                if length == 0:
                    raise KettlebellError(f"degenerate arc on {k}: d(a,b)=0")
                arcs[k] = length
            self._arcs[F] = arcs
        return self._arcs[F]

    def _pair_length(self, node, p, q) -> Fraction:
        return self.metrics[node].d(p, q)

    def normalize(self, point, F=None):
        if isinstance(point, ArcPoint):
            if point.t == 0:
                return point.key[0]
            length = self.arc_length(point.key, F)
            if point.t == length:
                return point.key[1]
            if not 0 < point.t < length:
                raise KettlebellError(f"arc parameter {point.t} outside [0, {length}]")
        return point

    def arc_length(self, key, F=None) -> Fraction:
        try:
            return self.key_length[key]
        except KeyError:
            raise KettlebellError(f"no cut pair carries arc {key}") from None

    # -- bonding maps --------------------------------------------------------
    def augmenting_order(self, small: frozenset, big: frozenset, rng: random.Random | None = None) -> list:
        small, big = frozenset(small), frozenset(big)
        if not small <= big:
            raise KettlebellError("bond needs F contained in F'")
        tree = self.system.tree
        extra = big - small
        if rng is None:
            # breadth-first from F, ties broken by vertex id
            dist = {}
            frontier = sorted(small)
            for u in frontier:
                dist[u] = 0
            queue = list(frontier)
            while queue:
                nxt = []
                for u in queue:
                    for z in tree.neighbors(u):
                        if z in big and z not in dist:
                            dist[z] = dist[u] + 1
                            nxt.append(z)
                queue = nxt
            if set(dist) != set(big):
                raise KettlebellError("F' is not connected to F")
            return sorted(extra, key=lambda u: (dist[u], u))
        current = set(small)
        order = []
        while len(order) < len(extra):
            addable = sorted(u for u in extra - current
                             if any(z in current for z in tree.neighbors(u)))
            if not addable:
                raise KettlebellError("F' is not connected to F")
            u = rng.choice(addable)
            order.append(u)
            current.add(u)
        return order

    def _removal(self, v, current: set):
        """The W-node through which leaf v hangs off the rest, or None for a W-node."""
        if v not in self.local:
            return None
        ws = [w for w in self.system.tree.neighbors(v) if w in current]
        if len(ws) != 1:
            raise KettlebellError(f"{v} is not a leaf of the current subtree")
        return ws[0]

    def _u(self, v, w, da, db) -> Fraction:
        length = self.metrics[w].d(*self.system.cut_pair[w])
        return da * length / (da + db)

    def _dist_local(self, v, point, target_cls):
        """Distance in M_v^* from a class or arc point to a class of M_v."""
        loc = self.local[v]
        m = self.metrics[v]
        if isinstance(point, ArcPoint):
            c, d = point.key
            length = m.d(loc[c], loc[d])
            return min(point.t + m.d(loc[c], loc[target_cls]),
                       length - point.t + m.d(loc[d], loc[target_cls]))
        return m.d(loc[point], loc[target_cls])

    def _moves(self, v, w, point) -> bool:
        key = self.w_key[w]
        loc = self.local[v]
        if isinstance(point, ArcPoint):
            return point.key != key and point.key[0] in loc and point.key[1] in loc
        return point in loc and point not in key

    def step(self, v, w, point):
        """Collapse M_v^* onto the arc of M_w (single augmenting step, reversed)."""
        if not self._moves(v, w, point):
            return point
        key = self.w_key[w]
        t = self._u(v, w, self._dist_local(v, point, key[0]), self._dist_local(v, point, key[1]))
        return self.normalize(ArcPoint(key, t))

    def bond(self, big, small, point, order: list | None = None):
        big, small = frozenset(big), frozenset(small)
        if order is None:
            order = self.augmenting_order(small, big)
        current = set(big)
        for u in reversed(order):
            w = self._removal(u, current)
            current.discard(u)
            if w is not None:
                point = self.step(u, w, point)
        return point

    # -- intervals -----------------------------------------------------------
    def step_interval(self, v, w, iv: Interval) -> Interval:
        key = self.w_key[w]
        loc = self.local[v]
        if iv.key == key or iv.key[0] not in loc or iv.key[1] not in loc:
            return iv
        m = self.metrics[v]
        c, d = iv.key
        length = m.d(loc[c], loc[d])
        cands = {iv.lo, iv.hi}
        for target in key:
            # kink of s -> min(s + d(c,t), L - s + d(d,t))
            s = (length + m.d(loc[d], loc[target]) - m.d(loc[c], loc[target])) / 2
            if iv.lo < s < iv.hi:
                cands.add(s)
        vals = []
        for s in sorted(cands):
            da = min(s + m.d(loc[c], loc[key[0]]), length - s + m.d(loc[d], loc[key[0]]))
            db = min(s + m.d(loc[c], loc[key[1]]), length - s + m.d(loc[d], loc[key[1]]))
            vals.append(self._u(v, w, da, db))
        return Interval(key, min(vals), max(vals))

    def bond_interval(self, big, small, iv: Interval) -> Interval:
        order = self.augmenting_order(frozenset(small), frozenset(big))
        current = set(big)
        for u in reversed(order):
            w = self._removal(u, current)
            current.discard(u)
            if w is not None:
                iv = self.step_interval(u, w, iv)
        return iv


# ----------------------------------------------------------------------------
# kettlebell complexes


@dataclass(frozen=True, eq=False)
class KettlebellComplex:
    F: frozenset
    classes: tuple
    arcs: dict                 # key -> length
    ctx: KettlebellContext = field(repr=False)

    def _check(self, p):
        p = self.ctx.normalize(p)
        if isinstance(p, ArcPoint):
            if p.key not in self.arcs:
                raise KettlebellError(f"arc {p.key} is not part of this complex")
        elif p not in self.classes:
            raise KettlebellError(f"{p!r} is not a point of M_F")
        return p

    def d(self, p, q) -> Fraction:
        g = self.ctx.glued
        if g is None:
            raise KettlebellError("distances need the glued space")
        p, q = self._check(p), self._check(q)
        if not isinstance(p, ArcPoint) and not isinstance(q, ArcPoint):
            return g.d(p, q)
        if not isinstance(p, ArcPoint):
            p, q = q, p
        ends_p = ((p.key[0], p.t), (p.key[1], self.arcs[p.key] - p.t))
        if not isinstance(q, ArcPoint):
            return min(c + g.d(e, q) for e, c in ends_p)
        if p.key == q.key:
            return abs(p.t - q.t)
        ends_q = ((q.key[0], q.t), (q.key[1], self.arcs[q.key] - q.t))
        return min(c1 + g.d(e1, e2) + c2 for e1, c1 in ends_p for e2, c2 in ends_q)

    def sample(self, rng: random.Random, n: int) -> list:
        pts = list(self.classes)
        keys = sorted(self.arcs)
        out = []
        for _ in range(n):
            if keys and rng.random() < 0.5:
                k = rng.choice(keys)
                den = rng.randint(2, 9)
                t = self.arcs[k] * Fraction(rng.randint(1, den - 1), den)
                out.append(ArcPoint(k, t))
            else:
                out.append(rng.choice(pts))
        return out


def build_kettlebell(system: TreeSystem, metrics: MetricAssignment, F: Iterable,
                     glued: GluedSpace | None = None, ctx: KettlebellContext | None = None) -> KettlebellComplex:
    ctx = ctx or KettlebellContext(system, metrics, glued)
    F = frozenset(F)
    return KettlebellComplex(F, tuple(sorted(ctx.classes_in(F))), dict(ctx.arcs_of(F)), ctx)


def filtration(system: TreeSystem) -> list:
    """T_0, T_0 + its W-neighbours, T_1, ... up to the whole truncation."""
    dist = system.tree.distances()
    top = max(dist.values())
    return [frozenset(u for u, d in dist.items() if d <= r) for r in range(top + 1)]


def bond(ctx: KettlebellContext, big, small, point, order=None):
    if not frozenset(small) <= frozenset(big):
        raise KettlebellError("F is not contained in F'")
    return ctx.bond(big, small, ctx.normalize(point), order)


def gamma(ctx: KettlebellContext, F, x, members: list | None = None):
    """Image in M_F^* of a point x of the truncated total space."""
    F = frozenset(F)
    chain = members if members is not None else filtration(ctx.system)
    for Fp in chain:
        if F <= Fp and x in ctx.classes_in(Fp):
            return ctx.bond(Fp, F, x)
    whole = frozenset(ctx.system.tree.vertices)
    if x in ctx.classes_in(whole):
        return ctx.bond(whole, F, x)
    raise KettlebellError(f"no filtration member contains {x!r}; deepen the truncation")


def _ray_ws(ctx: KettlebellContext, F: frozenset, ray: tuple):
    """W-nodes on the ray after it leaves F, with the subtrees F_n."""
    i = next((j for j, u in enumerate(ray) if u not in F), None)
    if i is None:
        raise KettlebellError("ray does not leave F at this depth")
    start = i - 1 if ray[i - 1] in ctx.w_key else i
    ws, subtrees = [], []
    for j in range(start, len(ray)):
        if ray[j] in ctx.w_key:
            ws.append(ray[j])
            subtrees.append(frozenset(F) | frozenset(ray[i:j]) if j > i else frozenset(F))
    return ws, subtrees


def boundary_gamma(ctx: KettlebellContext, F, ray: tuple, n: int) -> list:
    """Nested intervals A_1 ... A_n on one arc of M_F^* shrinking to the end's image."""
    F = frozenset(F)
    ws, subtrees = _ray_ws(ctx, F, ray)
    if len(ws) < n:
        raise KettlebellError(f"ray reaches only {len(ws)} W-nodes past F; need {n}")
    out = []
    for j in range(n):
        key = ctx.w_key[ws[j]]
        length = ctx.metrics[ws[j]].d(*ctx.system.cut_pair[ws[j]])
        iv = Interval(key, Fraction(0), length)
        out.append(ctx.bond_interval(subtrees[j], F, iv))
    return out


def end_ray(end: EndDescriptor, system: TreeSystem, steps: int) -> tuple:
    """Extend a template end by ``steps`` cycle steps inside a deeper system."""
    if end.classification == "redundant":
        raise KettlebellError("redundant end: its limit is a base point; use gamma on the witness")
    e = end
    for _ in range(steps):
        e = advance_end(e, system)
    return e.ray


# ----------------------------------------------------------------------------
# comparison with the completion


def _check(checks, name, ok, **detail):
    checks.append({"name": name, "ok": ok, **{k: _jsonable(v) for k, v in detail.items()}})


def _jsonable(v):
    if isinstance(v, Fraction):
        return format_rational(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (ArcPoint, frozenset)):
        return str(v) if isinstance(v, ArcPoint) else sorted(v)
    if isinstance(v, Interval):
        return v.to_json()
    return v


@dataclass(frozen=True)
class LimitReport:
    checks: tuple
    max_interval_length_per_n: tuple

    @property
    def failures(self) -> tuple:
        return tuple(c for c in self.checks if c["ok"] is False)

    def to_json(self) -> dict:
        return {"checks": list(self.checks), "failures": list(self.failures),
                "max_interval_length_per_n": [format_rational(x) for x in self.max_interval_length_per_n]}


def compare_limits(system: TreeSystem, metrics: MetricAssignment, k: int, samples: int = 40,
                   seed: int = 0, glued: GluedSpace | None = None, extra_depth: int = 3) -> LimitReport:
    """Finite-depth checks that threads and nested arcs behave like the completion.

    Base points are sampled from the depth-k total space; ends are the
    non-redundant template ends at depth k, followed ``extra_depth`` levels
    further in a deeper unfolding when one is available.
    """
    from .glue_space import glue
    from .tree_system import truncate

    rng = random.Random(seed)
    system = truncate(system, k)
    if glued is None:
        glued = glue(system, metrics if set(metrics.spaces) == set(system.tree.vertices)
                     else _restrict(metrics, system))
    ctx = KettlebellContext(system, glued.metrics, glued)
    chain = filtration(system)
    checks = []

    # (i) thread consistency for base points
    pts = sorted(glued.classes)
    base_sample = sorted(rng.sample(pts, min(samples, len(pts))))
    for x in base_sample:
        values = {}
        for F in chain:
            if x in ctx.classes_in(F):
                values[F] = x
        bad = []
        for i, F in enumerate(chain):
            for Fp in chain[i:]:
                if x in ctx.classes_in(Fp):
                    lhs = ctx.bond(Fp, F, x)
                    rhs = gamma(ctx, F, x, chain)
                    if lhs != rhs:
                        bad.append((len(F), len(Fp)))
        _check(checks, "thread_consistency", not bad, point=x, mismatches=bad)
        first = next(F for F in chain if x in ctx.classes_in(F))
        const = all(gamma(ctx, F, x, chain) == x for F in chain if F >= first)
        _check(checks, "thread_eventually_constant", const, point=x)

    # (ii) injectivity for base pairs: the largest member separates them
    top = chain[-1]
    kb = build_kettlebell(system, glued.metrics, top, ctx=ctx)
    for x, y in zip(base_sample, base_sample[1:]):
        _check(checks, "base_injectivity", kb.d(x, y) > 0, pair=[x, y], distance=kb.d(x, y))

    # ends, followed into a deeper unfolding
    per_n = {}
    t = system.template
    ends = [e for e in enumerate_ends(system) if e.classification == "non_redundant"]
    if not ends:
        undecided = [e for e in enumerate_ends(system) if e.classification == "undecided"]
        for e in undecided:
            _check(checks, "end_classification", None, ray=list(e.ray), note="undecided at this depth")
        return LimitReport(tuple(checks), ())
    deep = unfold_template(t, k + extra_depth)
    deep_metrics = assign_shrinking(deep)
    agree = all(deep_metrics[v] == glued.metrics[v] for v in system.tree.vertices)
    _check(checks, "deeper_metrics_extend", agree)
    dctx = KettlebellContext(deep, deep_metrics)
    ends = sorted(rng.sample(ends, min(samples, len(ends))), key=lambda e: (e.ray, e.ray_class))
    rays = {i: end_ray(e, deep, extra_depth) for i, e in enumerate(ends)}
    F0 = chain[0]
    # every W-node the extended ray offers: the prefix up to the frontier can
    # share a point with its predecessor for all k levels, so the tail is needed
    for i, e in enumerate(ends):
        n_max = len(_ray_ws(dctx, F0, rays[i])[0])
        ivs = boundary_gamma(dctx, F0, rays[i], n_max)
        length1 = ivs[0].hi
        nested = all(b.within(a) for a, b in zip(ivs, ivs[1:]))
        decay = all(iv.length <= Fraction(2) ** (-(n + 1) + 1) for n, iv in enumerate(ivs))
        for n, iv in enumerate(ivs, start=1):
            per_n[n] = max(per_n.get(n, Fraction(0)), iv.length)
        _check(checks, "nested_arcs", nested, end=i)
        _check(checks, "arc_decay", decay, end=i, lengths=[iv.length for iv in ivs])
        interior = any(iv.interior_of(length1) for iv in ivs[1:])
        _check(checks, "end_image_interior", interior, end=i)

    # (ii) end versus base point: the end's image is arc-interior in a member containing x
    for x in base_sample[: max(1, samples // 4)]:
        F = next(Fm for Fm in chain if x in dctx.classes_in(Fm))
        for i, e in enumerate(ends[: max(1, samples // 4)]):
            try:
                ivs = boundary_gamma(dctx, F, rays[i], 3)
            except Exception as exc:
                _check(checks, "end_vs_base", None, point=x, end=i, note=str(exc))
                continue
            length1 = ivs[0].hi
            hit = next((iv for iv in ivs[1:] if iv.interior_of(length1)), None)
            _check(checks, "end_vs_base", True if hit else None, point=x, end=i,
                   interval=hit if hit else ivs[-1])

    # end versus end: some member and level put their intervals apart
    for i, j in [(i, j) for i in range(len(ends)) for j in range(i + 1, len(ends))][: samples]:
        sep = _separate(dctx, chain, rays[i], rays[j])
        _check(checks, "end_vs_end", True if sep else None, ends=[i, j],
               witness=sep if sep else "not separated at this depth")
    lengths = tuple(per_n[n] for n in sorted(per_n))
    return LimitReport(tuple(checks), lengths)


def _restrict(metrics: MetricAssignment, system: TreeSystem) -> MetricAssignment:
    return MetricAssignment({u: metrics[u] for u in system.tree.vertices})


def _separate(ctx: KettlebellContext, chain, ray1, ray2):
    for F in chain:
        for n in range(1, 4):
            try:
                a = boundary_gamma(ctx, F, ray1, n)[-1]
                b = boundary_gamma(ctx, F, ray2, n)[-1]
            except KettlebellError:
                break
            la = ctx.arc_length(a.key)
            lb = ctx.arc_length(b.key)
            if a.key != b.key and a.interior_of(la) and b.interior_of(lb):
                return [len(F), n, "distinct arcs"]
            if a.key == b.key and (a.hi < b.lo or b.hi < a.lo):
                return [len(F), n, "disjoint intervals"]
    return None
