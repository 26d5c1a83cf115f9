"""The total space of a tree system, its ends and a finite-depth completion.

Distances in the total space are minima over efficient linking chains: a
chain follows the unique tree path and at every W-node on it chooses which
of the two glued points to pass through. ``glue`` evaluates all of them
with a dynamic program that runs outward from each source point.
"""

from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .exact_metric import (FiniteMetricSpace, MetricDomainError, PairCollection,
                           format_rational, halver_rescale)
from .tree_system import (W_LABELS, MetricAssignment, TreeSystem, compatibility_violations,
                          truncate)


class IncompatibleMetrics(ValueError):
    def __init__(self, edge):
        self.edge = edge
        super().__init__(f"metrics are not compatible along edge {edge}")


class InfeasibleEps(ValueError):
    def __init__(self, eps, minimal):
        self.eps = eps
        self.minimal = minimal
        super().__init__(f"eps={eps} is too small for this depth; need eps > {minimal}")


def class_id(node, point) -> str:
    return f"{node}:{point}"


def glue_classes(system: TreeSystem) -> tuple:
    """Union-find over (node, point). Returns (member -> class id, class id -> members)."""
    tree = system.tree
    parent = {}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for v in tree.v_nodes:
        for p in system.constituent[v].points:
            parent[(v, p)] = (v, p)
    for w in tree.w_nodes:
        for x in system.cut_pair[w]:
            parent[(w, x)] = (w, x)
    for v, w in tree.edges:
        for x, p in system.injection[(v, w)].items():
            ra, rb = find((w, x)), find((v, p))
            if ra != rb:
                parent[ra] = rb
    dist = tree.distances()
    groups = {}
    for m in parent:
        groups.setdefault(find(m), []).append(m)
    member_of, members = {}, {}
    for ms in groups.values():
        rep = min(ms, key=lambda m: (dist[m[0]], m[0], str(m[1])))
        cid = class_id(*rep)
        members[cid] = frozenset(ms)
        for m in ms:
            member_of[m] = cid
    return member_of, members


@dataclass(frozen=True, eq=False)
class GluedSpace:
    classes: tuple
    members: Mapping
    member_of: Mapping
    space: FiniteMetricSpace
    system: TreeSystem
    metrics: MetricAssignment

    def d(self, a, b) -> Fraction:
        return self.space.d(a, b)

    def cls(self, node, point) -> str:
        return self.member_of[(node, point)]

    def classes_of(self, node) -> list:
        if self.system.tree.is_v(node):
            pts = self.system.constituent[node].points
        else:
            pts = self.system.cut_pair[node]
        return sorted({self.member_of[(node, p)] for p in pts})

    def to_json(self) -> dict:
        return {
            "classes": list(self.classes),
            "members": {c: sorted(f"{n}:{p}" for n, p in self.members[c]) for c in self.classes},
            "dist": self.space.to_json()["dist"],
        }


def _v_members(members, tree) -> dict:
    return {c: sorted((m for m in ms if tree.is_v(m[0])), key=lambda m: (m[0], str(m[1])))
            for c, ms in members.items()}


def _dp_from(system: TreeSystem, metrics: MetricAssignment, v0, p0, back: bool = False):
    """Shortest efficient chain from (v0, p0) to every (v, q) in a V-space."""
    tree = system.tree
    rows = {v0: {q: metrics[v0].d(p0, q) for q in metrics[v0].points}}
    parents = {v0: None}
    choice = {}
    queue = deque([v0])
    while queue:
        v = queue.popleft()
        dv = rows[v]
        for w in tree.neighbors(v):
            if w in parents:
                continue
            parents[w] = v
            via = {z: dv[system.injection[(v, w)][z]] for z in system.cut_pair[w]}
            for v2 in tree.neighbors(w):
                if v2 == v:
                    continue
                parents[v2] = w
                m2 = metrics[v2]
                inj = system.injection[(v2, w)]
                row, arg = {}, {}
                for q in m2.points:
                    best, best_z = None, None
                    for z in system.cut_pair[w]:
                        cand = via[z] + m2.d(inj[z], q)
                        if best is None or cand < best:
                            best, best_z = cand, z
                    row[q] = best
                    arg[q] = best_z
                rows[v2] = row
                if back:
                    choice[v2] = arg
                queue.append(v2)
    if back:
        return rows, parents, choice
    return rows


def glue(system: TreeSystem, metrics: MetricAssignment, threads: int = 1) -> GluedSpace:
    bad = compatibility_violations(system, metrics)
    if bad:
        raise IncompatibleMetrics(bad[0])
    member_of, members = glue_classes(system)
    tree = system.tree
    dist = tree.distances()

    def depth_of(c):
        return min(dist[n] for n, _ in members[c])

    classes = tuple(sorted(members, key=lambda c: (depth_of(c), c)))
    vmem = _v_members(members, tree)
    index = {c: i for i, c in enumerate(classes)}

    def row_for(c):
        best = [None] * len(classes)
        for v, p in vmem[c]:
            rows = _dp_from(system, metrics, v, p)
            for c2 in classes:
                j = index[c2]
                for v2, q in vmem[c2]:
                    val = rows[v2][q]
                    if best[j] is None or val < best[j]:
                        best[j] = val
        return best

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            table = list(pool.map(row_for, classes))
    else:
        table = [row_for(c) for c in classes]
    for i in range(len(classes)):
        table[i][i] = Fraction(0)
        for j in range(i):
            # both directions are computed; compatible metrics make them equal
            m = min(table[i][j], table[j][i])
            table[i][j] = table[j][i] = m
    skeleton = set()
    for v in tree.v_nodes:
        for a, b in system.constituent[v].skeleton_edges():
            ca, cb = member_of[(v, a)], member_of[(v, b)]
            if ca != cb:
                skeleton.add(frozenset((ca, cb)))
    space = FiniteMetricSpace(classes, tuple(tuple(r) for r in table), skeleton=frozenset(skeleton))
    return GluedSpace(classes, members, member_of, space, system, metrics)


def efficient_chain(glued: GluedSpace, a, b) -> tuple:
    """A realizing chain from class ``a`` to class ``b`` as ((node, point), ...) hops, plus its length."""
    system, metrics = glued.system, glued.metrics
    vmem = _v_members(glued.members, system.tree)
    best = None
    for v, p in vmem[a]:
        rows, parents, choice = _dp_from(system, metrics, v, p, back=True)
        for v2, q in vmem[b]:
            val = rows[v2][q]
            if best is None or val < best[0]:
                best = (val, v, p, v2, q, parents, choice)
    val, v, p, v2, q, parents, choice = best
    hops = [(v2, q)]
    cur_v, cur_q = v2, q
    while cur_v != v:
        w = parents[cur_v]
        z = choice[cur_v][cur_q]
        prev = parents[w]
        hops.append((cur_v, system.injection[(cur_v, w)][z]))
        hops.append((w, z))
        cur_v, cur_q = prev, system.injection[(prev, w)][z]
        hops.append((cur_v, cur_q))
    hops.append((v, p))
    return tuple(reversed(hops)), val


def chain_length(metrics: MetricAssignment, hops, system: TreeSystem) -> Fraction:
    total = Fraction(0)
    for (n1, p1), (n2, p2) in zip(hops, hops[1:]):
        if n1 == n2 and system.tree.is_v(n1):
            total += metrics[n1].d(p1, p2)
    return total


# ----------------------------------------------------------------------------
# invariant checks


def embedding_violations(glued: GluedSpace) -> list:
    out = []
    for v in glued.system.tree.v_nodes:
        m = glued.metrics[v]
        for p in m.points:
            for q in m.points:
                if glued.d(glued.cls(v, p), glued.cls(v, q)) != m.d(p, q):
                    out.append((v, p, q))
    return out


@dataclass(frozen=True)
class ShrinkingReport:
    rows: tuple                   # (v, k, glued diameter, bound)
    violations: tuple
    invariant_violations: tuple   # (w, k, d(pair), bound) for pairs one step outside T_k

    @property
    def ok(self) -> bool:
        return not self.violations and not self.invariant_violations

    def to_json(self) -> dict:
        def fmt(r):
            return [r[0], r[1], format_rational(r[2]), format_rational(r[3])]
        return {"rows": [fmt(r) for r in self.rows], "violations": [fmt(r) for r in self.violations],
                "invariant_violations": [fmt(r) for r in self.invariant_violations]}


def shrinking_report(glued: GluedSpace) -> ShrinkingReport:
    tree = glued.system.tree
    dist = tree.distances()
    rows, bad, inv = [], [], []
    for v in tree.v_nodes:
        k = dist[v] // 2
        diam = glued.space.diameter_of(glued.classes_of(v))
        bound = Fraction(1, 2 ** k)
        rows.append((v, k, diam, bound))
        if diam > bound:
            bad.append((v, k, diam, bound))
    for w in tree.w_nodes:
        k = (dist[w] - 1) // 2
        a, b = glued.classes_of(w)
        d = glued.d(a, b)
        bound = Fraction(1, 2 ** (k + 1))
        if d > bound:
            inv.append((w, k, d, bound))
    return ShrinkingReport(tuple(rows), tuple(bad), tuple(inv))


# ----------------------------------------------------------------------------
# ends


@dataclass(frozen=True)
class EndDescriptor:
    """An end of the tree seen from a truncation.

    ``ray`` is the finite part from the base to a frontier W-node. For
    template systems the end continues into child ``entry`` of that W-node
    and then repeats ``cycle`` forever, starting at position ``phase``.
    """

    ray: tuple
    classification: str                  # "redundant" | "non_redundant" | "undecided"
    depth: int
    entry: int | None = None
    cycle: tuple = ()
    phase: int = 0
    ray_class: int | None = None
    witness: tuple | None = None         # (W-node on the ray, label) of the persistent point

    @property
    def frontier(self):
        return self.ray[-1]

    def to_json(self) -> dict:
        out = {"ray": list(self.ray), "classification": self.classification, "depth": self.depth}
        if self.classification == "undecided":
            out["classification"] = f"undecided_at_depth({self.depth})"
        if self.entry is not None:
            out["entry"] = self.entry
            out["cycle"] = [f"{s}:{i}" for s, i in self.cycle]
            out["phase"] = self.phase
            out["ray_class"] = self.ray_class
        if self.witness is not None:
            out["witness"] = [str(x) for x in self.witness]
        return out


def _entry_type(system: TreeSystem, w, entry):
    t = system.template
    v, slot = system.w_slot[w]
    children = t.types[system.node_type[v]].slot(slot)[2]
    return children[entry] if entry < len(children) else None


def _walk(system: TreeSystem, w, entry, cycle, phase):
    """Yield (type, cycle position, anchor, slot pair, next type) along the periodic tail."""
    t = system.template
    tname = _entry_type(system, w, entry)
    pos = phase % len(cycle)
    while tname is not None:
        ty = t.types[tname]
        slot, idx = cycle[pos]
        try:
            _, pair, children = ty.slot(slot)
        except KeyError:
            return
        if idx >= len(children):
            return
        yield tname, pos, ty.anchor, pair, children[idx]
        tname = children[idx]
        pos = (pos + 1) % len(cycle)


def _classify_tail(system: TreeSystem, w, entry, cycle, phase):
    """Exact redundancy test by simulating (cycle position, type, carried label).

    Step n compares the pair entering a V-space with the pair leaving it. A
    streak continues while the carried point is in the outgoing pair; the
    end is redundant iff the eventual loop of states contains no break.
    """
    carried = None
    seen = {}
    breaks = []
    streak_start = None
    for step, (tname, pos, anchor, pair, _) in enumerate(_walk(system, w, entry, cycle, phase)):
        shared = set(anchor) & set(pair)
        if carried is not None and anchor[carried] in pair:
            carried = pair.index(anchor[carried])
            breaks.append(False)
        elif shared:
            q = next(iter(shared))
            streak_start = (step, anchor.index(q))
            carried = pair.index(q)
            breaks.append(True)
        else:
            carried = None
            streak_start = None
            breaks.append(True)
        state = (pos, tname, carried)
        if state in seen:
            if carried is None or any(breaks[seen[state] + 1:]):
                return "non_redundant", None
            return "redundant", streak_start
        seen[state] = step
    return "invalid", None


def enumerate_ends(system: TreeSystem, k: int | None = None) -> list:
    if k is not None:
        system = truncate(system, k)
    tree = system.tree
    dist = tree.distances()
    depth = max((dist[v] // 2 for v in tree.v_nodes), default=0)
    out = []
    t = system.template
    for w in sorted(tree.frontier):
        ray = tuple(tree.path(tree.base, w))
        if t is None or not t.ray_classes or system.w_slot is None:
            out.append(EndDescriptor(ray, "undecided", depth))
            continue
        for rc, cycle in enumerate(t.ray_classes):
            cls, streak = _classify_tail(system, w, 0, cycle, 0)
            if cls == "invalid":
                continue
            witness = None
            if cls == "redundant":
                steps, label = streak
                # step 0 means the persistent point already lies in the frontier pair
                witness = (w if steps == 0 else f"{w}+{steps}", W_LABELS[label])
            out.append(EndDescriptor(ray, cls, depth, 0, cycle, 0, rc, witness))
    return out


def advance_end(end: EndDescriptor, system: TreeSystem) -> EndDescriptor:
    """The same end seen from one level deeper: extend the ray by one cycle step."""
    if end.entry is None:
        raise ValueError("only template ends can be advanced")
    parent, slot = system.w_slot[end.frontier]
    child = f"{parent}/{slot}.{end.entry}"
    s, idx = end.cycle[end.phase % len(end.cycle)]
    w2 = "w" + child[1:] + "/" + s
    if w2 not in system.cut_pair:
        raise ValueError(f"{w2} is not in the system; unfold deeper")
    witness = end.witness
    return EndDescriptor(end.ray + (child, w2), end.classification, end.depth + 1, idx,
                         end.cycle, end.phase + 1, end.ray_class, witness)


def _unit_ratio(system: TreeSystem, tname, slot, cache) -> Fraction:
    key = (tname, slot)
    if key not in cache:
        ty = system.template.types[tname]
        coll = PairCollection(tuple(frozenset(p) for _, p, _ in ty.slots) + (frozenset(ty.anchor),))
        unit = halver_rescale(ty.space, coll, frozenset(ty.anchor), 1)
        cache[key] = unit.d(*ty.slot(slot)[1])
    return cache[key]


def tail_bound(system: TreeSystem, metrics: MetricAssignment, end: EndDescriptor,
               _cache=None) -> Fraction:
    """Exact upper bound on the distance from the frontier pair to the end.

    Sums the diameters of the V-spaces along the periodic tail: a finite
    prefix plus a geometric series, evaluated in closed form. Valid for
    metrics produced by ``assign_shrinking``.
    """
    cache = {} if _cache is None else _cache
    w = end.frontier
    x, y = system.cut_pair[w]
    diam = metrics[w].d(x, y)
    seen = {}
    history = []     # (diameter, step ratio)
    for tname, pos, _, _, _ in _walk(system, w, end.entry, end.cycle, end.phase):
        state = (pos, tname)
        if state in seen:
            i0 = seen[state]
            r = Fraction(1)
            for _, q in history[i0:]:
                r *= q
            return (sum(h[0] for h in history[:i0])
                    + sum(h[0] for h in history[i0:]) / (1 - r))
        seen[state] = len(history)
        ratio = _unit_ratio(system, tname, end.cycle[pos][0], cache)
        history.append((diam, ratio))
        diam *= ratio
    return sum(h[0] for h in history)


# ----------------------------------------------------------------------------
# completion approximation


@dataclass(frozen=True, eq=False)
class CompletionApprox:
    base: GluedSpace
    depth: int
    end_points: tuple
    end_anchor: tuple                # class id of the frontier point standing in for each end
    error: tuple                     # per-end exact bound on d(end, anchor)
    dist_to_ends: tuple              # rows over classes, columns over ends
    end_dist: tuple                  # end x end estimates
    undecided: tuple = ()
    net: tuple = ()
    eps: Fraction | None = None

    def lower_bound(self, i, j) -> Fraction:
        return self.end_dist[i][j] - self.error[i] - self.error[j]

    def to_json(self) -> dict:
        fr = format_rational
        return {
            "depth": self.depth,
            "eps": None if self.eps is None else fr(self.eps),
            "ends": [e.to_json() for e in self.end_points],
            "end_anchor": list(self.end_anchor),
            "error": [fr(e) for e in self.error],
            "dist_to_ends": {c: [fr(v) for v in row]
                             for c, row in zip(self.base.classes, self.dist_to_ends)},
            "end_dist": [[fr(v) for v in row] for row in self.end_dist],
            "undecided": [e.to_json() for e in self.undecided],
            "net": list(self.net),
        }


def minimal_eps(k: int) -> Fraction:
    return Fraction(2) ** (-k + 2)


def greedy_net(space: FiniteMetricSpace, radius: Fraction, order: Iterable | None = None) -> list:
    net = []
    for p in (space.points if order is None else order):
        if all(space.d(p, q) > radius for q in net):
            net.append(p)
    return net


def approximate_completion(glued: GluedSpace, k: int, eps) -> CompletionApprox:
    """Adjoin the non-redundant ends seen at depth ``k`` and build an eps-net.

    Each end is represented by the first point of its frontier pair; the
    stated error is an exact bound on the distance between the two, capped
    at ``2^(1-k)``. Refuses when ``eps <= 2^(2-k)``.
    """
    eps = Fraction(eps)
    need = minimal_eps(k)
    if eps <= need:
        raise InfeasibleEps(eps, need)
    system = glued.system
    dist = system.tree.distances()
    depth = max(dist[v] // 2 for v in system.tree.v_nodes)
    if depth != k:
        raise MetricDomainError(f"glued space has depth {depth}, expected {k}")
    ends = enumerate_ends(system)
    adjoined = [e for e in ends if e.classification == "non_redundant"]
    undecided = tuple(e for e in ends if e.classification == "undecided")
    cap = Fraction(2) ** (-k + 1)
    cache = {}
    anchors, errors = [], []
    for e in adjoined:
        anchors.append(glued.cls(e.frontier, system.cut_pair[e.frontier][0]))
        errors.append(min(cap, tail_bound(system, glued.metrics, e, cache)))
    dist_to_ends = tuple(tuple(glued.d(c, a) for a in anchors) for c in glued.classes)
    end_dist = tuple(tuple(glued.d(a, b) for b in anchors) for a in anchors)
    net = greedy_net(glued.space, eps / 2)
    return CompletionApprox(glued, k, tuple(adjoined), tuple(anchors), tuple(errors),
                            dist_to_ends, end_dist, undecided, tuple(net), eps)


def net_coverage_failures(approx: CompletionApprox) -> list:
    """Classes and ends not certified within eps of the net (empty when the net is valid)."""
    g = approx.base
    out = []
    for c in g.classes:
        if not any(g.d(c, n) <= approx.eps for n in approx.net):
            out.append(c)
    for i, e in enumerate(approx.end_points):
        if not any(g.d(approx.end_anchor[i], n) + approx.error[i] <= approx.eps for n in approx.net):
            out.append(e)
    return out


# ----------------------------------------------------------------------------
# components at cut pairs


def _components(nodes, neighbours) -> list:
    seen, comps = set(), []
    for s in nodes:
        if s in seen:
            continue
        comp = {s}
        seen.add(s)
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for z in neighbours(u):
                if z not in seen:
                    seen.add(z)
                    comp.add(z)
                    queue.append(z)
        comps.append(frozenset(comp))
    return sorted(comps, key=min)


def components_without(glued: GluedSpace, removed: Iterable) -> list:
    """Components of the glued skeleton after deleting the given classes."""
    gone = set(removed)
    adj = {c: [] for c in glued.classes if c not in gone}
    for a, b in glued.space.skeleton_edges():
        if a in adj and b in adj:
            adj[a].append(b)
            adj[b].append(a)
    return _components(list(adj), adj.__getitem__)


def eps_chain_components(glued: GluedSpace, removed: Iterable, eps) -> list:
    """Components of the relation d <= eps on the classes left after removal."""
    eps = Fraction(eps)
    gone = set(removed)
    rest = [c for c in glued.classes if c not in gone]
    return _components(rest, lambda u: [z for z in rest if z != u and glued.d(u, z) <= eps])


@dataclass(frozen=True)
class Split:
    w: str
    components: tuple      # frozensets of class ids (plus "end#i" labels for completions)
    tree_sides: tuple      # components of T minus w, index-aligned when consistent
    consistent: bool

    def to_json(self) -> dict:
        return {"w": self.w, "consistent": self.consistent,
                "components": [sorted(map(str, c)) for c in self.components],
                "tree_sides": [sorted(s) for s in self.tree_sides]}


def split_at_pair(obj, w) -> Split:
    """Components of the total space minus M_w, matched with the sides of w in T."""
    approx = obj if isinstance(obj, CompletionApprox) else None
    glued = approx.base if approx else obj
    tree = glued.system.tree
    if w not in tree.w_nodes:
        raise ValueError(f"unknown W-node {w!r}")
    if w in tree.frontier:
        raise MetricDomainError(f"{w} is a frontier W-node; its split is not determined at this depth")
    cut = set(glued.classes_of(w))
    comps = components_without(glued, cut)
    sides = tree.components_without([w])
    ordered = []
    for side in sides:
        cls = set()
        for u in side:
            cls.update(glued.classes_of(u))
        cls -= cut
        ordered.append(frozenset().union(*[c for c in comps if c & cls]))
    consistent = len(comps) == len(sides) and sorted(ordered, key=min) == comps
    if approx is not None:
        # an end lies on the side of w containing its frontier W-node
        labelled = [set(c) for c in ordered]
        for i, e in enumerate(approx.end_points):
            for s, side in enumerate(sides):
                if e.frontier in side:
                    labelled[s].add(f"end#{i}")
        ordered = [frozenset(c) for c in labelled]
    if not consistent:
        return Split(w, tuple(comps), tuple(sides), False)
    return Split(w, tuple(ordered), tuple(sides), True)


def split_to_dot(glued: GluedSpace, split: Split) -> str:
    palette = ["red", "blue", "green", "orange", "purple", "brown", "cyan", "magenta"]
    colour = {}
    for i, comp in enumerate(split.components):
        for c in comp:
            colour[c] = palette[i % len(palette)]
    lines = ["graph split {"]
    for c in glued.classes:
        lines.append(f'  "{c}" [color={colour.get(c, "black")}];')
    for a, b in glued.space.skeleton_edges():
        lines.append(f'  "{a}" -- "{b}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
