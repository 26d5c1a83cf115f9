"""Finite bipartite trees carrying constituent spaces glued along two-point spaces.

A tree system has constituent spaces at V-nodes, two-point spaces at
W-nodes and an injection for every edge. Truncations keep the W-nodes just
outside the cut as *frontier* markers so that the peripheral pairs they
carry remain visible.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Mapping

from .exact_metric import (FiniteMetricSpace, MetricDomainError, PairCollection,
                           halver_rescale)

W_LABELS = ("x", "y")


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    witness: tuple = ()

    def to_json(self) -> dict:
        return {"code": self.code, "message": self.message,
                "witness": [str(w) for w in self.witness]}


class TreeSystemError(ValueError):
    def __init__(self, diagnostics: Iterable[Diagnostic]):
        self.diagnostics = tuple(diagnostics)
        super().__init__("; ".join(f"{d.code}: {d.message}" for d in self.diagnostics))


@dataclass(frozen=True, eq=False)
class BipartiteTree:
    v_nodes: tuple
    w_nodes: tuple
    edges: tuple
    base: str
    frontier: frozenset = frozenset()
    _adj: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "v_nodes", tuple(sorted(self.v_nodes)))
        object.__setattr__(self, "w_nodes", tuple(sorted(self.w_nodes)))
        object.__setattr__(self, "edges", tuple(sorted((str(v), str(w)) for v, w in self.edges)))
        object.__setattr__(self, "frontier", frozenset(self.frontier))
        adj = {u: [] for u in self.v_nodes + self.w_nodes}
        for v, w in self.edges:
            if v in adj and w in adj:
                adj[v].append(w)
                adj[w].append(v)
        for u in adj:
            adj[u].sort()
        object.__setattr__(self, "_adj", adj)

    def __eq__(self, other):
        return (isinstance(other, BipartiteTree) and self.v_nodes == other.v_nodes
                and self.w_nodes == other.w_nodes and self.edges == other.edges
                and self.base == other.base and self.frontier == other.frontier)

    def __hash__(self):
        return hash((self.v_nodes, self.w_nodes, self.edges, self.base, self.frontier))

    @property
    def vertices(self) -> tuple:
        return self.v_nodes + self.w_nodes

    def is_v(self, u) -> bool:
        return u in self._vset

    @property
    def _vset(self):
        s = self.__dict__.get("_vs")
        if s is None:
            s = frozenset(self.v_nodes)
            object.__setattr__(self, "_vs", s)
        return s

    def neighbors(self, u) -> list:
        return self._adj[u]

    def distances(self, source=None) -> dict:
        src = self.base if source is None else source
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for z in self._adj[u]:
                if z not in dist:
                    dist[z] = dist[u] + 1
                    queue.append(z)
        return dist

    def parents(self, source=None) -> dict:
        src = self.base if source is None else source
        par = {src: None}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for z in self._adj[u]:
                if z not in par:
                    par[z] = u
                    queue.append(z)
        return par

    def path(self, a, b) -> list:
        par = self.parents(a)
        if b not in par:
            raise ValueError(f"{b!r} not reachable from {a!r}")
        out = [b]
        while out[-1] != a:
            out.append(par[out[-1]])
        return out[::-1]

    def components_without(self, removed: Iterable) -> list:
        gone = set(removed)
        seen = set()
        comps = []
        for s in self.vertices:
            if s in gone or s in seen:
                continue
            comp = {s}
            queue = deque([s])
            seen.add(s)
            while queue:
                u = queue.popleft()
                for z in self._adj[u]:
                    if z not in gone and z not in seen:
                        seen.add(z)
                        comp.add(z)
                        queue.append(z)
            comps.append(frozenset(comp))
        return sorted(comps, key=lambda c: min(c))

    def interior_w(self) -> tuple:
        return tuple(w for w in self.w_nodes if w not in self.frontier)

    def to_json(self) -> dict:
        return {"v_nodes": list(self.v_nodes), "w_nodes": list(self.w_nodes),
                "edges": [list(e) for e in self.edges], "frontier": sorted(self.frontier)}


# ----------------------------------------------------------------------------
# periodic templates


@dataclass(frozen=True)
class TemplateType:
    name: str
    space: FiniteMetricSpace
    anchor: tuple | None
    slots: tuple  # ((slot_name, (p, q), (child_type, ...)), ...)

    def slot(self, name):
        for s in self.slots:
            if s[0] == name:
                return s
        raise KeyError(f"type {self.name!r} has no slot {name!r}")


@dataclass(frozen=True)
class Template:
    types: Mapping
    root: str
    depth: int = 3
    ray_classes: tuple = ()

    def to_json(self) -> dict:
        types = {}
        for name in sorted(self.types):
            t = self.types[name]
            entry = {"space": t.space.to_json(),
                     "slots": {s: {"pair": list(p), "children": list(ch)} for s, p, ch in t.slots}}
            if t.anchor is not None:
                entry["anchor"] = list(t.anchor)
            types[name] = entry
        return {"types": types, "root": self.root, "depth": self.depth,
                "ray_classes": [[_step_token(s) for s in rc] for rc in self.ray_classes]}


def _step_token(step) -> str:
    slot, idx = step
    return slot if idx == 0 else f"{slot}:{idx}"


def parse_step(token: str) -> tuple:
    if ":" in token:
        s, _, i = token.partition(":")
        return (s, int(i))
    return (token, 0)


def template_from_json(data: Mapping) -> Template:
    types = {}
    for name, entry in data["types"].items():
        space = FiniteMetricSpace.from_json(entry["space"])
        anchor = tuple(entry["anchor"]) if entry.get("anchor") is not None else None
        slots = []
        for sname in entry.get("slots", {}):
            s = entry["slots"][sname]
            slots.append((sname, tuple(s["pair"]), tuple(s.get("children", ()))))
        types[name] = TemplateType(name, space, anchor, tuple(slots))
    t = Template(types, data["root"], int(data.get("depth", 3)),
                 tuple(tuple(parse_step(tok) for tok in rc) for rc in data.get("ray_classes", ())))
    _check_template(t)
    return t


def _check_template(t: Template) -> None:
    diags = []
    if t.root not in t.types:
        diags.append(Diagnostic("template", f"root type {t.root!r} undefined"))
    for name, ty in t.types.items():
        pairs = [frozenset(p) for _, p, _ in ty.slots]
        if ty.anchor is not None:
            pairs.append(frozenset(ty.anchor))
        elif name != t.root:
            diags.append(Diagnostic("template", f"non-root type {name!r} needs an anchor", (name,)))
        for p in pairs:
            if len(p) != 2 or not all(x in ty.space for x in p):
                diags.append(Diagnostic("template", f"bad pair {sorted(p)} in type {name!r}", (name,)))
        for p, q in combinations(pairs, 2):
            if len(p & q) > 1:
                diags.append(Diagnostic("image_overlap", f"image overlap = 2 in type {name!r}", (name,)))
        for _, _, children in ty.slots:
            if not children:
                diags.append(Diagnostic("valence", f"slot without children in type {name!r}", (name,)))
            for c in children:
                if c not in t.types or t.types[c].anchor is None:
                    diags.append(Diagnostic("template", f"child type {c!r} undefined or unanchored"))
    if diags:
        raise TreeSystemError(diags)


# ----------------------------------------------------------------------------
# tree systems


@dataclass(frozen=True, eq=False)
class TreeSystem:
    tree: BipartiteTree
    constituent: Mapping          # V-id -> FiniteMetricSpace
    cut_pair: Mapping             # W-id -> (x, y)
    injection: Mapping            # (V-id, W-id) -> {w-point: v-point}
    template: Template | None = None
    node_type: Mapping | None = None   # V-id -> template type (template systems only)
    w_slot: Mapping | None = None      # W-id -> (parent V-id, slot) (template systems only)

    def __eq__(self, other):
        return (isinstance(other, TreeSystem) and self.tree == other.tree
                and dict(self.constituent) == dict(other.constituent)
                and {k: tuple(v) for k, v in self.cut_pair.items()}
                == {k: tuple(v) for k, v in other.cut_pair.items()}
                and {k: dict(v) for k, v in self.injection.items()}
                == {k: dict(v) for k, v in other.injection.items()})

    __hash__ = None

    def image(self, v, w) -> tuple:
        inj = self.injection[(v, w)]
        return tuple(inj[x] for x in self.cut_pair[w])

    def edges_at(self, v) -> list:
        return [(v, w) for w in self.tree.neighbors(v)]

    def collection_at(self, v) -> PairCollection:
        return PairCollection(tuple(frozenset(self.image(v, w)) for w in self.tree.neighbors(v)))

    def level(self, v) -> int:
        return self.tree.distances()[v] // 2

    def to_json(self) -> dict:
        out = {"base": self.tree.base}
        if self.template is not None and self.node_type is not None:
            out["template"] = self.template.to_json()
            out["depth"] = max((self.level(v) for v in self.tree.v_nodes), default=0)
            return out
        out["tree"] = self.tree.to_json()
        out["spaces"] = {v: self.constituent[v].to_json() for v in self.tree.v_nodes}
        for w in self.tree.w_nodes:
            out["spaces"][w] = {"points": list(self.cut_pair[w])}
        out["injections"] = {f"{v}|{w}": {str(k): str(x) for k, x in self.injection[(v, w)].items()}
                             for v, w in self.tree.edges}
        return out


def validate_tree_system(tree: BipartiteTree, constituent: Mapping, cut_pair: Mapping,
                         injection: Mapping) -> list:
    diags = []
    vset, wset = set(tree.v_nodes), set(tree.w_nodes)
    if vset & wset:
        diags.append(Diagnostic("bipartite", "ids shared by V and W", tuple(sorted(vset & wset))))
    if tree.base not in vset:
        diags.append(Diagnostic("base", f"base {tree.base!r} is not a V-node", (tree.base,)))
    for v, w in tree.edges:
        if v not in vset or w not in wset:
            diags.append(Diagnostic("bipartite", f"edge ({v}, {w}) does not join V to W", (v, w)))
    if diags:
        return diags
    n = len(tree.vertices)
    if n and len(tree.edges) != n - 1:
        diags.append(Diagnostic("cycle" if len(tree.edges) >= n else "disconnected",
                                f"{len(tree.edges)} edges on {n} vertices"))
    reach = tree.distances()
    if len(reach) != n:
        missing = sorted(set(tree.vertices) - reach.keys())
        diags.append(Diagnostic("disconnected", "tree is not connected", tuple(missing[:3])))
    if diags:
        return diags
    for w in tree.w_nodes:
        val = len(tree.neighbors(w))
        if w not in tree.frontier and val < 2:
            diags.append(Diagnostic("valence", f"interior W-node {w} has valence {val}", (w,)))
        if w in tree.frontier and val != 1:
            diags.append(Diagnostic("valence", f"frontier W-node {w} must have valence 1", (w,)))
    for v in tree.v_nodes:
        if v not in constituent:
            diags.append(Diagnostic("missing_space", f"no constituent space for {v}", (v,)))
    for w in tree.w_nodes:
        cp = cut_pair.get(w)
        if cp is None or len(cp) != 2 or cp[0] == cp[1]:
            diags.append(Diagnostic("cut_pair_size", f"M_{w} must have exactly two points", (w,)))
    if diags:
        return diags
    for v, w in tree.edges:
        inj = injection.get((v, w))
        if inj is None:
            diags.append(Diagnostic("missing_injection", f"no injection for edge ({v}, {w})", (v, w)))
            continue
        space = constituent[v]
        imgs = []
        for x in cut_pair[w]:
            if x not in inj:
                diags.append(Diagnostic("missing_injection", f"i_({v},{w}) undefined at {x}", (v, w, x)))
                continue
            if inj[x] not in space:
                diags.append(Diagnostic("unknown_point", f"i_({v},{w})({x}) = {inj[x]} not in M_{v}",
                                        (v, w, x)))
            imgs.append(inj[x])
        if len(imgs) == 2 and imgs[0] == imgs[1]:
            diags.append(Diagnostic("non_injective", f"i_({v},{w}) is not injective", (v, w)))
    if diags:
        return diags
    for v in tree.v_nodes:
        ws = tree.neighbors(v)
        for w1, w2 in combinations(ws, 2):
            a = {injection[(v, w1)][x] for x in cut_pair[w1]}
            b = {injection[(v, w2)][x] for x in cut_pair[w2]}
            if len(a & b) > 1:
                diags.append(Diagnostic("image_overlap", f"image overlap = {len(a & b)} at {v}",
                                        (v, w1, w2)))
        if ws and len(constituent[v]) < 2:
            diags.append(Diagnostic("anchor", f"M_{v} has fewer than two points", (v,)))
    return diags


def make_tree_system(tree: BipartiteTree, constituent: Mapping, cut_pair: Mapping,
                     injection: Mapping, **extra) -> TreeSystem:
    diags = validate_tree_system(tree, constituent, cut_pair, injection)
    if diags:
        raise TreeSystemError(diags)
    return TreeSystem(tree, dict(constituent), {w: tuple(p) for w, p in cut_pair.items()},
                      {k: dict(v) for k, v in injection.items()}, **extra)


def build_tree_system(spec: Mapping, depth: int | None = None) -> TreeSystem:
    """Build and validate a tree system from a parsed instance.

    Instances either list the tree explicitly or give a periodic template,
    which is unfolded to ``depth`` (or the template's own default depth).
    """
    if "template" in spec and spec["template"] is not None:
        t = template_from_json(spec["template"])
        k = depth if depth is not None else int(spec.get("depth", t.depth))
        return unfold_template(t, k)
    try:
        tree_d = spec["tree"]
        spaces = spec["spaces"]
        injections = spec["injections"]
    except KeyError as exc:
        raise TreeSystemError([Diagnostic("schema", f"missing field {exc.args[0]!r}")]) from None
    tree = BipartiteTree(tuple(tree_d.get("v_nodes", ())), tuple(tree_d.get("w_nodes", ())),
                         tuple(tuple(e) for e in tree_d.get("edges", ())),
                         spec.get("base", tree_d.get("base")),
                         frozenset(tree_d.get("frontier", ())))
    constituent, cut_pair = {}, {}
    for v in tree.v_nodes:
        if v in spaces:
            constituent[v] = FiniteMetricSpace.from_json(spaces[v])
    for w in tree.w_nodes:
        if w in spaces:
            cut_pair[w] = tuple(str(p) for p in spaces[w]["points"])
    injection = {}
    for key, mapping in injections.items():
        v, _, w = key.partition("|")
        injection[(v, w)] = {str(a): str(b) for a, b in mapping.items()}
    system = make_tree_system(tree, constituent, cut_pair, injection)
    if depth is not None:
        system = truncate(system, depth)
    return system


def unfold_template(t: Template, k: int) -> TreeSystem:
    if k < 0:
        raise MetricDomainError("depth must be non-negative")
    root = "v"
    v_nodes, w_nodes, edges = [root], [], []
    constituent = {root: t.types[t.root].space}
    node_type = {root: t.root}
    cut_pair, injection, w_slot, frontier = {}, {}, {}, set()
    layer = [root]
    for level in range(k + 1):
        nxt = []
        for v in layer:
            ty = t.types[node_type[v]]
            for sname, (p, q), children in ty.slots:
                w = "w" + v[1:] + "/" + sname
                w_nodes.append(w)
                edges.append((v, w))
                cut_pair[w] = W_LABELS
                injection[(v, w)] = {"x": p, "y": q}
                w_slot[w] = (v, sname)
                if level == k:
                    frontier.add(w)
                    continue
                for i, cname in enumerate(children):
                    c = f"{v}/{sname}.{i}"
                    cty = t.types[cname]
                    v_nodes.append(c)
                    node_type[c] = cname
                    constituent[c] = cty.space
                    edges.append((c, w))
                    injection[(c, w)] = {"x": cty.anchor[0], "y": cty.anchor[1]}
                    nxt.append(c)
        layer = nxt
    tree = BipartiteTree(tuple(v_nodes), tuple(w_nodes), tuple(edges), root, frozenset(frontier))
    return make_tree_system(tree, constituent, cut_pair, injection, template=t,
                            node_type=node_type, w_slot=w_slot)


def truncate(system: TreeSystem, k: int) -> TreeSystem:
    """Keep vertices within tree distance 2k of the base; W-nodes at distance
    2k+1 survive as frontier markers (with only their inward edge)."""
    if k < 0:
        raise MetricDomainError("depth must be non-negative")
    tree = system.tree
    dist = tree.distances()
    keep = {u for u, d in dist.items() if d <= 2 * k}
    fr = {w for w in tree.w_nodes if dist[w] == 2 * k + 1} | (set(tree.frontier) & keep)
    keep |= fr
    edges = []
    for v, w in tree.edges:
        if v in keep and w in keep and dist[v] <= 2 * k:
            edges.append((v, w))
    new_tree = BipartiteTree(tuple(v for v in tree.v_nodes if v in keep),
                             tuple(w for w in tree.w_nodes if w in keep),
                             tuple(edges), tree.base, frozenset(fr))
    return TreeSystem(
        new_tree,
        {v: s for v, s in system.constituent.items() if v in keep},
        {w: p for w, p in system.cut_pair.items() if w in keep},
        {e: m for e, m in system.injection.items() if e in set(edges)},
        system.template,
        None if system.node_type is None else {v: t for v, t in system.node_type.items() if v in keep},
        None if system.w_slot is None else {w: s for w, s in system.w_slot.items() if w in keep},
    )


# ----------------------------------------------------------------------------
# metric assignments


@dataclass(frozen=True, eq=False)
class MetricAssignment:
    """Metrics on every vertex space: V-nodes map to full spaces, W-nodes to two-point spaces."""

    spaces: Mapping

    def __getitem__(self, u) -> FiniteMetricSpace:
        return self.spaces[u]

    def __contains__(self, u) -> bool:
        return u in self.spaces

    def __eq__(self, other):
        return isinstance(other, MetricAssignment) and dict(self.spaces) == dict(other.spaces)

    __hash__ = None

    def to_json(self) -> dict:
        return {u: self.spaces[u].to_json() for u in sorted(self.spaces)}


def given_metrics(system: TreeSystem) -> MetricAssignment:
    """The constituent metrics as supplied, with W metrics pulled back from a neighbour."""
    spaces = dict(system.constituent)
    for w in system.tree.w_nodes:
        v = system.tree.neighbors(w)[0]
        a, b = system.image(v, w)
        x, y = system.cut_pair[w]
        spaces[w] = FiniteMetricSpace((x, y), ((0, spaces[v].d(a, b)), (spaces[v].d(a, b), 0)))
    return MetricAssignment(spaces)


def compatibility_violations(system: TreeSystem, metrics: MetricAssignment) -> list:
    out = []
    for v, w in system.tree.edges:
        x, y = system.cut_pair[w]
        a, b = system.image(v, w)
        if metrics[w].d(x, y) != metrics[v].d(a, b):
            out.append((v, w))
    return out


def assign_shrinking(system: TreeSystem) -> MetricAssignment:
    """Compatible metrics with diam(M_v) <= 2^-k at tree distance 2k from the base.

    The base space is scaled to diameter exactly 1/2; every other space is
    rescaled by the halving construction anchored at the pair through which
    it attaches, with K equal to that pair's already fixed distance.
    """
    tree = system.tree
    par = tree.parents()
    order = sorted(tree.v_nodes, key=lambda v: (tree.distances()[v], v))
    cache = {}
    spaces = {}
    base = tree.base
    m0 = system.constituent[base]
    if len(m0) < 2:
        if tree.neighbors(base):
            raise MetricDomainError(f"M_{base} has fewer than two points")
        spaces[base] = m0
    else:
        spaces[base] = m0.scaled(Fraction(1, 2) / m0.diameter())
    for v in order:
        if v == base:
            continue
        w = par[v]
        vp = par[w]
        a0, b0 = system.image(vp, w)
        K = spaces[vp].d(a0, b0)
        space = system.constituent[v]
        if len(space) < 2:
            raise MetricDomainError(f"M_{v} has fewer than two points; cannot anchor the rescale")
        coll = system.collection_at(v)
        anchor = frozenset(system.image(v, w))
        key = (space, frozenset(coll.pairs), anchor)
        unit = cache.get(key)
        if unit is None:
            unit = halver_rescale(space, coll, anchor, 1)
            cache[key] = unit
        spaces[v] = unit.scaled(K)
    for w in tree.w_nodes:
        v = par[w] if par[w] is not None else tree.neighbors(w)[0]
        a, b = system.image(v, w)
        x, y = system.cut_pair[w]
        dv = spaces[v].d(a, b)
        spaces[w] = FiniteMetricSpace((x, y), ((0, dv), (dv, 0)))
    return MetricAssignment(spaces)


# ----------------------------------------------------------------------------
# frontier data


@dataclass(frozen=True)
class Branch:
    edge: tuple                  # (V-id, W-id)
    vertices: frozenset          # component of T minus S across the edge
    beyond_frontier: bool = False


def frontier_data(system: TreeSystem, subtree: Iterable) -> tuple:
    """Peripheral pairs of a subtree and the branches hanging off it, index-aligned.

    Pairs are returned as ``((node, point), (node, point))`` using the
    vertex on the subtree side. A frontier W-node inside the subtree
    contributes a pair whose branch lies beyond the truncation.
    """
    S = frozenset(subtree)
    tree = system.tree
    if not S:
        raise ValueError("subtree must be non-empty")
    unknown = S - set(tree.vertices)
    if unknown:
        raise ValueError(f"unknown vertices {sorted(unknown)}")
    start = min(S)
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for z in tree.neighbors(u):
            if z in S and z not in seen:
                seen.add(z)
                queue.append(z)
    if seen != S:
        raise ValueError("subtree is not connected")
    pairs, branches = [], []
    comps = tree.components_without(S)
    for v, w in tree.edges:
        if (v in S) == (w in S):
            continue
        if v in S:
            a, b = system.image(v, w)
            pairs.append(((v, a), (v, b)))
            other = w
        else:
            x, y = system.cut_pair[w]
            pairs.append(((w, x), (w, y)))
            other = v
        comp = next(c for c in comps if other in c)
        branches.append(Branch((v, w), comp))
    for w in sorted(S & tree.frontier):
        x, y = system.cut_pair[w]
        pairs.append(((w, x), (w, y)))
        branches.append(Branch((None, w), frozenset(), True))
    return pairs, branches
