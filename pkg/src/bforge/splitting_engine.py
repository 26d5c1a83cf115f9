"""Graphs of finite groups with signatures and the combined graph K-bar.

Scope: W-orbit groups are trivial and the quotient graph is a tree, so the
fundamental group is the free product of the V-orbit groups. Elements are
reduced words, tuples of syllables ``(orbit, element)`` with consecutive
orbits distinct and no identity syllables.

Tree vertices are ``("V", v, r)`` with r a reduced word not ending in a
v-syllable (a canonical coset representative of G/G_v) and ``("W", w, g)``
with g any reduced word. ``("V", v, r)`` is joined to ``("W", w, r h)`` for
every h in G_v. Points of Lambda_u and reservoir vertices at a lifted
vertex are labelled relative to its canonical representative.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping

from .exact_metric import ValidationReport, Violation


class SplittingStructureError(ValueError):
    pass


class DepthTooSmall(ValueError):
    def __init__(self, depth, required):
        self.depth = depth
        self.required = required
        super().__init__(f"depth {depth} is too small for this radius; need depth >= {required}")


# ----------------------------------------------------------------------------
# finite groups


@dataclass(frozen=True)
class FiniteGroup:
    name: str
    table: tuple

    def __post_init__(self):
        n = len(self.table)
        rows = tuple(tuple(int(x) for x in r) for r in self.table)
        object.__setattr__(self, "table", rows)
        if n == 0 or any(len(r) != n for r in rows):
            raise SplittingStructureError(f"group {self.name}: table is not square")
        if any(not 0 <= x < n for r in rows for x in r):
            raise SplittingStructureError(f"group {self.name}: entry out of range")
        for a in range(n):
            if rows[0][a] != a or rows[a][0] != a:
                raise SplittingStructureError(f"group {self.name}: 0 is not the identity")
        for a in range(n):
            if 0 not in rows[a]:
                raise SplittingStructureError(f"group {self.name}: {a} has no inverse")
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    if rows[rows[a][b]][c] != rows[a][rows[b][c]]:
                        raise SplittingStructureError(
                            f"group {self.name}: not associative at ({a}, {b}, {c})")

    @property
    def order(self) -> int:
        return len(self.table)

    def mul(self, a: int, b: int) -> int:
        return self.table[a][b]

    def inv(self, a: int) -> int:
        return self.table[a].index(0)

    @classmethod
    def cyclic(cls, n: int, name: str | None = None) -> "FiniteGroup":
        return cls(name or f"Z{n}", tuple(tuple((a + b) % n for b in range(n)) for a in range(n)))


# ----------------------------------------------------------------------------
# splitting data


@dataclass(frozen=True, eq=False)
class SplittingSpec:
    groups: Mapping            # orbit -> FiniteGroup (V- and W-orbits)
    v_orbits: tuple
    w_orbits: tuple
    qedges: tuple              # (v, w)
    base: str
    lam_points: Mapping        # orbit -> tuple of points
    lam_action: Mapping        # V-orbit -> {g: {point: point}}
    signature: Mapping         # (v, w) -> {x: point}
    res_vertices: Mapping      # V-orbit -> tuple of vertices
    res_edges: Mapping         # V-orbit -> frozenset of frozenset pairs
    res_action: Mapping        # V-orbit -> {g: {vertex: vertex}}
    centre: Mapping            # V-orbit -> distinguished reservoir vertex
    neck_added: tuple = ()
    source: Mapping = field(default=None, repr=False)

    def neighbours(self, orbit) -> list:
        return sorted({w for v, w in self.qedges if v == orbit} | {v for v, w in self.qedges if w == orbit})

    def to_json(self) -> dict:
        return dict(self.source)


def _report(violations) -> ValidationReport:
    return ValidationReport(tuple(violations))


def validate_splitting(data: Mapping) -> tuple:
    """Parse and check splitting data. Returns (SplittingSpec or None, ValidationReport).

    Neck edges missing from a reservoir are installed together with their
    G_v-orbit and listed in ``spec.neck_added``.
    """
    viol = []
    try:
        groups_raw = data["groups"]
        quotient = data["quotient"]
        lam = data["lambda"]
        sig = data["signature"]
        reservoirs = data["reservoirs"]
    except KeyError as exc:
        raise SplittingStructureError(f"missing field {exc.args[0]!r}") from None
    tables = {name: FiniteGroup(name, tuple(map(tuple, t))) for name, t in groups_raw.items()}
    v_orbits = tuple(sorted(quotient["v_orbits"]))
    w_orbits = tuple(sorted(quotient["w_orbits"]))
    groups = {}
    for o, gname in list(quotient["v_orbits"].items()) + list(quotient["w_orbits"].items()):
        if gname not in tables:
            raise SplittingStructureError(f"orbit {o}: unknown group {gname!r}")
        groups[o] = tables[gname]
    qedges = tuple(sorted((str(v), str(w)) for v, w in quotient["edges"]))
    base = quotient.get("base", v_orbits[0] if v_orbits else None)

    # quotient graph
    for v, w in qedges:
        if v not in v_orbits or w not in w_orbits:
            viol.append(Violation("bipartite", (v, w), "quotient edge must join a V-orbit to a W-orbit"))
    nodes = set(v_orbits) | set(w_orbits)
    if len(qedges) != len(nodes) - 1 or len(set(qedges)) != len(qedges):
        viol.append(Violation("quotient_tree", (), "quotient graph is not a tree"))
    adj = {u: set() for u in nodes}
    for v, w in qedges:
        if v in adj and w in adj:
            adj[v].add(w)
            adj[w].add(v)
    if nodes:
        seen, queue = {base}, deque([base])
        while queue:
            u = queue.popleft()
            for z in adj.get(u, ()):
                if z not in seen:
                    seen.add(z)
                    queue.append(z)
        if seen != nodes:
            viol.append(Violation("quotient_tree", tuple(sorted(nodes - seen)), "quotient graph is disconnected"))
    for w in w_orbits:
        if groups[w].order != 1:
            viol.append(Violation("unsupported", (w,), "only trivial W-orbit groups are supported"))
        if len(adj[w]) < 2:
            viol.append(Violation("valence", (w,), f"lifted W-vertices of {w} have valence {len(adj[w])} < 2"))
    for v in v_orbits:
        val = sum(groups[v].order for _ in adj[v])
        if val < 2:
            viol.append(Violation("valence", (v,), f"lifted V-vertices of {v} have valence {val} < 2"))

    # Lambda sets
    lam_points, lam_action = {}, {}
    for o in v_orbits + w_orbits:
        if o not in lam:
            viol.append(Violation("lambda", (o,), f"no Lambda set for {o}"))
            continue
        pts = tuple(str(p) for p in lam[o]["points"])
        lam_points[o] = pts
        if o in w_orbits and len(pts) != 2:
            viol.append(Violation("lambda_w_size", (o,), f"|Lambda_{o}| = {len(pts)}, expected 2"))
    for v in v_orbits:
        if v not in lam_points:
            continue
        g = groups[v]
        act = lam[v].get("action")
        if act is None:
            if g.order == 1:
                act = [list(lam_points[v])]
            else:
                viol.append(Violation("lambda_action", (v,), "missing action table"))
                continue
        table = {}
        for a, row in enumerate(act):
            table[a] = dict(zip(lam_points[v], (str(x) for x in row)))
        lam_action[v] = table
        if len(act) != g.order:
            viol.append(Violation("lambda_action", (v,), "action table needs one row per element"))
            continue
        if any(table[0][p] != p for p in lam_points[v]):
            viol.append(Violation("lambda_action", (v,), "identity does not act trivially"))
        for a in range(g.order):
            if sorted(table[a].values()) != sorted(lam_points[v]):
                viol.append(Violation("lambda_action", (v, a), "element does not act as a permutation"))
            for b in range(g.order):
                for p in lam_points[v]:
                    if table[a][table[b][p]] != table[g.mul(a, b)][p]:
                        viol.append(Violation("lambda_action", (v, a, b, p), "not a group action"))
                        break

    # signature
    signature = {}
    for v, w in qedges:
        key = f"{v}|{w}"
        if key not in sig:
            viol.append(Violation("signature", (v, w), "missing s_e"))
            continue
        s = {str(x): str(y) for x, y in sig[key].items()}
        signature[(v, w)] = s
        if set(s) != set(lam_points.get(w, ())):
            viol.append(Violation("signature", (v, w), "s_e must be defined on Lambda_w"))
        if any(y not in lam_points.get(v, ()) for y in s.values()):
            viol.append(Violation("signature", (v, w), "s_e lands outside Lambda_v"))
        if len(set(s.values())) != len(s):
            viol.append(Violation("signature_injective", (v, w), "s_e is not injective"))
        # equivariance under G_v meet G_w, which is trivial in scope
    for v in v_orbits:
        if v not in lam_action:
            continue
        images = []
        for w in sorted(adj[v]):
            if (v, w) not in signature:
                continue
            for h in range(groups[v].order):
                images.append(((w, h), frozenset(lam_action[v][h][y] for y in signature[(v, w)].values())))
        for (e1, i1), (e2, i2) in combinations(images, 2):
            if len(i1 & i2) > 1:
                viol.append(Violation("signature_intersection", (v, e1, e2),
                                      f"|Image(s_e) ∩ Image(s_e')| = {len(i1 & i2)}"))

    # reservoirs
    res_vertices, res_edges, res_action, centre, added = {}, {}, {}, {}, []
    for v in v_orbits:
        r = reservoirs.get(v)
        if r is None:
            viol.append(Violation("reservoir", (v,), "missing reservoir"))
            continue
        verts = tuple(str(x) for x in r["vertices"])
        edges = {frozenset((str(a), str(b))) for a, b in r.get("edges", ())}
        if any(len(e) != 2 or not e <= set(verts) for e in edges):
            viol.append(Violation("reservoir", (v,), "reservoir edge with unknown or repeated vertex"))
        if not set(lam_points.get(v, ())) <= set(verts):
            viol.append(Violation("reservoir", (v,), "reservoir must contain Lambda_v"))
        act = r.get("action")
        g = groups[v]
        if act is None and g.order == 1:
            act = [list(verts)]
        table = {a: dict(zip(verts, (str(x) for x in row))) for a, row in enumerate(act or [])}
        if len(table) != g.order:
            viol.append(Violation("reservoir_action", (v,), "reservoir action needs one row per element"))
        else:
            for a in range(g.order):
                img = {frozenset(table[a][x] for x in e) for e in edges}
                if img != edges:
                    viol.append(Violation("reservoir_action", (v, a), "element is not a graph automorphism"))
                if v in lam_action and any(table[a][p] != lam_action[v][a][p] for p in lam_points[v]):
                    viol.append(Violation("reservoir_action", (v, a), "reservoir action disagrees on Lambda_v"))
        # install missing neck edges, with their orbits
        if v in lam_action and len(table) == g.order:
            for w in sorted(adj[v]):
                s = signature.get((v, w))
                if s is None or len(s) != 2:
                    continue
                x, y = s.values()
                for h in range(g.order):
                    e = frozenset((lam_action[v][h][x], lam_action[v][h][y]))
                    if e not in edges:
                        edges.add(e)
                        added.append((v, tuple(sorted(e))))
        res_vertices[v] = verts
        res_edges[v] = frozenset(edges)
        res_action[v] = table
        centre[v] = str(r.get("centre", verts[0]))
        if not _connected(verts, edges):
            viol.append(Violation("reservoir", (v,), "reservoir graph is disconnected"))
    if viol:
        return None, _report(viol)
    spec = SplittingSpec(groups, v_orbits, w_orbits, qedges, base, lam_points, lam_action, signature,
                         res_vertices, res_edges, res_action, centre, tuple(added), data)
    return spec, _report(viol)


def _connected(verts, edges) -> bool:
    if not verts:
        return True
    adj = {x: [] for x in verts}
    for e in edges:
        a, b = tuple(e)
        if a in adj and b in adj:
            adj[a].append(b)
            adj[b].append(a)
    seen, queue = {verts[0]}, deque([verts[0]])
    while queue:
        u = queue.popleft()
        for z in adj[u]:
            if z not in seen:
                seen.add(z)
                queue.append(z)
    return len(seen) == len(verts)


def reservoir_diameter(spec: SplittingSpec, v) -> int:
    verts = spec.res_vertices[v]
    adj = {x: [] for x in verts}
    for e in spec.res_edges[v]:
        a, b = tuple(e)
        adj[a].append(b)
        adj[b].append(a)
    best = 0
    for s in verts:
        dist = {s: 0}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for z in adj[u]:
                if z not in dist:
                    dist[z] = dist[u] + 1
                    queue.append(z)
        best = max(best, max(dist.values()))
    return best


# ----------------------------------------------------------------------------
# words in the free product


def reduce_word(syllables) -> tuple:
    out = []
    for o, a in syllables:
        if a == 0:
            continue
        out.append((o, a))
    return tuple(out)


class FreeProduct:
    """Reduced-word arithmetic in the free product of the V-orbit groups."""

    def __init__(self, spec: SplittingSpec):
        self.spec = spec
        self.groups = {v: spec.groups[v] for v in spec.v_orbits}

    def mul(self, u: tuple, v: tuple) -> tuple:
        out = list(u)
        for o, a in v:
            if out and out[-1][0] == o:
                prod = self.groups[o].mul(out[-1][1], a)
                out.pop()
                if prod != 0:
                    out.append((o, prod))
            else:
                out.append((o, a))
        return tuple(out)

    def inv(self, u: tuple) -> tuple:
        return tuple((o, self.groups[o].inv(a)) for o, a in reversed(u))

    def split(self, g: tuple, v) -> tuple:
        """g = r h with r a coset representative for G_v and h in G_v."""
        if g and g[-1][0] == v:
            return g[:-1], g[-1][1]
        return g, 0

    def times_elem(self, r: tuple, v, h: int) -> tuple:
        return r + ((v, h),) if h else r


def word_str(g: tuple) -> str:
    return "1" if not g else "".join(f"{o}{a}" for o, a in g)


def vertex_str(u) -> str:
    return f"{u[0]}:{u[1]}@{word_str(u[2])}"


# ----------------------------------------------------------------------------
# Bass-Serre unfolding


@dataclass(frozen=True, eq=False)
class TreeUnfolding:
    spec: SplittingSpec
    depth: int
    vertices: tuple
    dist: Mapping              # tree distance from the base V-vertex
    adj: Mapping
    edge_h: Mapping            # (V-vertex, W-vertex) -> h in G_v with W = V r h

    @property
    def base(self):
        return ("V", self.spec.base, ())

    def level_counts(self) -> list:
        counts = [0] * (self.depth + 1)
        for u in self.vertices:
            if u[0] == "V":
                counts[self.dist[u] // 2] += 1
        return counts

    def quotient_edges(self) -> set:
        return {(v[1], w[1]) for (v, w) in self.edge_h}

    def orbit(self, u):
        return u[1]

    def stabiliser_order(self, u) -> int:
        return self.spec.groups[u[1]].order


def unfold_tree(spec: SplittingSpec, depth: int) -> TreeUnfolding:
    if depth < 0:
        raise ValueError("depth must be non-negative")
    fp = FreeProduct(spec)
    base = ("V", spec.base, ())
    dist = {base: 0}
    adj = {base: []}
    edge_h = {}
    queue = deque([base])
    limit = 2 * depth
    order = [base]
    while queue:
        u = queue.popleft()
        if dist[u] == limit:
            continue
        nbrs = []
        if u[0] == "V":
            v, r = u[1], u[2]
            for w in spec.neighbours(v):
                for h in range(spec.groups[v].order):
                    z = ("W", w, fp.times_elem(r, v, h))
                    nbrs.append(z)
                    edge_h[(u, z)] = h
        else:
            w, g = u[1], u[2]
            for v in spec.neighbours(w):
                r, h = fp.split(g, v)
                z = ("V", v, r)
                nbrs.append(z)
                edge_h[(z, u)] = h
        for z in nbrs:
            if z not in dist:
                dist[z] = dist[u] + 1
                adj[z] = []
                order.append(z)
                queue.append(z)
            if z not in adj[u]:
                adj[u].append(z)
            if u not in adj[z]:
                adj[z].append(u)
    edge_h = {e: h for e, h in edge_h.items() if e[0] in dist and e[1] in dist}
    return TreeUnfolding(spec, depth, tuple(order), dist, adj, edge_h)


def act_on_vertex(fp: FreeProduct, a: tuple, u):
    """Left action of the group element a on a tree vertex; returns (vertex, h)."""
    kind, o, r = u
    g = fp.mul(a, r)
    if kind == "W":
        return ("W", o, g), 0
    r2, h = fp.split(g, o)
    return ("V", o, r2), h


# ----------------------------------------------------------------------------
# the graphs K and K-bar


@dataclass(frozen=True, eq=False)
class KGraph:
    vertices: tuple            # (tree vertex, label)
    edges: Mapping             # frozenset pair -> kind: reservoir | neck | junction | pipe


def build_K(unf: TreeUnfolding) -> KGraph:
    spec = unf.spec
    verts, edges = [], {}
    for u in unf.vertices:
        if u[0] == "V":
            v = u[1]
            for z in spec.res_vertices[v]:
                verts.append((u, z))
            necks = _neck_pairs(spec, v)
            for e in spec.res_edges[v]:
                a, b = sorted(e)
                edges[frozenset(((u, a), (u, b)))] = "neck" if e in necks else "reservoir"
        else:
            x, y = spec.lam_points[u[1]]
            verts.append((u, x))
            verts.append((u, y))
            edges[frozenset(((u, x), (u, y)))] = "junction"
    for (vv, ww), h in unf.edge_h.items():
        s = spec.signature[(vv[1], ww[1])]
        act = spec.lam_action[vv[1]][h]
        for x in spec.lam_points[ww[1]]:
            edges[frozenset(((ww, x), (vv, act[s[x]])))] = "pipe"
    return KGraph(tuple(verts), edges)


def _neck_pairs(spec: SplittingSpec, v) -> set:
    out = set()
    for w in spec.neighbours(v):
        s = spec.signature[(v, w)]
        x, y = s.values()
        for h in range(spec.groups[v].order):
            act = spec.lam_action[v][h]
            out.add(frozenset((act[x], act[y])))
    return out


def pipe_classes(K: KGraph, unf: TreeUnfolding) -> tuple:
    parent = {x: x for x in K.vertices}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e, kind in K.edges.items():
        if kind == "pipe":
            a, b = tuple(e)
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
    groups = {}
    for x in K.vertices:
        groups.setdefault(find(x), []).append(x)
    cls_of, members = {}, {}
    for ms in groups.values():
        rep = min(ms, key=lambda m: (unf.dist[m[0]], vertex_str(m[0]), m[1]))
        cid = f"{vertex_str(rep[0])}/{rep[1]}"
        members[cid] = frozenset(ms)
        for m in ms:
            cls_of[m] = cid
    return cls_of, members


@dataclass(frozen=True, eq=False)
class FineGraphBall:
    vertices: tuple
    edges: frozenset           # frozenset pairs of class ids
    edge_kind: Mapping         # pair -> junction | reservoir
    centre: str
    radius: int
    depth: int
    ball_dist: Mapping         # class -> distance from the centre
    members: Mapping           # class -> frozenset of K-vertices (the rho fibres)
    cls_of: Mapping            # K-vertex -> class
    K: KGraph = field(repr=False)
    unfolding: TreeUnfolding = field(repr=False)

    def adjacency(self) -> dict:
        adj = {v: [] for v in self.vertices}
        for e in self.edges:
            a, b = sorted(e)
            adj[a].append(b)
            adj[b].append(a)
        for v in adj:
            adj[v].sort()
        return adj

    def image_of(self, u) -> list:
        """Vertex set of rho(K_u) inside the ball (empty if outside)."""
        out = {self.cls_of[m] for m in self.K.vertices if m[0] == u}
        return sorted(out & set(self.vertices))

    def lambda_w_classes(self, u) -> list:
        return self.image_of(u)

    def interior_w(self) -> list:
        """W-vertices whose junction edge lies in the ball at distance <= radius - 1."""
        out = []
        for u in self.unfolding.vertices:
            if u[0] != "W":
                continue
            cls = self.image_of(u)
            if len(cls) == 2 and all(self.ball_dist[c] <= self.radius - 1 for c in cls):
                out.append(u)
        return out

    def to_json(self) -> dict:
        return {"centre": self.centre, "radius": self.radius, "depth": self.depth,
                "vertices": list(self.vertices),
                "edges": sorted([sorted(e) + [self.edge_kind[e]] for e in self.edges])}


def required_depth(spec: SplittingSpec, radius: int) -> int:
    return radius + max(reservoir_diameter(spec, v) for v in spec.v_orbits)


def build_barK(spec: SplittingSpec, depth: int, radius: int) -> FineGraphBall:
    need = required_depth(spec, radius)
    if depth < need:
        raise DepthTooSmall(depth, need)
    unf = unfold_tree(spec, depth)
    K = build_K(unf)
    cls_of, members = pipe_classes(K, unf)
    edge_kind = {}
    for e, kind in K.edges.items():
        if kind in ("pipe", "neck"):
            continue
        a, b = tuple(e)
        ce = frozenset((cls_of[a], cls_of[b]))
        if len(ce) != 2:
            raise SplittingStructureError(f"edge {e} collapses to a loop")
        if ce in edge_kind:
            raise SplittingStructureError(f"duplicate edge between {sorted(ce)}")
        edge_kind[ce] = kind
    adj = {}
    for e in edge_kind:
        a, b = tuple(e)
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    centre = cls_of[(unf.base, spec.centre[spec.base])]
    dist = {centre: 0}
    queue = deque([centre])
    while queue:
        u = queue.popleft()
        if dist[u] == radius:
            continue
        for z in sorted(adj.get(u, ())):
            if z not in dist:
                dist[z] = dist[u] + 1
                queue.append(z)
    verts = tuple(sorted(dist, key=lambda c: (dist[c], c)))
    inside = set(verts)
    ball_edges = frozenset(e for e in edge_kind if e <= inside)
    return FineGraphBall(verts, ball_edges, {e: edge_kind[e] for e in ball_edges}, centre, radius,
                         depth, dist, {c: members[c] for c in verts}, cls_of, K, unf)


# ----------------------------------------------------------------------------
# parabolic forest


@dataclass(frozen=True, eq=False)
class ParabolicForest:
    vertices: tuple
    edges: tuple
    components: tuple          # frozensets of (tree vertex, point)

    def component_of(self) -> dict:
        out = {}
        for i, c in enumerate(self.components):
            for m in c:
                out[m] = i
        return out


def parabolic_forest(spec: SplittingSpec, depth: int, unf: TreeUnfolding | None = None) -> ParabolicForest:
    unf = unf or unfold_tree(spec, depth)
    verts = [(u, x) for u in unf.vertices for x in spec.lam_points[u[1]]]
    edges = []
    for (vv, ww), h in unf.edge_h.items():
        s = spec.signature[(vv[1], ww[1])]
        act = spec.lam_action[vv[1]][h]
        for x in spec.lam_points[ww[1]]:
            edges.append(((ww, x), (vv, act[s[x]])))
    adj = {m: [] for m in verts}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen, comps = set(), []
    for s in verts:
        if s in seen:
            continue
        comp = {s}
        seen.add(s)
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for z in adj[u]:
                if z not in seen:
                    seen.add(z)
                    comp.add(z)
                    queue.append(z)
        comps.append(frozenset(comp))
    return ParabolicForest(tuple(verts), tuple(edges), tuple(comps))


def forest_matches_classes(forest: ParabolicForest, ball: FineGraphBall) -> dict:
    """Compare forest components with the Lambda-bar classes of the ball.

    Returns counts and any mismatch. A class is a Lambda class when its
    fibre contains a Lambda point (reservoir-only vertices are excluded).
    """
    spec = ball.unfolding.spec
    comp_of = forest.component_of()
    lam_classes = []
    mismatches = []
    for c in ball.vertices:
        fibre = {m for m in ball.members[c] if m[1] in spec.lam_points[m[0][1]]}
        if not fibre:
            continue
        lam_classes.append(c)
        comps = {comp_of[m] for m in fibre}
        if len(comps) != 1:
            mismatches.append((c, "fibre meets several forest components"))
            continue
        comp = forest.components[comps.pop()]
        if comp != frozenset(fibre):
            mismatches.append((c, "fibre differs from its forest component"))
    comps_in_range = {comp_of[m] for c in lam_classes for m in ball.members[c]
                      if m[1] in spec.lam_points[m[0][1]]}
    return {"classes": len(lam_classes), "components": len(comps_in_range),
            "bijective": not mismatches and len(comps_in_range) == len(lam_classes),
            "mismatches": mismatches}


def pipe_geodesics_unique(ball: FineGraphBall, limit: int = 200) -> list:
    """For equivalent K-vertices, check the K-geodesic is unique and made of pipe edges.

    Returns a list of violations; pairs are examined up to ``limit``.
    """
    K = ball.K
    adj = {x: [] for x in K.vertices}
    for e, kind in K.edges.items():
        a, b = tuple(e)
        adj[a].append((b, kind))
        adj[b].append((a, kind))
    bad = []
    checked = 0
    for c in ball.vertices:
        fib = sorted(ball.members[c], key=lambda m: (vertex_str(m[0]), m[1]))
        for x1, x2 in combinations(fib, 2):
            if checked >= limit:
                return bad
            checked += 1
            dist = {x1: 0}
            count = {x1: 1}
            pipe_only = {x1: True}
            queue = deque([x1])
            while queue:
                u = queue.popleft()
                for z, kind in adj[u]:
                    if z not in dist:
                        dist[z] = dist[u] + 1
                        count[z] = count[u]
                        pipe_only[z] = pipe_only[u] and kind == "pipe"
                        queue.append(z)
                    elif dist[z] == dist[u] + 1:
                        count[z] += count[u]
                        pipe_only[z] = pipe_only[z] and pipe_only[u] and kind == "pipe"
            if count.get(x2) != 1 or not pipe_only.get(x2):
                bad.append((x1, x2, count.get(x2)))
    return bad


# ----------------------------------------------------------------------------
# base stabiliser acting on the ball


def stabiliser_relabelling(ball: FineGraphBall, a: int) -> dict:
    """Class map induced by the element a of the base vertex group."""
    spec = ball.unfolding.spec
    fp = FreeProduct(spec)
    word = ((spec.base, a),) if a else ()
    out = {}
    for c in ball.vertices:
        m = min(ball.members[c], key=lambda m: (vertex_str(m[0]), m[1]))
        u, z = m
        u2, h = act_on_vertex(fp, word, u)
        if u2[0] == "V":
            z2 = spec.res_action[u2[1]][h][z]
        else:
            z2 = z
        out[c] = ball.cls_of.get((u2, z2))
    return out


def is_ball_automorphism(ball: FineGraphBall, mapping: dict) -> bool:
    if any(v is None or v not in ball.ball_dist for v in mapping.values()):
        return False
    if len(set(mapping.values())) != len(mapping):
        return False
    return {frozenset(mapping[x] for x in e) for e in ball.edges} == set(ball.edges)


# ----------------------------------------------------------------------------
# DOT export


def ball_to_dot(ball: FineGraphBall) -> str:
    palette = ["red", "blue", "green", "orange", "purple", "brown"]
    orbits = {o: palette[i % len(palette)] for i, o in enumerate(ball.unfolding.spec.v_orbits
                                                                 + ball.unfolding.spec.w_orbits)}
    lines = ["graph Kbar {"]
    for c in ball.vertices:
        m = min(ball.members[c], key=lambda m: (vertex_str(m[0]), m[1]))
        lines.append(f'  "{c}" [color={orbits[m[0][1]]}];')
    for e in sorted(ball.edges, key=sorted):
        a, b = sorted(e)
        style = "bold" if ball.edge_kind[e] == "junction" else "solid"
        lines.append(f'  "{a}" -- "{b}" [style={style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def K_to_dot(K: KGraph) -> str:
    style = {"pipe": "dotted", "neck": "dashed", "junction": "bold", "reservoir": "solid"}
    lines = ["graph K {"]
    for e, kind in sorted(K.edges.items(), key=lambda kv: sorted(_kv(x) for x in kv[0])):
        a, b = sorted(_kv(x) for x in e)
        lines.append(f'  "{a}" -- "{b}" [style={style[kind]}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def forest_to_dot(forest: ParabolicForest) -> str:
    lines = ["graph F {"]
    for a, b in sorted((_kv(a), _kv(b)) for a, b in forest.edges):
        lines.append(f'  "{a}" -- "{b}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _kv(m) -> str:
    return f"{vertex_str(m[0])}/{m[1]}"
