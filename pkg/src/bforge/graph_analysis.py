"""Combinatorial checks on finite graphs: circuits, hyperbolicity, convexity,
separation, cut pairs and the dual tree of inseparable cut pairs.

Graphs are plain adjacency mappings ``{vertex: iterable of neighbours}``;
``as_adjacency`` converts glued spaces and K-bar balls.
"""

from __future__ import annotations

import random
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Callable, Iterable, Mapping

import networkx as nx


def as_adjacency(obj) -> dict:
    if isinstance(obj, Mapping):
        return {u: sorted(set(vs)) for u, vs in obj.items()}
    if hasattr(obj, "adjacency"):
        return obj.adjacency()
    if hasattr(obj, "space"):
        adj = {c: [] for c in obj.classes}
        for a, b in obj.space.skeleton_edges():
            adj[a].append(b)
            adj[b].append(a)
        return {u: sorted(vs) for u, vs in adj.items()}
    raise TypeError(f"cannot read a graph from {type(obj).__name__}")


def bfs(adj: Mapping, source, removed: frozenset = frozenset()) -> dict:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for z in adj[u]:
            if z not in dist and z not in removed:
                dist[z] = dist[u] + 1
                queue.append(z)
    return dist


# ----------------------------------------------------------------------------
# circuits


@dataclass(frozen=True)
class CircuitCount:
    edge: tuple
    n: int
    by_length: tuple          # ((length, count), ...) for length 3..n
    cycles: tuple             # canonical vertex tuples, when collected
    note: str = ""

    @property
    def total(self) -> int:
        return sum(c for _, c in self.by_length)

    def to_json(self) -> dict:
        return {"edge": [str(x) for x in self.edge], "n": self.n,
                "by_length": {str(k): c for k, c in self.by_length}, "total": self.total,
                "note": self.note}


def canonical_cycle(cycle) -> tuple:
    """Rotation/reflection representative: start at the least vertex, smaller neighbour second."""
    c = list(cycle)
    k = len(c)
    i = min(range(k), key=lambda j: c[j])
    fwd = tuple(c[(i + j) % k] for j in range(k))
    bwd = tuple(c[(i - j) % k] for j in range(k))
    return min(fwd, bwd)


def circuits_through_edge(graph, e, n: int, collect: bool = False) -> CircuitCount:
    """Simple circuits of length 3..n through the edge e = (u, v).

    Each circuit is a simple v -> u path of length at least 2 closed by e;
    the search is pruned with BFS distances to u.
    """
    adj = as_adjacency(graph)
    u, v = e
    if v not in adj.get(u, ()):
        raise ValueError(f"{e} is not an edge")
    if n < 3:
        return CircuitCount(tuple(e), n, (), (), "n < 3: no circuits by convention")
    to_u = bfs(adj, u)
    counts = [0] * (n + 1)
    found = []
    path = [v]
    on_path = {v, u}

    def dfs(x, length):
        # length = edges used so far on the v -> x path
        for z in adj[x]:
            if z == u:
                if length + 1 >= 2:
                    counts[length + 2] += 1
                    if collect:
                        found.append(canonical_cycle([u] + path))
                continue
            if z in on_path:
                continue
            if length + 1 + to_u.get(z, n + 1) + 1 > n:
                continue
            on_path.add(z)
            path.append(z)
            dfs(z, length + 1)
            path.pop()
            on_path.discard(z)

    dfs(v, 0)
    by_length = tuple((k, counts[k]) for k in range(3, n + 1))
    return CircuitCount(tuple(e), n, by_length, tuple(sorted(found, key=str)))


# ----------------------------------------------------------------------------
# hyperbolicity


@dataclass(frozen=True)
class DeltaEstimate:
    delta: Fraction
    witness: tuple
    quadruples: int
    exhaustive: bool
    vertices: int

    def to_json(self) -> dict:
        return {"delta": f"{self.delta.numerator}/{self.delta.denominator}",
                "witness": [str(x) for x in self.witness], "quadruples": self.quadruples,
                "exhaustive": self.exhaustive, "vertices": self.vertices,
                "note": "four-point lower bound on the ball; an estimate, not a certificate"}


def _four_point(d, x, y, z, w) -> int:
    s = sorted((d[x][y] + d[z][w], d[x][z] + d[y][w], d[x][w] + d[y][z]))
    return s[2] - s[1]


def delta_estimate(graph, interior: Iterable | None = None, exhaustive_limit: int = 60000,
                   samples: int = 60000, seed: int = 0, threads: int = 1) -> DeltaEstimate:
    """Largest four-point defect over quadruples of interior vertices.

    Distances are taken in the whole graph. When the number of quadruples
    exceeds ``exhaustive_limit`` a seeded sample of ``samples`` quadruples
    is scanned instead and the result is flagged as non-exhaustive.
    """
    adj = as_adjacency(graph)
    pts = sorted(interior if interior is not None else adj, key=str)
    d = {x: bfs(adj, x) for x in pts}
    m = len(pts)
    total = m * (m - 1) * (m - 2) * (m - 3) // 24
    if total <= exhaustive_limit:
        quads = list(combinations(range(m), 4))
        exhaustive = True
    else:
        rng = random.Random(seed)
        quads = [tuple(sorted(rng.sample(range(m), 4))) for _ in range(samples)]
        exhaustive = False

    def scan(chunk):
        best, wit = -1, None
        for q in chunk:
            val = _four_point(d, *(pts[i] for i in q))
            if val > best or (val == best and q < wit):
                best, wit = val, q
        return best, wit

    if not quads:
        return DeltaEstimate(Fraction(0), (), 0, exhaustive, m)
    if threads > 1:
        size = -(-len(quads) // threads)
        chunks = [quads[i:i + size] for i in range(0, len(quads), size)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(scan, chunks))
    else:
        parts = [scan(quads)]
    best, wit = max(parts, key=lambda p: (p[0], tuple(-i for i in p[1])))
    return DeltaEstimate(Fraction(best, 2), tuple(pts[i] for i in wit), len(quads), exhaustive, m)


# ----------------------------------------------------------------------------
# separation and convexity


def separation_components(graph, S: Iterable) -> list:
    adj = as_adjacency(graph)
    gone = frozenset(S)
    seen, comps = set(), []
    for s in sorted(adj, key=str):
        if s in gone or s in seen:
            continue
        comp = set(bfs(adj, s, gone))
        seen |= comp
        comps.append(frozenset(comp))
    return comps


@dataclass(frozen=True)
class ConvexityResult:
    convex: bool
    witness: tuple = ()

    def __bool__(self):
        return self.convex


def _geodesic_through(adj, x, y, z, dx, dy) -> tuple:
    """A geodesic x -> z -> y using BFS layers from x and y."""
    def walk(a, dist):
        out = [a]
        while dist[out[-1]] > 0:
            cur = out[-1]
            out.append(min((p for p in adj[cur] if dist.get(p) == dist[cur] - 1), key=str))
        return out
    return tuple(reversed(walk(z, dx))) + tuple(walk(z, dy)[1:])


def convexity_check(graph, subgraph: Iterable) -> ConvexityResult:
    """True iff every geodesic between vertices of the subgraph stays inside it."""
    adj = as_adjacency(graph)
    sub = sorted(set(subgraph), key=str)
    inside = set(sub)
    dist = {x: bfs(adj, x) for x in sub}
    for x, y in combinations(sub, 2):
        dxy = dist[x].get(y)
        if dxy is None:
            return ConvexityResult(False, (x, y))
        dy = dist[y]
        for z in sorted(dist[x], key=str):
            if z in inside:
                continue
            if dist[x][z] + dy.get(z, dxy + 1) == dxy:
                return ConvexityResult(False, _geodesic_through(adj, x, y, z, dist[x], dy))
    return ConvexityResult(True)


# ----------------------------------------------------------------------------
# cut pairs


class CutVertexError(ValueError):
    def __init__(self, vertex):
        self.vertex = vertex
        super().__init__(f"graph has a cut vertex: {vertex!r}")


def _nx(adj) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(adj)
    for u, vs in adj.items():
        for v in vs:
            g.add_edge(u, v)
    return g


def cut_pairs(graph) -> list:
    adj = as_adjacency(graph)
    verts = sorted(adj, key=str)
    out = []
    for x, y in combinations(verts, 2):
        if len(separation_components(adj, (x, y))) > 1:
            out.append(frozenset((x, y)))
    return out


def inseparable_cut_pairs(graph) -> list:
    """Cut pairs whose two points are not separated by any other cut pair."""
    adj = as_adjacency(graph)
    g = _nx(adj)
    if not nx.is_connected(g):
        raise ValueError("graph is disconnected")
    cuts = sorted(nx.articulation_points(g), key=str)
    if cuts:
        raise CutVertexError(cuts[0])
    pairs = cut_pairs(adj)
    comp_index = {}
    for p in pairs:
        comps = separation_components(adj, p)
        comp_index[p] = {x: i for i, c in enumerate(comps) for x in c}
    out = []
    for p in pairs:
        x, y = sorted(p, key=str)
        separated = any(x in comp_index[q] and y in comp_index[q] and comp_index[q][x] != comp_index[q][y]
                        for q in pairs if q != p)
        if not separated:
            out.append(p)
    return sorted(out, key=lambda s: sorted(map(str, s)))


def separation_oracle(graph) -> Callable:
    """sep(w, p, q): do p and q lie in different components of the graph minus w?"""
    adj = as_adjacency(graph)
    cache = {}

    def sep(w, p, q) -> bool:
        w = frozenset(w)
        if p in w or q in w:
            return False
        if w not in cache:
            comps = separation_components(adj, w)
            cache[w] = {x: i for i, c in enumerate(comps) for x in c}
        idx = cache[w]
        return idx[p] != idx[q]

    return sep


# ----------------------------------------------------------------------------
# dual tree


class OracleInconsistent(ValueError):
    pass


@dataclass(frozen=True)
class DualCutPairTree:
    W: tuple                 # frozenset pairs
    stars: tuple             # frozensets of W members
    edges: tuple             # (star index, W member)
    B: tuple                 # per star: frozenset of graph vertices

    def between(self, w, w1, w2) -> bool:
        """w on the tree path from w1 to w2 (strictly inside)."""
        path = self.path(w1, w2)
        return w in path[1:-1]

    def path(self, a, b) -> list:
        adj = self.adjacency()
        prev = {("W", a): None}
        queue = deque([("W", a)])
        while queue:
            u = queue.popleft()
            for z in adj[u]:
                if z not in prev:
                    prev[z] = u
                    queue.append(z)
        out = [("W", b)]
        while out[-1] != ("W", a):
            out.append(prev[out[-1]])
        return [x[1] for x in reversed(out) if x[0] == "W"]

    def adjacency(self) -> dict:
        adj = {("W", w): [] for w in self.W}
        adj.update({("V", i): [] for i in range(len(self.stars))})
        for i, w in self.edges:
            adj[("V", i)].append(("W", w))
            adj[("W", w)].append(("V", i))
        return adj

    def is_tree(self) -> bool:
        adj = self.adjacency()
        n = len(adj)
        m = len(self.edges)
        if n == 0:
            return True
        start = next(iter(adj))
        seen = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for z in adj[u]:
                if z not in seen:
                    seen.add(z)
                    queue.append(z)
        return len(seen) == n and m == n - 1

    def to_dot(self) -> str:
        lines = ["graph dual {"]
        for w in self.W:
            lines.append(f'  "{_wname(w)}" [shape=box];')
        for i, s in enumerate(self.stars):
            lines.append(f'  "star{i}" [shape=star];')
        for i, w in self.edges:
            lines.append(f'  "star{i}" -- "{_wname(w)}";')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {"W": [sorted(map(str, w)) for w in self.W],
                "stars": [sorted(_wname(w) for w in s) for s in self.stars],
                "B": [sorted(map(str, b)) for b in self.B]}


def _wname(w) -> str:
    return "{" + ",".join(sorted(map(str, w))) + "}"


def betweenness(W, sep) -> set:
    """Triples (w, w1, w2) with w separating a point of w1 from a point of w2."""
    out = set()
    for w in W:
        for w1, w2 in combinations(W, 2):
            if w in (w1, w2):
                continue
            hit = False
            for p in sorted(w1 - w, key=str):
                for q in sorted(w2 - w, key=str):
                    a, b = sep(w, p, q), sep(w, q, p)
                    if a != b:
                        raise OracleInconsistent(f"oracle is not symmetric on {sorted(w)}, {p}, {q}")
                    hit = hit or a
            if hit:
                out.add((w, w1, w2))
                out.add((w, w2, w1))
    return out


def dual_tree(W: Iterable, sep: Callable, vertices: Iterable | None = None) -> DualCutPairTree:
    """Stars are the maximal sets of pairs with no pair of W between any two members."""
    W = tuple(sorted((frozenset(w) for w in W), key=lambda s: sorted(map(str, s))))
    if not W:
        raise ValueError("W must be non-empty")
    btw = betweenness(W, sep)
    g = nx.Graph()
    g.add_nodes_from(range(len(W)))
    for i, j in combinations(range(len(W)), 2):
        if not any((W[k], W[i], W[j]) in btw for k in range(len(W))):
            g.add_edge(i, j)
    cliques = sorted(tuple(sorted(c)) for c in nx.find_cliques(g))
    stars = tuple(frozenset(W[i] for i in c) for c in cliques)
    edges = tuple((si, w) for si, s in enumerate(stars) for w in sorted(s, key=lambda x: sorted(map(str, x))))
    verts = set(vertices) if vertices is not None else None
    B = []
    for s in stars:
        region = set(verts) if verts is not None else None
        for w in s:
            others = [p for w2 in s if w2 != w for p in w2 - w]
            if verts is None or not others:
                continue
            p = others[0]
            comp = {x for x in verts if x not in w and not sep(w, p, x)}
            region &= comp | set(w)
        B.append(frozenset(region) if region is not None else frozenset())
    return DualCutPairTree(W, stars, edges, tuple(B))


# ----------------------------------------------------------------------------
# comparison with the generating tree


@dataclass(frozen=True)
class IsoResult:
    ok: bool
    mapping: tuple = ()          # (T vertex, image) pairs
    mismatch: str = ""
    at: object = None

    def to_json(self) -> dict:
        return {"ok": self.ok, "mismatch": self.mismatch, "at": None if self.at is None else str(self.at),
                "mapping": {str(k): (_wname(v) if isinstance(v, frozenset) and all(
                    not isinstance(x, frozenset) for x in v) else sorted(_wname(x) for x in v))
                    for k, v in self.mapping}}


def tree_core(tree) -> tuple:
    """Interior W-nodes and the V-nodes adjacent to at least two of them."""
    ws = [w for w in tree.w_nodes if w not in tree.frontier]
    wset = set(ws)
    vs = [v for v in tree.v_nodes if sum(1 for w in tree.neighbors(v) if w in wset) >= 2]
    return vs, ws


def iso_check(tree, dual: DualCutPairTree | None, correspondence: Mapping) -> IsoResult:
    """Check that w -> M_w, v -> {M_w : w ~ v} is an isomorphism from the core of T onto the dual tree."""
    vs, ws = tree_core(tree)
    phi_w = {w: frozenset(correspondence[w]) for w in ws}
    if not ws:
        ok = dual is None or not dual.W
        return IsoResult(ok, (), "" if ok else "dual tree has pairs but T has no interior W-node")
    if dual is None:
        return IsoResult(False, (), "no dual tree", ws[0])
    dual_w = set(dual.W)
    for w in ws:
        if phi_w[w] not in dual_w:
            return IsoResult(False, (), "M_w is not an inseparable cut pair", w)
    if len(set(phi_w.values())) != len(ws) or len(dual_w) != len(ws):
        extra = sorted(dual_w - set(phi_w.values()), key=lambda s: sorted(map(str, s)))
        return IsoResult(False, (), "pair sets differ", extra[0] if extra else None)
    mapping = [(w, phi_w[w]) for w in ws]
    if len(ws) == 1:
        # a single pair yields one star on its own; the core has no V-node to match it
        return IsoResult(len(dual.stars) == 1, tuple(mapping), "" if len(dual.stars) == 1 else "star count")
    wset = set(ws)
    dual_stars = {s: i for i, s in enumerate(dual.stars)}
    seen = set()
    for v in vs:
        image = frozenset(phi_w[w] for w in tree.neighbors(v) if w in wset)
        if image not in dual_stars:
            bad = next((w for w in tree.neighbors(v) if w in wset), v)
            return IsoResult(False, tuple(mapping), "star mismatch", bad)
        seen.add(image)
        mapping.append((v, image))
    if len(seen) != len(dual.stars) or len(seen) != len(vs):
        return IsoResult(False, tuple(mapping), "star count differs", None)
    return IsoResult(True, tuple(mapping))
