"""Brute-force reference computations, written independently of the package code."""

from __future__ import annotations

import heapq
from collections import deque
from fractions import Fraction
from itertools import combinations, permutations, product

import networkx as nx


# --- quotient metric -------------------------------------------------------


def _tree_path(edges, a, b):
    adj = {}
    for v, w in edges:
        adj.setdefault(v, []).append(w)
        adj.setdefault(w, []).append(v)
    prev = {a: None}
    queue = deque([a])
    while queue:
        u = queue.popleft()
        for z in adj.get(u, ()):
            if z not in prev:
                prev[z] = u
                queue.append(z)
    out = [b]
    while out[-1] != a:
        out.append(prev[out[-1]])
    return out[::-1]


def efficient_chain_min(system, metrics, a_members, b_members) -> Fraction:
    """Minimum length over efficient linking chains between two classes.

    Both endpoints range over their V-node representatives; the chain
    follows the tree geodesic and crosses each W-node at one of its two
    points (every one of the 2^m routings is tried).
    """
    best = None
    av = [(n, p) for n, p in a_members if system.tree.is_v(n)]
    bv = [(n, p) for n, p in b_members if system.tree.is_v(n)]
    for (va, pa), (vb, pb) in product(av, bv):
        path = _tree_path(system.tree.edges, va, vb)
        ws = path[1::2]
        vs = path[0::2]
        for choice in product((0, 1), repeat=len(ws)):
            total = Fraction(0)
            cur = pa
            for i, w in enumerate(ws):
                x = system.cut_pair[w][choice[i]]
                enter = system.injection[(vs[i], w)][x]
                total += metrics[vs[i]].d(cur, enter)
                cur = system.injection[(vs[i + 1], w)][x]
            total += metrics[vs[-1]].d(cur, pb)
            if best is None or total < best:
                best = total
    return best


def dijkstra_quotient(system, metrics):
    """Quotient pseudometric via Dijkstra on the disjoint union with zero-length identifications."""
    adj = {}

    def link(a, b, w):
        adj.setdefault(a, []).append((b, w))
        adj.setdefault(b, []).append((a, w))

    for v in system.tree.v_nodes:
        m = metrics[v]
        for p, q in combinations(m.points, 2):
            link((v, p), (v, q), m.d(p, q))
        for p in m.points:
            adj.setdefault((v, p), [])
    for (v, w), inj in system.injection.items():
        for x, p in inj.items():
            link((w, x), (v, p), Fraction(0))

    def run(src):
        dist = {src: Fraction(0)}
        heap = [(Fraction(0), 0, src)]
        tick = 1
        while heap:
            d, _, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            for z, w in adj[u]:
                nd = d + w
                if z not in dist or nd < dist[z]:
                    dist[z] = nd
                    heapq.heappush(heap, (nd, tick, z))
                    tick += 1
        return dist

    return run


# --- graphs ------------------------------------------------------------------


def components_oracle(adj, removed):
    g = nx.Graph()
    keep = [u for u in adj if u not in set(removed)]
    g.add_nodes_from(keep)
    for u in keep:
        for z in adj[u]:
            if z not in set(removed):
                g.add_edge(u, z)
    return sorted((frozenset(c) for c in nx.connected_components(g)), key=lambda c: sorted(map(str, c)))


def circuits_factorial(adj, e, n):
    """Circuits of each length through e by scanning vertex permutations."""
    u, v = e
    others = [x for x in adj if x not in (u, v)]
    found = {}
    for L in range(3, n + 1):
        seen = set()
        for mid in permutations(others, L - 2):
            cyc = (u, v) + mid
            if all(cyc[(i + 1) % L] in adj[cyc[i]] for i in range(L)):
                k = min(range(L), key=lambda i: cyc[i])
                fwd = tuple(cyc[(k + j) % L] for j in range(L))
                bwd = tuple(cyc[(k - j) % L] for j in range(L))
                seen.add(min(fwd, bwd))
        found[L] = len(seen)
    return found


def all_geodesic_vertices(adj, x, y):
    g = nx.Graph()
    for a, bs in adj.items():
        g.add_node(a)
        for b in bs:
            g.add_edge(a, b)
    return {z for path in nx.all_shortest_paths(g, x, y) for z in path}


def cut_pairs_oracle(adj):
    verts = list(adj)
    out = []
    for x, y in combinations(verts, 2):
        if len(components_oracle(adj, (x, y))) > 1:
            out.append(frozenset((x, y)))
    return out


def inseparable_oracle(adj):
    pairs = cut_pairs_oracle(adj)
    out = []
    for p in pairs:
        x, y = tuple(p)
        ok = True
        for q in pairs:
            if q == p or x in q or y in q:
                continue
            comps = components_oracle(adj, q)
            if not any(x in c and y in c for c in comps):
                ok = False
                break
        if ok:
            out.append(p)
    return out


def four_point_oracle(adj):
    g = nx.Graph()
    for a, bs in adj.items():
        g.add_node(a)
        for b in bs:
            g.add_edge(a, b)
    d = dict(nx.all_pairs_shortest_path_length(g))
    best = 0
    for x, y, z, w in combinations(list(adj), 4):
        s = sorted((d[x][y] + d[z][w], d[x][z] + d[y][w], d[x][w] + d[y][z]))
        best = max(best, s[2] - s[1])
    return Fraction(best, 2)


def bfs_levels(edges, root):
    adj = {}
    for a, b in edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    dist = {root: 0}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for z in adj.get(u, ()):
            if z not in dist:
                dist[z] = dist[u] + 1
                queue.append(z)
    return dist
