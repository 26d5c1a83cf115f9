from fractions import Fraction
from itertools import combinations

import pytest

from bforge.exact_metric import FiniteMetricSpace, MetricDomainError, validate_metric
from bforge.glue_space import (IncompatibleMetrics, InfeasibleEps, advance_end, approximate_completion,
                               chain_length, efficient_chain, embedding_violations, enumerate_ends,
                               eps_chain_components, glue, minimal_eps, net_coverage_failures,
                               shrinking_report, split_at_pair, tail_bound)
from bforge.tree_system import (MetricAssignment, assign_shrinking, build_tree_system, given_metrics,
                                truncate, unfold_template)
from conftest import bundled
from oracles import dijkstra_quotient, efficient_chain_min
from test_tree_system import two_blob

F = Fraction


def _check_against_oracles(system, metrics):
    g = glue(system, metrics)
    run = dijkstra_quotient(system, metrics)
    for a, b in combinations(g.classes, 2):
        want = efficient_chain_min(system, metrics, g.members[a], g.members[b])
        assert g.d(a, b) == want, (a, b)
        src = next(m for m in g.members[a])
        dj = run(src)
        assert min(dj[m] for m in g.members[b]) == want
    return g


def test_glue_matches_chain_enumeration(small_system):
    _check_against_oracles(small_system, assign_shrinking(small_system))


def test_glue_matches_oracle_three_level_shallow(three_level):
    s = truncate(three_level, 1)
    _check_against_oracles(s, assign_shrinking(s))


def test_two_blob_formula():
    s = build_tree_system(two_blob())
    m = given_metrics(s)
    g = glue(s, m)
    x, y = g.cls("v1", "c"), g.cls("v2", "a")
    a1, b1 = g.cls("v1", "a"), g.cls("v1", "b")
    d1, d2 = m["v1"], m["v2"]
    want = min(d1.d("c", "a") + d2.d("c", "a"), d1.d("c", "b") + d2.d("d", "a"))
    assert g.d(x, y) == want
    assert g.d(a1, g.cls("v2", "c")) == 0
    assert embedding_violations(g) == []
    assert validate_metric(g.space).ok


def test_incompatible_metrics_rejected():
    s = build_tree_system(two_blob())
    m = dict(given_metrics(s).spaces)
    m["v2"] = m["v2"].scaled(2)
    with pytest.raises(IncompatibleMetrics):
        glue(s, MetricAssignment(m))


def test_efficient_chain_realises_distance(three_level_glued):
    g = three_level_glued
    cls = g.classes
    for a, b in list(combinations(cls, 2))[:200]:
        hops, length = efficient_chain(g, a, b)
        assert length == g.d(a, b)
        assert chain_length(g.metrics, hops, g.system) == length


def test_threads_give_identical_tables(three_level):
    m = assign_shrinking(three_level)
    assert glue(three_level, m, threads=1).space == glue(three_level, m, threads=4).space


def test_shrinking_report_three_level(three_level_glued):
    rep = shrinking_report(three_level_glued)
    assert rep.ok
    level1 = [r for r in rep.rows if r[1] == 1]
    assert max(r[2] for r in level1) == F(1, 2)


def test_end_classification(three_level):
    ends = enumerate_ends(three_level)
    by_class = {}
    for e in ends:
        by_class.setdefault(e.ray_class, set()).add(e.classification)
    assert all(len(v) == 1 for v in by_class.values())
    kinds = {k: v.pop() for k, v in by_class.items()}
    assert sorted(kinds.values()) == ["non_redundant", "non_redundant", "redundant"]
    red = next(e for e in ends if e.classification == "redundant")
    assert red.witness is not None


def test_classification_stable_when_depth_doubles(three_level):
    deep = unfold_template(three_level.template, 6)
    a = {(e.ray_class): e.classification for e in enumerate_ends(three_level)}
    b = {(e.ray_class): e.classification for e in enumerate_ends(deep)}
    assert a == b


def test_advance_end_keeps_classification(three_level):
    deep = unfold_template(three_level.template, 4)
    for e in enumerate_ends(three_level)[:10]:
        assert advance_end(e, deep).classification == e.classification


def test_non_template_ends_undecided(small_system):
    assert {e.classification for e in enumerate_ends(small_system)} == {"undecided"}


def test_completion_and_refusal(three_level_glued):
    g = three_level_glued
    with pytest.raises(InfeasibleEps) as exc:
        approximate_completion(g, 3, F(1, 2))
    assert minimal_eps(3) == F(1, 2)
    approx = approximate_completion(g, 3, F(3, 4))
    assert net_coverage_failures(approx) == []
    assert all(e.classification == "non_redundant" for e in approx.end_points)
    assert all(err <= F(1, 4) for err in approx.error)
    with pytest.raises(MetricDomainError):
        approximate_completion(g, 2, F(3, 2))
    assert "1/2" in str(exc.value)


def test_ends_branching_at_first_level_are_apart(three_level_glued):
    """Distinct ends through different level-1 nodes are a positive distance apart.

    At depth 3 two such ends can share an anchor through a common prefix,
    so each pair the depth-3 bound cannot certify is followed two levels
    deeper and certified there.
    """
    approx = approximate_completion(three_level_glued, 3, F(3, 4))
    ends = approx.end_points
    pending = [(i, j) for i, j in combinations(range(len(ends)), 2)
               if ends[i].ray[2] != ends[j].ray[2] and approx.lower_bound(i, j) <= 0]
    assert pending
    deep = unfold_template(three_level_glued.system.template, 5)
    dm = assign_shrinking(deep)
    dg = glue(deep, dm)
    cache = {}

    def anchor(e):
        e = advance_end(advance_end(e, deep), deep)
        # the tail bound holds from either point of the frontier pair
        return dg.classes_of(e.frontier), tail_bound(deep, dm, e, cache)

    for i, j in pending:
        (pa, ea), (pb, eb) = anchor(ends[i]), anchor(ends[j])
        best = max(dg.d(a, b) for a in pa for b in pb)
        assert best - ea - eb > 0, (ends[i].ray, ends[j].ray)


def test_split_matches_tree_sides(three_level_glued):
    g = three_level_glued
    tree = g.system.tree
    for w in tree.w_nodes:
        if w in tree.frontier:
            with pytest.raises(MetricDomainError):
                split_at_pair(g, w)
            continue
        sp = split_at_pair(g, w)
        assert sp.consistent
        assert len(sp.components) == len(tree.neighbors(w))
        for w2 in tree.w_nodes:
            if w2 == w:
                continue
            side = next(i for i, s in enumerate(sp.tree_sides) if w2 in s)
            rest = set(g.classes_of(w2)) - set(g.classes_of(w))
            assert rest <= sp.components[side]


def test_split_path_shaped_tree_and_non_cut_pair():
    s = build_tree_system(two_blob())
    g = glue(s, given_metrics(s))
    assert len(split_at_pair(g, "w").components) == 2
    from bforge.glue_space import components_without
    assert len(components_without(g, [g.cls("v1", "a"), g.cls("v1", "c")])) == 1


def test_eps_chain_components():
    s = build_tree_system(two_blob())
    g = glue(s, given_metrics(s))
    cut = g.classes_of("w")
    assert len(eps_chain_components(g, cut, F(1, 100))) >= 2
    assert len(eps_chain_components(g, cut, g.space.diameter())) == 1
