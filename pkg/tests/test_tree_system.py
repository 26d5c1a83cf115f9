from fractions import Fraction

import pytest

from bforge.glue_space import glue
from bforge.tree_system import (TreeSystemError, assign_shrinking, build_tree_system,
                                compatibility_violations, frontier_data, truncate, unfold_template)
from conftest import bundled
from oracles import bfs_levels, components_oracle

K4 = {"points": ["a", "b", "c", "d"], "edges": [["a", "b"], ["a", "c"], ["a", "d"], ["b", "c"],
                                                ["b", "d"], ["c", "d"]]}


def two_blob(inj2=None, extra_w=False):
    spec = {
        "base": "v1",
        "tree": {"v_nodes": ["v1", "v2"], "w_nodes": ["w"], "edges": [["v1", "w"], ["v2", "w"]]},
        "spaces": {"v1": K4, "v2": K4, "w": {"points": ["x", "y"]}},
        "injections": {"v1|w": {"x": "a", "y": "b"}, "v2|w": inj2 or {"x": "c", "y": "d"}},
    }
    if extra_w:
        spec["tree"]["w_nodes"].append("u")
        spec["tree"]["edges"].append(["v1", "u"])
        spec["tree"]["frontier"] = ["u"]
        spec["spaces"]["u"] = {"points": ["x", "y"]}
        spec["injections"]["v1|u"] = {"x": "a", "y": "b"}
    return spec


def test_single_v_node_is_valid():
    s = build_tree_system({"base": "v", "tree": {"v_nodes": ["v"], "w_nodes": [], "edges": []},
                           "spaces": {"v": K4}, "injections": {}})
    assert s.tree.v_nodes == ("v",)
    m = assign_shrinking(s)
    assert m["v"].diameter() <= Fraction(1, 2)


def test_two_blobs_valid():
    s = build_tree_system(two_blob())
    assert s.image("v2", "w") == ("c", "d")


def test_identical_images_rejected_with_overlap_two():
    with pytest.raises(TreeSystemError) as exc:
        build_tree_system(two_blob(extra_w=True))
    codes = {d.code for d in exc.value.diagnostics}
    assert "image_overlap" in codes
    assert any("image overlap = 2" in d.message for d in exc.value.diagnostics)


def test_non_injective_and_valence_diagnostics():
    with pytest.raises(TreeSystemError) as exc:
        build_tree_system(two_blob(inj2={"x": "c", "y": "c"}))
    assert "non_injective" in {d.code for d in exc.value.diagnostics}
    spec = two_blob()
    spec["tree"]["edges"] = [["v1", "w"]]
    spec["tree"]["v_nodes"] = ["v1"]
    spec["injections"] = {"v1|w": {"x": "a", "y": "b"}}
    with pytest.raises(TreeSystemError) as exc:
        build_tree_system(spec)
    assert "valence" in {d.code for d in exc.value.diagnostics}


def test_truncate_examples(three_level):
    t0 = truncate(three_level, 0)
    assert t0.tree.v_nodes == (three_level.tree.base,)
    assert truncate(three_level, 10) == three_level
    t1 = truncate(three_level, 1)
    dist = bfs_levels(three_level.tree.edges, three_level.tree.base)
    want_v = {v for v in three_level.tree.v_nodes if dist[v] <= 2}
    assert set(t1.tree.v_nodes) == want_v
    assert set(t1.tree.w_nodes) == {w for w in three_level.tree.w_nodes if dist[w] <= 3}


def test_template_level_counts(three_level):
    lv = {}
    for v in three_level.tree.v_nodes:
        lv[three_level.level(v)] = lv.get(three_level.level(v), 0) + 1
    assert [lv[k] for k in sorted(lv)] == [1, 4, 8, 16]
    assert len(three_level.tree.frontier) == 32


def test_unfold_agrees_with_truncation(three_level):
    assert unfold_template(three_level.template, 2) == truncate(three_level, 2)


def test_depth_zero_shrinking_halves_base():
    s = truncate(build_tree_system(bundled("three_level")), 0)
    m = assign_shrinking(s)
    assert m[s.tree.base].diameter() <= Fraction(1, 2)


def test_shrinking_compatible_and_bounded(small_system, three_level):
    for s in (small_system, three_level):
        m = assign_shrinking(s)
        assert compatibility_violations(s, m) == []
        g = glue(s, m)
        dist = s.tree.distances()
        for v in s.tree.v_nodes:
            assert g.space.diameter_of(g.classes_of(v)) <= Fraction(1, 2 ** (dist[v] // 2))


def test_new_w_metric_matches_parent_side(three_level):
    m = assign_shrinking(three_level)
    for w in three_level.tree.w_nodes:
        nbrs = three_level.tree.neighbors(w)
        ds = {m[v].d(*three_level.image(v, w)) for v in nbrs}
        assert len(ds) == 1
        x, y = three_level.cut_pair[w]
        assert m[w].d(x, y) in ds


def test_frontier_data_examples(small_system, three_level):
    closed = build_tree_system(two_blob())
    assert frontier_data(closed, closed.tree.vertices) == ([], [])
    pairs, branches = frontier_data(small_system, small_system.tree.vertices)
    assert len(pairs) == len(branches) == len(small_system.tree.frontier & set(small_system.tree.vertices))
    base = three_level.tree.base
    pairs, branches = frontier_data(three_level, [base])
    assert len(pairs) == len(three_level.tree.neighbors(base))
    # a mid-tree subtree against a components oracle on T minus S
    v = next(v for v in three_level.tree.v_nodes if three_level.level(v) == 1)
    S = {v, *three_level.tree.neighbors(v)}
    pairs, branches = frontier_data(three_level, S)
    adj = {u: three_level.tree.neighbors(u) for u in three_level.tree.vertices}
    comps = components_oracle(adj, S)
    assert {b.vertices for b in branches if not b.beyond_frontier} == set(comps)
    with pytest.raises(ValueError):
        frontier_data(three_level, [base, v])


def test_serialization_round_trip(small_system, three_level):
    for s in (small_system, three_level):
        assert build_tree_system(s.to_json()) == s
