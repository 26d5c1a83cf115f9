from fractions import Fraction
from itertools import combinations

import pytest
from hypothesis import given, settings

from bforge.exact_metric import (FiniteMetricSpace, MetricDomainError, MetricStructureError,
                                 PairCollection, format_rational, halver_parameters, halver_rescale,
                                 null_check, parse_rational, urysohn_map, validate_metric)
from conftest import halver_inputs, metric_spaces

F = Fraction


def test_rational_parsing_round_trip():
    assert parse_rational("3/4") == F(3, 4)
    assert parse_rational("-2") == F(-2)
    assert format_rational(F(6, 8)) == "3/4"
    for bad in ("3/0", "x", "1.5", 1.5, True):
        with pytest.raises(MetricStructureError):
            parse_rational(bad)


def test_one_point_space_is_valid():
    assert validate_metric(FiniteMetricSpace(("a",), ((0,),))).ok


def test_triangle_violation_names_the_triple():
    s = FiniteMetricSpace.from_pairs("abc", {("a", "b"): 1, ("b", "c"): 1, ("a", "c"): 3})
    rep = validate_metric(s)
    tri = [v for v in rep.violations if v.axiom == "triangle"]
    assert [v.witness for v in tri] == [("a", "c", "b")]


def test_path_metric_passes_exhaustive_triples():
    s = FiniteMetricSpace.from_graph("abcd", [("a", "b"), ("b", "c"), ("c", "d")])
    assert validate_metric(s).ok
    for x, y, z in ((x, y, z) for x in "abcd" for y in "abcd" for z in "abcd"):
        assert s.d(x, z) <= s.d(x, y) + s.d(y, z)


def test_structural_errors_are_distinct():
    with pytest.raises(MetricStructureError):
        FiniteMetricSpace(("a", "b"), ((0, 1),))
    with pytest.raises(MetricStructureError, match="negative"):
        FiniteMetricSpace(("a", "b"), ((0, -1), (-1, 0)))


def test_asymmetry_and_zero_distance_reported():
    s = FiniteMetricSpace(("a", "b"), ((0, 1), (2, 0)))
    assert {v.axiom for v in validate_metric(s).violations} >= {"symmetry"}
    s = FiniteMetricSpace(("a", "b"), ((0, 0), (0, 0)))
    assert not validate_metric(s).ok


def test_urysohn_examples():
    s = FiniteMetricSpace.from_pairs("pqx", {("x", "p"): 1, ("x", "q"): 2, ("p", "q"): 2})
    u = urysohn_map(s, "p", "q")
    assert u["p"] == 0 and u["q"] == 2 and u["x"] == F(2, 3)
    with pytest.raises(MetricDomainError):
        urysohn_map(s, "p", "p")


@settings(max_examples=100, deadline=None)
@given(metric_spaces())
def test_urysohn_is_one_lipschitz_and_bounded(space):
    p, q = space.points[0], space.points[-1]
    u = urysohn_map(space, p, q)
    for x, y in combinations(space.points, 2):
        assert abs(u[x] - u[y]) <= space.d(x, y)
    assert all(0 <= v <= space.d(p, q) for v in u.values())


def test_halver_four_point_example():
    s = FiniteMetricSpace.from_graph("abxy", [("a", "x"), ("x", "b"), ("b", "y"), ("y", "a")])
    coll = PairCollection(({"a", "b"}, {"x", "y"}))
    out = halver_rescale(s, coll, {"a", "b"}, 1)
    assert validate_metric(out).ok
    assert out.d("a", "b") == 1
    assert max(out.d(x, y) for x, y in combinations(out.points, 2)) == 1
    assert out.d("x", "y") <= F(1, 2)


def test_halver_argument_errors():
    s = FiniteMetricSpace.from_graph("abc", [("a", "b"), ("b", "c")])
    coll = PairCollection(({"a", "b"},))
    with pytest.raises(ValueError, match="not a member"):
        halver_rescale(s, coll, {"b", "c"}, 1)
    with pytest.raises(MetricDomainError):
        halver_rescale(s, coll, {"a"}, 1)
    with pytest.raises(MetricDomainError):
        halver_rescale(s, coll, {"a", "b"}, 0)


@settings(max_examples=100, deadline=None)
@given(halver_inputs())
def test_halver_properties(inp):
    space, coll, anchor, K = inp
    out = halver_rescale(space, coll, anchor, K)
    assert validate_metric(out).ok
    a, b = sorted(anchor)
    assert out.d(a, b) == K == out.diameter()
    for C in coll:
        if C != anchor:
            assert out.diameter_of(C) <= K / 2
    p = halver_parameters(space, coll, anchor)
    assert p.l1 <= F(1, 2) <= p.l2


def test_null_check_examples():
    s = FiniteMetricSpace.from_graph("ab", [("a", "b")])
    assert null_check(s, [{"a", "b"}], F(1, 2)) == [frozenset("ab")]
    assert null_check(s, [{"a", "b"}], s.diameter()) == []


@settings(max_examples=50, deadline=None)
@given(halver_inputs())
def test_null_check_after_halving_leaves_at_most_the_anchor(inp):
    space, coll, anchor, _ = inp
    out = halver_rescale(space, coll, anchor, 1)
    assert set(null_check(out, coll, F(1, 2))) <= {frozenset(anchor)}


def test_json_round_trip():
    s = FiniteMetricSpace.from_pairs("abc", {("a", "b"): "1/2", ("b", "c"): 1, ("a", "c"): "3/2"})
    assert FiniteMetricSpace.from_json(s.to_json()) == s


def test_json_negative_entry_is_named():
    with pytest.raises(MetricStructureError, match=r"dist\[0\]\[1\]|negative"):
        FiniteMetricSpace.from_json({"points": ["a", "b"], "dist": [["0", "-1"], ["-1", "0"]]})
