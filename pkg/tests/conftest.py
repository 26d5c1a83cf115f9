import json
import sys
from fractions import Fraction
from importlib import resources
from itertools import combinations
from pathlib import Path

import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from bforge.exact_metric import FiniteMetricSpace, PairCollection  # noqa: E402
from bforge.glue_space import glue  # noqa: E402
from bforge.tree_system import assign_shrinking, build_tree_system  # noqa: E402

ACCEPTANCE = {}


def bundled(name):
    return json.loads(resources.files("bforge.data").joinpath(f"{name}.json").read_text())


rationals = st.builds(Fraction, st.integers(1, 40), st.integers(1, 12))


@st.composite
def metric_spaces(draw, min_points=2, max_points=10):
    """Path metric of a random complete graph with positive rational weights."""
    n = draw(st.integers(min_points, max_points))
    pts = [f"p{i}" for i in range(n)]
    weights = {}
    for x, y in combinations(pts, 2):
        weights[frozenset((x, y))] = draw(rationals)
    return FiniteMetricSpace.from_graph(pts, [tuple(e) for e in weights], weights, skeleton=None)


@st.composite
def halver_inputs(draw):
    space = draw(metric_spaces(min_points=2, max_points=8))
    pts = list(space.points)
    all_pairs = [frozenset(p) for p in combinations(pts, 2)]
    chosen = draw(st.lists(st.sampled_from(all_pairs), min_size=1, max_size=6, unique=True))
    anchor = draw(st.sampled_from(chosen))
    K = draw(rationals)
    return space, PairCollection(tuple(chosen)), anchor, K


@pytest.fixture(scope="session")
def small_system():
    return build_tree_system(bundled("small_system"))


@pytest.fixture(scope="session")
def three_level():
    return build_tree_system(bundled("three_level"))


@pytest.fixture(scope="session")
def three_level_glued(three_level):
    m = assign_shrinking(three_level)
    return glue(three_level, m)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
