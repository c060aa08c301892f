import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kbratteli import build_tree, validate  # noqa: E402

DYADIC = [[[2]]]
TRIADIC = [[[3]]]
TWO_GRAPH = [[[1, 1], [1, 1]], [[1, 1], [1, 1]]]
# commuting pair (A_2 = A_1 + I) with non-uniform kappa = (2/3, 1/3)
SKEW_TWO_GRAPH = [[[2, 2], [1, 1]], [[3, 2], [1, 2]]]
FLIP = [[[1, 2], [2, 1]]]

GRAPHS = {
    "dyadic": DYADIC,
    "triadic": TRIADIC,
    "two_graph": TWO_GRAPH,
    "skew_two_graph": SKEW_TWO_GRAPH,
    "flip": FLIP,
}

_TREES = {}


def tree_for(name, depth):
    """Build (and memoize) the depth-n path tree of a named test graph."""
    key = (name, depth)
    if key not in _TREES:
        _TREES[key] = build_tree(validate(GRAPHS[name]), depth=depth)
    return _TREES[key]


@pytest.fixture
def dyadic6():
    return tree_for("dyadic", 6)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
        terminalreporter.write_line(line)
