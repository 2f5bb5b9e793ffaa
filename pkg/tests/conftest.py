import numpy as np
import pytest

from rprembed.graph import Graph

ACCEPTANCE_LINES = pytest.StashKey[list]()


def make_graph(n, edges, weights=None, content=None, labels=None, node_ids=None):
    src = [a for a, _ in edges]
    dst = [b for _, b in edges]
    if content is None:
        content = np.eye(n)
    return Graph.from_edges(n, src, dst, weights, content, labels, node_ids)


@pytest.fixture
def two_node():
    return make_graph(2, [(0, 1)])


@pytest.fixture
def triangle():
    return make_graph(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def path3():
    return make_graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def star4():
    """K_{1,4} with the center at node 0."""
    return make_graph(5, [(0, 1), (0, 2), (0, 3), (0, 4)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda ln: int(ln.split()[1])):
            terminalreporter.write_line(line)
