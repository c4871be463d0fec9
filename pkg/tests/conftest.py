import numpy as np
import pytest

from nearcrit.lattice import build_from_points


@pytest.fixture
def square():
    """The 2x2 box at spacing 1."""
    return build_from_points(1, [(0, 0), (1, 0), (0, 1), (1, 1)])


def edge_between(g, u, v):
    """Index of the internal edge joining vertices ``u`` and ``v``."""
    for e in range(g.n_internal):
        if {int(t) for t in g.edges[e]} == {u, v}:
            return e
    raise KeyError((u, v))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
