import numpy as np
import pytest

from sinn.graph import compile_masks, hierarchy_graph, parse_graph

TOY = """\
# indoor/outdoor toy taxonomy
layer scene: indoor, outdoor
layer place: office, beach, forest
pos scene.indoor place.office
neg scene.indoor place.beach
"""


@pytest.fixture
def toy_graph():
    return parse_graph(TOY)


@pytest.fixture
def small():
    """T = 3, n = (2, 3, 4) taxonomy with sibling exclusions, plus its masks."""
    g = hierarchy_graph((2, 3, 4), seed=1, exclusive_siblings=True)
    return g, compile_masks(g)


def random_targets(rng, sizes, n):
    return [rng.integers(0, 2, size=(n, k)).astype(float) for k in sizes]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES

    if LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
