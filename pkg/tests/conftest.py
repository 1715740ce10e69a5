import numpy as np
import pytest

from dpassort.graph import Graph, generate_ba
from dpassort.mechanisms import test_mode


def path3():
    return Graph.from_edges(3, [(0, 1), (1, 2)])


def triangle():
    return Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


def star(k=3):
    return Graph.from_edges(k + 1, [(0, i) for i in range(1, k + 1)])


def cycle(n):
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def complete(n):
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i)])


def erdos_renyi(n, p, seed):
    rng = np.random.default_rng(seed)
    i, j = np.tril_indices(n, -1)
    keep = rng.random(i.size) < p
    return Graph(n, np.column_stack([i[keep], j[keep]]))


def random_graphs(count, max_n, seed, er_p=0.1, ba_m=3):
    """Alternating ER(p) and BA(m) graphs with at least one edge."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(5, max_n + 1))
        s = int(rng.integers(2**31))
        g = erdos_renyi(n, er_p, s) if len(out) % 2 == 0 else generate_ba(n, min(ba_m, n - 1), s)
        if g.M >= 1:
            out.append(g)
    return out


@pytest.fixture
def noiseless():
    with test_mode(True):
        yield


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    lines = getattr(module, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
