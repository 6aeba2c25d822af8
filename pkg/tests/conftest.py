import itertools

import numpy as np
import pytest

from cgcnet import graph


def closure(nodes, edges):
    """Warshall transitive closure: reach[a][b] is True when a path a -> b exists."""
    idx = {n: i for i, n in enumerate(nodes)}
    k = len(nodes)
    reach = [[False] * k for _ in range(k)]
    for a, b in edges:
        reach[idx[a]][idx[b]] = True
    for m, i, j in itertools.product(range(k), repeat=3):
        if reach[i][m] and reach[m][j]:
            reach[i][j] = True
    return {(nodes[i], nodes[j]) for i in range(k) for j in range(k) if reach[i][j]}


def brute_ancestors(nodes, edges, node):
    return {a for a, b in closure(nodes, edges) if b == node and a != node}


def brute_groups(g: graph.CausalGraph):
    """Group construction applied literally from the definition; None when degenerate."""
    nodes, edges, t, y = list(g.nodes), set(g.edges), g.treatment, g.outcome
    pa = {a for a, b in edges if b == y}
    pa_cov = pa - {t}
    if not pa_cov:
        return None
    order = {n: i for i, n in enumerate(nodes)}
    srt = lambda s: tuple(sorted(s, key=order.__getitem__))
    candidates = [srt(pa_cov)]
    for x in srt(pa_cov):
        candidates.append(srt(({x} | brute_ancestors(nodes, edges, x)) - {t}))
    groups = []
    for c in candidates:
        if c and set(c) not in [set(x) for x in groups]:
            groups.append(c)
    covered = set().union(*groups)
    left = tuple(n for n in nodes if n not in (t, y) and n not in covered)
    if left and set(left) not in [set(x) for x in groups]:
        groups.append(left)
    return tuple(groups)


def random_dag(rng, max_nodes=8, p=None):
    k = int(rng.integers(3, max_nodes + 1))
    names = [f"v{i}" for i in range(k)]
    rng.shuffle(names)
    order = list(names)
    rng.shuffle(order)
    p = rng.uniform(0.15, 0.6) if p is None else p
    edges = {(order[i], order[j]) for i in range(k) for j in range(i + 1, k) if rng.uniform() < p}
    t, y = rng.choice(names, size=2, replace=False)
    return graph.CausalGraph(tuple(names), frozenset(edges), str(t), str(y))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance reporting -------------------------------------------------------------

ACCEPTANCE: dict[str, str] = {}


def record(criterion, passed: bool, detail: str) -> bool:
    ACCEPTANCE[str(criterion)] = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
