"""
Causal graphs and interaction-constraining variable groups.

A :class:`CausalGraph` is an immutable named DAG with a designated
treatment and outcome. :func:`build_groups` turns it into the list of
covariate groups that are allowed to interact inside a constrained network.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import networkx as nx


class GraphError(ValueError):
    """Raised for malformed graphs or graphs that cannot yield groups."""


class DegenerateGroupingError(GraphError):
    """No covariate reaches the outcome, so no group can be formed."""


@dataclass(frozen=True)
class CausalGraph:
    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]]
    treatment: str
    outcome: str

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", frozenset((str(a), str(b)) for a, b in self.edges))
        if len(set(self.nodes)) != len(self.nodes):
            dup = [n for n, c in Counter(self.nodes).items() if c > 1]
            raise GraphError(f"duplicate node names: {dup}")
        declared = set(self.nodes)
        for a, b in self.edges:
            if a not in declared or b not in declared:
                raise GraphError(f"edge {a} -> {b} references an undeclared node")
            if a == b:
                raise GraphError(f"self-loop on {a}")
        for role, name in (("treatment", self.treatment), ("outcome", self.outcome)):
            if name not in declared:
                raise GraphError(f"{role} {name!r} is not a declared node")
        if self.treatment == self.outcome:
            raise GraphError("treatment and outcome must differ")
        if _find_cycle(self.nodes, self.edges) is not None:
            raise GraphError("graph contains a cycle")

    @property
    def covariates(self) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if n not in (self.treatment, self.outcome))

    def parents(self, node: str) -> set[str]:
        self._check(node)
        return {a for a, b in self.edges if b == node}

    def children(self, node: str) -> set[str]:
        self._check(node)
        return {b for a, b in self.edges if a == node}

    def sorted_edges(self) -> list[tuple[str, str]]:
        pos = {n: i for i, n in enumerate(self.nodes)}
        return sorted(self.edges, key=lambda e: (pos[e[0]], pos[e[1]]))

    def _check(self, node: str):
        if node not in self.nodes:
            raise GraphError(f"unknown node {node!r}")


@dataclass(frozen=True)
class VariableGrouping:
    groups: tuple[tuple[str, ...], ...]
    covariates: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(tuple(g) for g in self.groups))
        object.__setattr__(self, "covariates", tuple(self.covariates))
        seen = []
        for g in self.groups:
            if not g:
                raise GraphError("empty group")
            if set(g) in seen:
                raise GraphError(f"duplicate group {g}")
            seen.append(set(g))

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    def interaction_pairs(self) -> set[frozenset[str]]:
        """Unordered covariate pairs that share at least one group."""
        return {frozenset(p) for g in self.groups for p in itertools.combinations(g, 2)}


def _find_cycle(nodes: Iterable[str], edges: Iterable[tuple[str, str]]):
    g = nx.DiGraph()
    g.add_nodes_from(nodes)
    g.add_edges_from(edges)
    try:
        return nx.find_cycle(g)
    except nx.NetworkXNoCycle:
        return None


def topological_order(g: CausalGraph) -> list[str]:
    """Kahn's algorithm, breaking ties by declaration order."""
    indeg = {n: 0 for n in g.nodes}
    for _, b in g.edges:
        indeg[b] += 1
    order = []
    ready = [n for n in g.nodes if indeg[n] == 0]
    pos = {n: i for i, n in enumerate(g.nodes)}
    while ready:
        ready.sort(key=pos.__getitem__)
        n = ready.pop(0)
        order.append(n)
        for c in sorted(g.children(n), key=pos.__getitem__):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    return order


def ancestors(g: CausalGraph, node: str) -> set[str]:
    """All nodes with a directed path into ``node`` (``node`` excluded)."""
    g._check(node)
    parents_of: dict[str, list[str]] = {n: [] for n in g.nodes}
    for a, b in g.edges:
        parents_of[b].append(a)
    seen: set[str] = set()
    stack = list(parents_of[node])
    while stack:
        n = stack.pop()
        if n not in seen:
            seen.add(n)
            stack.extend(parents_of[n])
    return seen


def _ordered(names: Iterable[str], order: Sequence[str]) -> tuple[str, ...]:
    names = set(names)
    return tuple(n for n in order if n in names)


def _dedup_append(groups: list[tuple[str, ...]], group: tuple[str, ...]):
    if group and all(set(group) != set(g) for g in groups):
        groups.append(group)


def build_groups(g: CausalGraph, covariates: Sequence[str] | None = None) -> VariableGrouping:
    """
    Derive the covariate groups allowed to interact.

    The first group holds the parents of the outcome (treatment removed); then,
    for each such parent in declaration order, the parent together with its
    ancestors (treatment removed). Empty and set-equal groups are dropped and
    any covariate not yet covered ends up in one trailing leftover group.

    Parameters
    ----------
    g : CausalGraph
    covariates : sequence of str, optional
        Adjustment set to cover. Defaults to every node other than the
        treatment and the outcome.
    """
    covariates = tuple(g.covariates if covariates is None else covariates)
    t, y = g.treatment, g.outcome
    pa = g.parents(y)
    pa_cov = pa - {t}
    if not pa_cov:
        raise DegenerateGroupingError(
            f"parents of {y!r} are {sorted(pa)}; no covariate information reaches the outcome"
        )
    order = g.nodes
    groups: list[tuple[str, ...]] = []
    _dedup_append(groups, _ordered(pa_cov, order))
    for x in _ordered(pa_cov, order):
        _dedup_append(groups, _ordered(({x} | ancestors(g, x)) - {t}, order))
    covered = set().union(*map(set, groups))
    leftover = tuple(c for c in covariates if c not in covered)
    _dedup_append(groups, leftover)
    return VariableGrouping(tuple(groups), covariates)


def groups_from_forbidden(
    covariates: Sequence[str], forbidden_pairs: Iterable[Iterable[str]]
) -> VariableGrouping:
    """
    Maximal covariate subsets that contain no forbidden pair.

    These are the maximal cliques of the complement of the forbidden-pair
    graph. Groups are returned sorted by the covariates' declared positions.
    """
    covariates = tuple(covariates)
    pos = {c: i for i, c in enumerate(covariates)}
    allowed = nx.complete_graph(covariates)
    for pair in forbidden_pairs:
        a, b = tuple(pair)
        for c in (a, b):
            if c not in pos:
                raise GraphError(f"forbidden pair references unknown covariate {c!r}")
        if allowed.has_edge(a, b):
            allowed.remove_edge(a, b)
    cliques = [tuple(sorted(c, key=pos.__getitem__)) for c in nx.find_cliques(allowed)]
    cliques.sort(key=lambda c: [pos[x] for x in c])
    return VariableGrouping(tuple(cliques), covariates)


def normalize_discovered(g: CausalGraph) -> CausalGraph:
    """Point every edge touching the outcome into the outcome."""
    y = g.outcome
    edges = {(b, a) if a == y else (a, b) for a, b in g.edges}
    cycle = _find_cycle(g.nodes, edges)
    if cycle is not None:
        path = " -> ".join(a for a, _ in cycle) + f" -> {cycle[0][0]}"
        raise GraphError(f"reorienting edges into {y!r} creates the cycle {path}")
    return CausalGraph(g.nodes, frozenset(edges), g.treatment, g.outcome)


def mode_graph(graphs: Sequence[CausalGraph]) -> CausalGraph:
    """
    Most frequent edge set among ``graphs``.

    Ties go to the smaller edge set, then to the lexicographically smaller
    sorted edge list.
    """
    if not graphs:
        raise GraphError("mode_graph needs at least one graph")
    nodes = set(graphs[0].nodes)
    for other in graphs[1:]:
        if set(other.nodes) != nodes:
            raise GraphError("graphs have different node sets")
    counts = Counter(g.edges for g in graphs)
    best = min(counts, key=lambda e: (-counts[e], len(e), sorted(e)))
    return next(g for g in graphs if g.edges == best)


def fully_connected_grouping(covariates: Sequence[str]) -> VariableGrouping:
    return VariableGrouping((tuple(covariates),), tuple(covariates))


# text format -----------------------------------------------------------------

def dumps(g: CausalGraph) -> str:
    lines = [
        f"#treatment {g.treatment}",
        f"#outcome {g.outcome}",
        f"#nodes {','.join(g.nodes)}",
    ]
    lines += [f"{a} -> {b}" for a, b in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def loads(text: str) -> CausalGraph:
    treatment = outcome = None
    nodes: list[str] | None = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(" ")
            value = value.strip()
            if key == "treatment":
                treatment = value
            elif key == "outcome":
                outcome = value
            elif key == "nodes":
                nodes = [v.strip() for v in value.split(",") if v.strip()]
            else:
                raise GraphError(f"line {lineno}: unknown header #{key}")
            continue
        parent, arrow, child = line.partition("->")
        if not arrow or not parent.strip() or not child.strip():
            raise GraphError(f"line {lineno}: expected 'parent -> child', got {raw!r}")
        edges.append((parent.strip(), child.strip()))
    if treatment is None or outcome is None:
        raise GraphError("missing #treatment or #outcome header")
    if nodes is None:
        nodes = []
        for e in edges:
            nodes += [n for n in e if n not in nodes]
        nodes += [n for n in (treatment, outcome) if n not in nodes]
    return CausalGraph(tuple(nodes), frozenset(edges), treatment, outcome)


def read_graph(path) -> CausalGraph:
    return loads(Path(path).read_text(encoding="utf-8"))


def write_graph(g: CausalGraph, path) -> None:
    Path(path).write_text(dumps(g), encoding="utf-8")
