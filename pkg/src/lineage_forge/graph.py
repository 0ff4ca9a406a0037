"""Lineage data model and graph algorithms.

A project's lineage is an acyclic graph over file paths. Files with a
producing rule are `built` nodes, everything else referenced as a
prerequisite is a `source` node. All traversals break ties
lexicographically so plans and logs are identical run-to-run.
"""

from __future__ import annotations

import heapq
import posixpath
from dataclasses import dataclass, field

from .errors import (
    AbsolutePathRejected,
    CycleDetected,
    DuplicateTarget,
    UnknownGoal,
    UnknownNode,
)

SOURCE = "source"
BUILT = "built"


@dataclass(frozen=True)
class Origin:
    """Where a rule or parameter came from: file path plus 1-based line."""

    path: str
    line: int

    def __str__(self) -> str:
        return f"{self.path}:{self.line}"


@dataclass(frozen=True)
class Rule:
    """One lineage step: build `target` from `prerequisites` via `recipe`.

    Recipe lines are stored fully expanded. An empty recipe is a grouping
    rule; empty prerequisites with a recipe is a pure generator.
    """

    target: str
    prerequisites: tuple[str, ...]
    recipe: tuple[str, ...]
    origin: Origin

    def __post_init__(self) -> None:
        if not self.target:
            raise ValueError("rule target must be non-empty")
        if self.origin.line < 1:
            raise ValueError("origin line must be >= 1")


def normalize_path(path: str, origin: Origin | str = "?") -> str:
    """Normalize a rule path relative to the project root.

    Absolute paths are rejected: projects must stay relocatable.
    """
    if posixpath.isabs(path):
        raise AbsolutePathRejected(path, str(origin))
    norm = posixpath.normpath(path)
    if norm.startswith(".."):
        raise AbsolutePathRejected(path, str(origin))
    return norm


@dataclass
class LineageGraph:
    """Acyclic file-dependency graph over rules and source files.

    Immutable after construction; safe to read concurrently.
    """

    nodes: dict[str, str] = field(default_factory=dict)  # path -> SOURCE|BUILT
    edges: list[tuple[str, str]] = field(default_factory=list)  # (prereq, target)
    rules: dict[str, Rule] = field(default_factory=dict)  # target -> Rule

    def kind(self, path: str) -> str:
        try:
            return self.nodes[path]
        except KeyError:
            raise UnknownNode(path) from None

    def sources(self) -> list[str]:
        return sorted(p for p, k in self.nodes.items() if k == SOURCE)

    def built(self) -> list[str]:
        return sorted(p for p, k in self.nodes.items() if k == BUILT)

    def outgoing(self, path: str) -> list[str]:
        """Targets that list `path` as a prerequisite, sorted."""
        return sorted(t for p, t in self.edges if p == path)


def build_graph(rules: list[Rule]) -> LineageGraph:
    """Assemble and validate the lineage graph from parsed rules.

    Raises DuplicateTarget when two rules share a target and CycleDetected
    when the dependency relation is not acyclic.
    """
    by_target: dict[str, Rule] = {}
    for rule in rules:
        prior = by_target.get(rule.target)
        if prior is not None:
            raise DuplicateTarget(rule.target, str(prior.origin), str(rule.origin))
        by_target[rule.target] = rule

    nodes: dict[str, str] = {}
    edges: list[tuple[str, str]] = []
    for rule in rules:
        nodes[rule.target] = BUILT
    for rule in rules:
        for prereq in rule.prerequisites:
            nodes.setdefault(prereq, SOURCE)
            edges.append((prereq, rule.target))

    nodes = dict(sorted(nodes.items()))
    edges = sorted(set(edges))
    graph = LineageGraph(nodes=nodes, edges=edges, rules=by_target)
    _check_acyclic(graph)
    return graph


def _check_acyclic(graph: LineageGraph) -> None:
    """DFS cycle check; reports the offending path as a target list."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in graph.nodes}
    stack: list[str] = []

    def visit(node: str) -> None:
        color[node] = GREY
        stack.append(node)
        rule = graph.rules.get(node)
        prereqs = rule.prerequisites if rule else ()
        for prereq in prereqs:
            if color[prereq] == GREY:
                start = stack.index(prereq)
                cycle = stack[start:] + [prereq]
                raise CycleDetected(cycle)
            if color[prereq] == WHITE:
                visit(prereq)
        stack.pop()
        color[node] = BLACK

    for node in sorted(graph.nodes):
        if color[node] == WHITE:
            visit(node)


def ancestors(graph: LineageGraph, goal: str) -> set[str]:
    """Every node the goal transitively depends on, including the goal."""
    if goal not in graph.nodes:
        raise UnknownGoal(goal)
    seen: set[str] = set()
    todo = [goal]
    while todo:
        node = todo.pop()
        if node in seen:
            continue
        seen.add(node)
        rule = graph.rules.get(node)
        if rule:
            todo.extend(rule.prerequisites)
    return seen


def topological_order(graph: LineageGraph, goal: str) -> list[str]:
    """Dependency-respecting order over the goal's ancestor closure.

    Every prerequisite precedes its target; among the ready nodes the
    lexicographically smallest is emitted first, so the result is the
    lexicographically least valid order and is fully deterministic.
    """
    closure = ancestors(graph, goal)
    indegree = {n: 0 for n in closure}
    dependents: dict[str, list[str]] = {n: [] for n in closure}
    for node in closure:
        rule = graph.rules.get(node)
        if not rule:
            continue
        for prereq in set(rule.prerequisites):
            indegree[node] += 1
            dependents[prereq].append(node)

    ready = [n for n, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for dep in dependents[node]:
            indegree[dep] -= 1
            if indegree[dep] == 0:
                heapq.heappush(ready, dep)
    return order


def descendants(graph: LineageGraph, node: str) -> set[str]:
    """Transitive closure of targets reachable from `node`, excluding it."""
    if node not in graph.nodes:
        raise UnknownNode(node)
    dependents: dict[str, list[str]] = {}
    for prereq, target in graph.edges:
        dependents.setdefault(prereq, []).append(target)
    seen: set[str] = set()
    todo = list(dependents.get(node, ()))
    while todo:
        current = todo.pop()
        if current in seen:
            continue
        seen.add(current)
        todo.extend(dependents.get(current, ()))
    return seen
