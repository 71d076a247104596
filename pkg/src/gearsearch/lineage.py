"""Parentage-graph queries over the results log.

The index covers every spawned child, promoted or not: node ids equal the
step that spawned them, so a record's parent pointers define one edge pair
per step. Parents always have smaller ids than their children, which keeps
the graph acyclic by construction.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Set, Tuple

from .model import ROOT_ID, ExperimentRecord, OperatorKind, StateError

ParentPair = Tuple[Optional[int], Optional[int]]


@dataclass(frozen=True)
class LineageIndex:
    parent_edges: Mapping[int, ParentPair] = field(default_factory=dict)

    def parents_of(self, node: int, follow_secondary: bool) -> Tuple[int, ...]:
        if node not in self.parent_edges:
            raise StateError(f"node {node} not in lineage index")
        p1, p2 = self.parent_edges[node]
        parents = [p for p in (p1,) if p is not None]
        if follow_secondary and p2 is not None:
            parents.append(p2)
        return tuple(parents)


def build_lineage(records: Iterable[ExperimentRecord], roots: Iterable[int] = (ROOT_ID,)) -> LineageIndex:
    edges: dict[int, ParentPair] = {root: (None, None) for root in roots}
    for record in records:
        edges[record.step] = (record.parent1, record.parent2)
    return LineageIndex(edges)


def ancestors(node: int, index: LineageIndex, follow_secondary: bool = False) -> Set[int]:
    """All transitive parents of `node` via breadth-first walk, node excluded."""
    seen: Set[int] = set()
    queue = deque(index.parents_of(node, follow_secondary))
    while queue:
        current = queue.popleft()
        if current in seen:
            continue
        seen.add(current)
        queue.extend(index.parents_of(current, follow_secondary))
    return seen


def is_ancestor(a: int, b: int, index: LineageIndex, follow_secondary: bool = False) -> bool:
    """True iff `a` is reachable from `b` along parent pointers."""
    if a not in index.parent_edges:
        raise StateError(f"node {a} not in lineage index")
    return a in ancestors(b, index, follow_secondary)


def co_use_count(a: int, b: int, records: Iterable[ExperimentRecord]) -> int:
    """Number of crossover records whose unordered parent pair is {a, b}."""
    wanted = {a, b}
    return sum(
        1
        for r in records
        if r.operator is OperatorKind.CROSSOVER and {r.parent1, r.parent2} == wanted
    )
