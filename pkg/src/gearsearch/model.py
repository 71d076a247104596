"""Domain types for the elite frontier and the append-only experiment log.

Everything here is an immutable value; state transitions go through pure
functions that return new instances, so a search state can be snapshotted,
replayed, and compared for exact equality.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional, Tuple, Union

# The initial (baseline) node always gets this id; children are numbered by
# the step that spawned them.
ROOT_ID = 0


class StateError(RuntimeError):
    """An operation was applied to a search state that cannot support it."""


class Role(Enum):
    BEST = "best"
    LEAN = "lean"
    DIVERSE = "diverse"


class OperatorKind(Enum):
    MUTATION = "mutation"
    CROSSOVER = "crossover"


class MutationCategory(Enum):
    """Broad category of the change an experiment tried."""

    OPTIMIZER = "optimizer"
    ARCHITECTURE = "architecture"
    SCHEDULE = "schedule"
    DATA_BATCH = "data_batch"
    REGULARIZATION = "regularization"
    OTHER = "other"


@dataclass(frozen=True)
class Metrics:
    """Measured outcome of one training experiment.

    bpb is the scalar objective (lower is better), vram is peak memory in
    gigabytes, params is the parameter count in millions.
    """

    bpb: float
    vram: float
    params: float

    def __post_init__(self) -> None:
        if not self.bpb > 0:
            raise ValueError(f"bpb must be positive, got {self.bpb}")
        if self.vram < 0:
            raise ValueError(f"vram must be non-negative, got {self.vram}")
        if self.params < 0:
            raise ValueError(f"params must be non-negative, got {self.params}")


@dataclass(frozen=True)
class EliteNode:
    """One retained research state plus its parent-productivity statistics."""

    id: int
    artifact: Any
    metrics: Metrics
    description: str
    role: Role
    created_step: int
    parent1: Optional[int] = None
    parent2: Optional[int] = None
    n_used: int = 0
    n_success: int = 0
    mean_child_gain: float = 0.0
    last_used_step: Optional[int] = None

    def __post_init__(self) -> None:
        if self.n_used < self.n_success:
            raise ValueError("n_used cannot be below the successful-child count")
        if self.n_success == 0 and self.mean_child_gain != 0.0:
            raise ValueError("mean_child_gain must be 0 for a node with no successful children")


@dataclass(frozen=True)
class Frontier:
    """Bounded, ordered pool of elite nodes."""

    capacity: int
    members: Tuple[EliteNode, ...] = ()

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("frontier capacity must be at least 1")
        if len(self.members) > self.capacity:
            raise ValueError("frontier over capacity")
        ids = [m.id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate member ids: {ids}")

    def ids(self) -> Tuple[int, ...]:
        return tuple(m.id for m in self.members)

    def get(self, node_id: int) -> EliteNode:
        for m in self.members:
            if m.id == node_id:
                return m
        raise StateError(f"node {node_id} is not a frontier member")

    def __contains__(self, node_id: int) -> bool:
        return any(m.id == node_id for m in self.members)

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class Success:
    metrics: Metrics
    description: str
    category: MutationCategory


@dataclass(frozen=True)
class Crash:
    reason: str


Outcome = Union[Success, Crash]


class PromotionKind(Enum):
    FILL_EMPTY = "fill_empty"
    NEW_BEST = "new_best"
    REPLACE_WEAKEST = "replace_weakest"
    NEW_LEAN = "new_lean"
    NEW_DIVERSE = "new_diverse"
    DISCARD = "discard"


@dataclass(frozen=True)
class PromotionDecision:
    """Outcome of the promotion cascade for one spawned child."""

    kind: PromotionKind
    slot: Optional[int] = None  # FILL_EMPTY only
    replaced_id: Optional[int] = None  # REPLACE_WEAKEST / NEW_LEAN / NEW_DIVERSE
    reason: Optional[str] = None  # DISCARD only

    @property
    def promoted(self) -> bool:
        return self.kind is not PromotionKind.DISCARD


@dataclass(frozen=True)
class ExperimentRecord:
    """One append-only log entry; `artifact` is the spawned child's artifact."""

    step: int
    operator: OperatorKind
    parent1: int
    parent2: Optional[int]
    artifact: Any
    outcome: Outcome
    promotion: PromotionDecision
    reflection: str
    child_id: Optional[int] = None

    def __post_init__(self) -> None:
        if (self.parent2 is not None) != (self.operator is OperatorKind.CROSSOVER):
            raise ValueError("parent2 must be present exactly for crossover records")
        promoted = self.promotion.promoted and isinstance(self.outcome, Success)
        if promoted != (self.child_id is not None):
            raise ValueError("child_id must be present exactly for promoted successes")

    @property
    def crashed(self) -> bool:
        return isinstance(self.outcome, Crash)


def improvement(parent_bpb: float, child_bpb: float) -> float:
    """Signed objective gain of a child over its parent; positive is better."""
    if parent_bpb <= 0 or child_bpb <= 0:
        raise ValueError("bpb values must be positive")
    return parent_bpb - child_bpb


def weakest_elite(frontier: Frontier) -> int:
    """Id of the weakest member: highest bpb, ties to higher vram then higher id."""
    if not frontier.members:
        raise StateError("weakest_elite on an empty frontier")
    worst = max(frontier.members, key=lambda m: (m.metrics.bpb, m.metrics.vram, m.id))
    return worst.id


def assign_roles(frontier: Frontier) -> Frontier:
    """Recompute the role of every member.

    The lowest-bpb member is BEST, the lowest-vram member among the rest is
    LEAN, everyone else is DIVERSE. Ties break to the lower id, which makes
    the assignment deterministic and idempotent.
    """
    if not frontier.members:
        return frontier
    best = min(frontier.members, key=lambda m: (m.metrics.bpb, m.id))
    rest = [m for m in frontier.members if m.id != best.id]
    lean_id = None
    if rest:
        lean_id = min(rest, key=lambda m: (m.metrics.vram, m.id)).id

    def role_for(member: EliteNode) -> Role:
        if member.id == best.id:
            return Role.BEST
        if member.id == lean_id:
            return Role.LEAN
        return Role.DIVERSE

    members = tuple(
        m if m.role is role_for(m) else dataclasses.replace(m, role=role_for(m))
        for m in frontier.members
    )
    return dataclasses.replace(frontier, members=members)


def update_parent_stats(
    frontier: Frontier,
    parent1: int,
    parent2: Optional[int],
    outcome: Outcome,
    step: int,
) -> Frontier:
    """Fold one experiment outcome into the parents' statistics.

    Only primary usage counts toward n_used; the secondary parent of a
    crossover just gets its last_used_step refreshed. Crashes consume the
    parent (n_used still increments) but are excluded from mean_child_gain.
    """
    p1 = frontier.get(parent1)
    if parent2 is not None:
        frontier.get(parent2)  # raises StateError on unknown id

    if isinstance(outcome, Success):
        gain = improvement(p1.metrics.bpb, outcome.metrics.bpb)
        new_mean = (p1.mean_child_gain * p1.n_success + gain) / (p1.n_success + 1)
        p1_new = dataclasses.replace(
            p1,
            n_used=p1.n_used + 1,
            n_success=p1.n_success + 1,
            mean_child_gain=new_mean,
            last_used_step=step,
        )
    else:
        p1_new = dataclasses.replace(p1, n_used=p1.n_used + 1, last_used_step=step)

    def updated(member: EliteNode) -> EliteNode:
        if member.id == parent1:
            return p1_new
        if parent2 is not None and member.id == parent2:
            return dataclasses.replace(member, last_used_step=step)
        return member

    return dataclasses.replace(frontier, members=tuple(updated(m) for m in frontier.members))


def apply_promotion(frontier: Frontier, decision: PromotionDecision, child: EliteNode) -> Frontier:
    """Insert a promoted child, evicting whichever member the decision names.

    NEW_BEST keeps the displaced previous best in the pool and evicts the
    current weakest member instead. Roles are not recomputed here; callers
    run assign_roles afterwards.
    """
    if decision.kind is PromotionKind.DISCARD:
        return frontier
    if child.id in frontier:
        raise StateError(f"child id {child.id} already in frontier")
    if decision.kind is PromotionKind.FILL_EMPTY:
        if len(frontier) >= frontier.capacity:
            raise StateError("FILL_EMPTY on a full frontier")
        return dataclasses.replace(frontier, members=frontier.members + (child,))
    if decision.kind is PromotionKind.NEW_BEST:
        evicted = weakest_elite(frontier)
    else:
        if decision.replaced_id is None:
            raise StateError(f"{decision.kind.value} decision lacks a replaced id")
        evicted = decision.replaced_id
    if evicted not in frontier:
        raise StateError(f"replaced node {evicted} is not a frontier member")
    members = tuple(child if m.id == evicted else m for m in frontier.members)
    return dataclasses.replace(frontier, members=members)
