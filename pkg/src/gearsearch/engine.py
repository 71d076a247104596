"""End-to-end run loop for both search policies.

A run is fully determined by (policy kind, steps, seed, landscape, policy
config): every random draw comes from a stream keyed on the run seed, the
step index, and a purpose tag, so spawning and evaluation are independently
reproducible during replay.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

from .landscape import (
    Genome,
    LandscapeSpec,
    crossover_genome,
    describe_change,
    evaluate,
    mutate_genome,
)
from .model import (
    Crash,
    EliteNode,
    ExperimentRecord,
    Frontier,
    Metrics,
    MutationCategory,
    OperatorKind,
    PromotionDecision,
    PromotionKind,
    ROOT_ID,
    Role,
    Success,
    apply_promotion,
    assign_roles,
    improvement,
    update_parent_stats,
)
from .policy import (
    History,
    NodeInfo,
    PolicyConfig,
    choose_operator,
    decide_promotion,
    select_primary,
    select_secondary,
)

ROOT_DESCRIPTION = "baseline configuration"

SPAWN_TAG = "spawn"
EVAL_TAG = "evaluate"


class PolicyKind(Enum):
    HILLCLIMB = "hillclimb"
    GEAR_FIXED = "gear-fixed"


@dataclass(frozen=True)
class RunConfig:
    policy_kind: PolicyKind
    steps: int
    seed: int
    landscape: LandscapeSpec
    policy: PolicyConfig

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be at least 1")


@dataclass(frozen=True)
class RunResult:
    config: RunConfig
    root: EliteNode
    records: Tuple[ExperimentRecord, ...]


def step_rng(seed: int, step: int, tag: str) -> random.Random:
    """Independent seeded stream for one (step, purpose) pair."""
    digest = hashlib.sha256(f"{seed}:{step}:{tag}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def spawn_root(config: RunConfig) -> EliteNode:
    """Evaluate the landscape baseline as node 0."""
    result = evaluate(config.landscape.baseline, config.landscape, step_rng(config.seed, 0, EVAL_TAG))
    if isinstance(result, Crash):
        raise ValueError(f"baseline genome crashes: {result.reason}")
    return EliteNode(
        id=ROOT_ID,
        artifact=config.landscape.baseline,
        metrics=result,
        description=ROOT_DESCRIPTION,
        role=Role.BEST,
        created_step=0,
    )


def _reflection(parent: EliteNode, outcome: Union[Success, Crash], promotion: PromotionDecision) -> str:
    if isinstance(outcome, Crash):
        return (
            f"parent {parent.id} bpb {parent.metrics.bpb:.5f}; run crashed ({outcome.reason});"
            " avoid this combination until the base changes"
        )
    delta = improvement(parent.metrics.bpb, outcome.metrics.bpb)
    verdicts = {
        PromotionKind.FILL_EMPTY: lambda d: f"filled empty slot {d.slot}",
        PromotionKind.NEW_BEST: lambda d: "promoted as the new best",
        PromotionKind.REPLACE_WEAKEST: lambda d: f"replaced weakest elite {d.replaced_id}",
        PromotionKind.NEW_LEAN: lambda d: f"promoted as lean, replacing {d.replaced_id}",
        PromotionKind.NEW_DIVERSE: lambda d: f"kept as a diverse line, replacing {d.replaced_id}",
        PromotionKind.DISCARD: lambda d: f"discarded ({d.reason})",
    }
    verdict = verdicts[promotion.kind](promotion)
    note = (
        "recombine with complementary lines"
        if delta > 0
        else "may merit revisiting from a stronger base"
    )
    return (
        f"parent {parent.id} bpb {parent.metrics.bpb:.5f} -> child bpb"
        f" {outcome.metrics.bpb:.5f} (delta {delta:+.5f}); {verdict}; {note}"
    )


@dataclass(frozen=True)
class HillclimbStep:
    """One keep-or-discard iteration: the surviving incumbent plus what was tried."""

    genome: Genome
    metrics: Metrics
    kept: bool
    child_genome: Genome
    child_result: Union[Metrics, Crash]
    changed_knob: int


def hillclimb_step(
    incumbent_genome: Genome,
    incumbent_metrics: Metrics,
    landscape: LandscapeSpec,
    spawn_rng: random.Random,
    eval_rng: random.Random,
) -> HillclimbStep:
    """Mutate the incumbent and keep the child only on strict improvement."""
    child_genome, knob = mutate_genome(incumbent_genome, landscape.knobs, spawn_rng)
    result = evaluate(child_genome, landscape, eval_rng)
    kept = isinstance(result, Metrics) and result.bpb < incumbent_metrics.bpb
    if kept:
        return HillclimbStep(child_genome, result, True, child_genome, result, knob)
    return HillclimbStep(incumbent_genome, incumbent_metrics, False, child_genome, result, knob)


def _run_hillclimb(config: RunConfig, root: EliteNode) -> Tuple[ExperimentRecord, ...]:
    landscape = config.landscape
    incumbent = root
    records: List[ExperimentRecord] = []
    for step in range(1, config.steps + 1):
        outcome_step = hillclimb_step(
            incumbent.artifact,
            incumbent.metrics,
            landscape,
            step_rng(config.seed, step, SPAWN_TAG),
            step_rng(config.seed, step, EVAL_TAG),
        )
        if isinstance(outcome_step.child_result, Crash):
            outcome: Union[Success, Crash] = outcome_step.child_result
            promotion = PromotionDecision(PromotionKind.DISCARD, reason="crash")
        else:
            description = describe_change(incumbent.artifact, outcome_step.child_genome, landscape.knobs)
            category = landscape.knobs[outcome_step.changed_knob].group
            outcome = Success(outcome_step.child_result, description, category)
            if outcome_step.kept:
                promotion = PromotionDecision(PromotionKind.NEW_BEST)
            else:
                promotion = PromotionDecision(PromotionKind.DISCARD, reason="not_better")
        records.append(
            ExperimentRecord(
                step=step,
                operator=OperatorKind.MUTATION,
                parent1=incumbent.id,
                parent2=None,
                artifact=outcome_step.child_genome,
                outcome=outcome,
                promotion=promotion,
                reflection=_reflection(incumbent, outcome, promotion),
                child_id=step if promotion.promoted else None,
            )
        )
        if outcome_step.kept:
            incumbent = EliteNode(
                id=step,
                artifact=outcome_step.child_genome,
                metrics=outcome_step.metrics,
                description=outcome.description,
                role=Role.BEST,
                created_step=step,
                parent1=incumbent.id,
            )
    return tuple(records)


def _run_gear(config: RunConfig, root: EliteNode) -> Tuple[ExperimentRecord, ...]:
    landscape = config.landscape
    policy = config.policy
    frontier = assign_roles(Frontier(capacity=policy.capacity, members=(root,)))
    nodes: Dict[int, NodeInfo] = {ROOT_ID: NodeInfo(root.description, MutationCategory.OTHER)}
    records: List[ExperimentRecord] = []

    for step in range(1, config.steps + 1):
        history = History(tuple(records), dict(nodes))
        p1_id = select_primary(frontier, history, policy)
        p1 = frontier.get(p1_id)
        operator = choose_operator(frontier, p1_id, history, policy)
        p2_id: Optional[int] = None
        if operator is OperatorKind.CROSSOVER:
            p2_id = select_secondary(frontier, p1_id, history, policy)
            if p2_id is None:
                raise AssertionError("crossover chosen with no usable secondary parent")
            p2 = frontier.get(p2_id)
            child_genome, knob = crossover_genome(
                p1.artifact, p2.artifact, step_rng(config.seed, step, SPAWN_TAG)
            )
        else:
            child_genome, knob = mutate_genome(
                p1.artifact, landscape.knobs, step_rng(config.seed, step, SPAWN_TAG)
            )
        description = describe_change(p1.artifact, child_genome, landscape.knobs)
        category = landscape.knobs[knob].group

        result = evaluate(child_genome, landscape, step_rng(config.seed, step, EVAL_TAG))
        if isinstance(result, Crash):
            outcome: Union[Success, Crash] = result
            promotion = PromotionDecision(PromotionKind.DISCARD, reason="crash")
        else:
            outcome = Success(result, description, category)
            promotion = decide_promotion(result, description, frontier, policy)

        frontier = update_parent_stats(frontier, p1_id, p2_id, outcome, step)
        child_id = None
        if promotion.promoted:
            child_id = step
            child = EliteNode(
                id=step,
                artifact=child_genome,
                metrics=result,
                description=description,
                role=Role.DIVERSE,
                created_step=step,
                parent1=p1_id,
                parent2=p2_id,
            )
            frontier = assign_roles(apply_promotion(frontier, promotion, child))
            nodes[step] = NodeInfo(description, category)

        records.append(
            ExperimentRecord(
                step=step,
                operator=operator,
                parent1=p1_id,
                parent2=p2_id,
                artifact=child_genome,
                outcome=outcome,
                promotion=promotion,
                reflection=_reflection(p1, outcome, promotion),
                child_id=child_id,
            )
        )
    return tuple(records)


def run_search(config: RunConfig) -> RunResult:
    """Execute a full run; deterministic given the config."""
    root = spawn_root(config)
    if config.policy_kind is PolicyKind.HILLCLIMB:
        records = _run_hillclimb(config, root)
    else:
        records = _run_gear(config, root)
    return RunResult(config=config, root=root, records=records)
