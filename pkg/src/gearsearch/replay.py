"""Replay verification: recompute every decision a log records from its own
prefix and report the first divergence, then audit the scheduling and
lineage invariants over the whole run.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from .engine import (
    EVAL_TAG,
    SPAWN_TAG,
    PolicyKind,
    RunConfig,
    hillclimb_step,
    spawn_root,
    step_rng,
    _reflection,
)
from .landscape import crossover_genome, describe_change, evaluate, mutate_genome
from .lineage import build_lineage, co_use_count
from .logio import LogFile, LogHeader, config_digest, root_node_from_header
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
    Role,
    StateError,
    Success,
    apply_promotion,
    assign_roles,
    update_parent_stats,
)
from .policy import (
    History,
    NodeInfo,
    PolicyConfig,
    _lineage_related,
    choose_operator,
    crossover_blocked,
    decide_promotion,
    select_primary,
    select_secondary,
)


class DigestMismatchError(Exception):
    """The supplied config does not match the digest recorded in the log."""


@dataclass(frozen=True)
class Divergence:
    step: int
    what: str
    expected: str
    recorded: str


@dataclass
class VerificationReport:
    policy_kind: PolicyKind
    steps_checked: int = 0
    divergence: Optional[Divergence] = None
    invariant_violations: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.divergence is None and not self.invariant_violations

    def summary(self) -> str:
        if self.passed:
            return f"PASS: {self.steps_checked} steps verified, all invariants hold"
        lines = [f"FAIL after {self.steps_checked} verified steps"]
        if self.divergence is not None:
            d = self.divergence
            lines.append(
                f"  divergence at step {d.step} ({d.what}):"
                f" expected {d.expected}, recorded {d.recorded}"
            )
        for violation in self.invariant_violations:
            lines.append(f"  invariant: {violation}")
        return "\n".join(lines)


@dataclass(frozen=True)
class StepState:
    """Decision-time context for one recorded step."""

    record: ExperimentRecord
    frontier_before: Frontier
    history_before: History
    frontier_after: Frontier


def check_digest(header: LogHeader, policy: PolicyConfig) -> None:
    expected = config_digest(header.policy_kind, header.steps, header.seed, header.landscape, policy)
    if expected != header.config_digest:
        raise DigestMismatchError(
            "config digest mismatch: the log was produced under a different configuration"
        )


def _apply_record(
    frontier: Frontier, nodes: Dict[int, NodeInfo], record: ExperimentRecord
) -> Frontier:
    frontier = update_parent_stats(frontier, record.parent1, record.parent2, record.outcome, record.step)
    if record.promotion.promoted and isinstance(record.outcome, Success):
        child = EliteNode(
            id=record.step,
            artifact=record.artifact,
            metrics=record.outcome.metrics,
            description=record.outcome.description,
            role=Role.DIVERSE,
            created_step=record.step,
            parent1=record.parent1,
            parent2=record.parent2,
        )
        frontier = assign_roles(apply_promotion(frontier, record.promotion, child))
        nodes[record.step] = NodeInfo(record.outcome.description, record.outcome.category)
    return frontier


def walk_states(
    header: LogHeader, records: Sequence[ExperimentRecord], capacity: Optional[int] = None
) -> Iterator[StepState]:
    """Reconstruct per-step state by applying recorded outcomes only.

    Works for both policies; hill climbing is a capacity-1 pool holding the
    incumbent.
    """
    root = root_node_from_header(header)
    if capacity is None:
        capacity = header.capacity if header.policy_kind is PolicyKind.GEAR_FIXED else 1
    frontier = assign_roles(Frontier(capacity=capacity, members=(root,)))
    nodes: Dict[int, NodeInfo] = {root.id: NodeInfo(root.description, MutationCategory.OTHER)}
    record_prefix: List[ExperimentRecord] = []
    for record in records:
        history = History(tuple(record_prefix), dict(nodes))
        before = frontier
        frontier = _apply_record(frontier, nodes, record)
        record_prefix.append(record)
        yield StepState(record, before, history, frontier)


def frontier_at_step(log: LogFile, step: int) -> Frontier:
    """Frontier (or incumbent pool) after the given step; step 0 is the root."""
    if step < 0 or step > len(log.records):
        raise StateError(f"step {step} outside the log (0..{len(log.records)})")
    state = None
    for state in walk_states(log.header, log.records[:step]):
        pass
    if state is None:
        root = root_node_from_header(log.header)
        capacity = log.header.capacity if log.header.policy_kind is PolicyKind.GEAR_FIXED else 1
        return assign_roles(Frontier(capacity=capacity, members=(root,)))
    return state.frontier_after


# --- decision verification ---------------------------------------------------


def _metrics_equal(a: Metrics, b: Metrics) -> bool:
    return a.bpb == b.bpb and a.vram == b.vram and a.params == b.params


def _verify_root(header: LogHeader, policy: PolicyConfig) -> Optional[Divergence]:
    config = RunConfig(header.policy_kind, header.steps, header.seed, header.landscape, policy)
    root = spawn_root(config)
    if tuple(root.artifact) != tuple(header.root_artifact):
        return Divergence(0, "root artifact", repr(root.artifact), repr(header.root_artifact))
    if not _metrics_equal(root.metrics, header.root_metrics):
        return Divergence(0, "root metrics", repr(root.metrics), repr(header.root_metrics))
    if root.description != header.root_description:
        return Divergence(0, "root description", root.description, header.root_description)
    return None


def _verify_gear_step(
    state: StepState, header: LogHeader, policy: PolicyConfig
) -> Optional[Divergence]:
    record = state.record
    frontier = state.frontier_before
    history = state.history_before
    step = record.step

    p1 = select_primary(frontier, history, policy)
    if p1 != record.parent1:
        return Divergence(step, "parent1", str(p1), str(record.parent1))
    operator = choose_operator(frontier, record.parent1, history, policy)
    if operator is not record.operator:
        return Divergence(step, "operator", operator.value, record.operator.value)
    parent = frontier.get(record.parent1)
    if record.operator is OperatorKind.CROSSOVER:
        p2 = select_secondary(frontier, record.parent1, history, policy)
        if p2 != record.parent2:
            return Divergence(step, "parent2", str(p2), str(record.parent2))
        secondary = frontier.get(record.parent2)
        genome, knob = crossover_genome(
            parent.artifact, secondary.artifact, step_rng(header.seed, step, SPAWN_TAG)
        )
    else:
        genome, knob = mutate_genome(
            parent.artifact, header.landscape.knobs, step_rng(header.seed, step, SPAWN_TAG)
        )
    if genome != tuple(record.artifact):
        return Divergence(step, "artifact", repr(genome), repr(tuple(record.artifact)))

    description = describe_change(parent.artifact, genome, header.landscape.knobs)
    category = header.landscape.knobs[knob].group
    result = evaluate(genome, header.landscape, step_rng(header.seed, step, EVAL_TAG))

    if isinstance(result, Crash):
        if not isinstance(record.outcome, Crash):
            return Divergence(step, "outcome kind", "crash", "success")
        if result.reason != record.outcome.reason:
            return Divergence(step, "crash reason", result.reason, record.outcome.reason)
        promotion = PromotionDecision(PromotionKind.DISCARD, reason="crash")
    else:
        if not isinstance(record.outcome, Success):
            return Divergence(step, "outcome kind", "success", "crash")
        if not _metrics_equal(result, record.outcome.metrics):
            return Divergence(step, "metrics", repr(result), repr(record.outcome.metrics))
        if description != record.outcome.description:
            return Divergence(step, "description", description, record.outcome.description)
        if category is not record.outcome.category:
            return Divergence(step, "category", category.value, record.outcome.category.value)
        promotion = decide_promotion(result, description, frontier, policy)

    if promotion != record.promotion:
        return Divergence(step, "promotion", repr(promotion), repr(record.promotion))
    expected_child = step if promotion.promoted and isinstance(result, Metrics) else None
    if expected_child != record.child_id:
        return Divergence(step, "child_id", str(expected_child), str(record.child_id))
    outcome = record.outcome if isinstance(result, Crash) else Success(result, description, category)
    reflection = _reflection(parent, outcome, promotion)
    if reflection != record.reflection:
        return Divergence(step, "reflection", reflection, record.reflection)
    return None


def _verify_hillclimb(
    header: LogHeader, records: Sequence[ExperimentRecord], policy: PolicyConfig
) -> Tuple[int, Optional[Divergence]]:
    incumbent = root_node_from_header(header)
    for record in records:
        step = record.step
        outcome_step = hillclimb_step(
            incumbent.artifact,
            incumbent.metrics,
            header.landscape,
            step_rng(header.seed, step, SPAWN_TAG),
            step_rng(header.seed, step, EVAL_TAG),
        )
        if record.parent1 != incumbent.id:
            return step - 1, Divergence(step, "parent1", str(incumbent.id), str(record.parent1))
        if record.operator is not OperatorKind.MUTATION:
            return step - 1, Divergence(step, "operator", "mutation", record.operator.value)
        if outcome_step.child_genome != tuple(record.artifact):
            return step - 1, Divergence(
                step, "artifact", repr(outcome_step.child_genome), repr(tuple(record.artifact))
            )
        if isinstance(outcome_step.child_result, Crash):
            if not isinstance(record.outcome, Crash):
                return step - 1, Divergence(step, "outcome kind", "crash", "success")
            expected_promotion = PromotionDecision(PromotionKind.DISCARD, reason="crash")
        else:
            if not isinstance(record.outcome, Success):
                return step - 1, Divergence(step, "outcome kind", "success", "crash")
            if not _metrics_equal(outcome_step.child_result, record.outcome.metrics):
                return step - 1, Divergence(
                    step, "metrics", repr(outcome_step.child_result), repr(record.outcome.metrics)
                )
            if outcome_step.kept:
                expected_promotion = PromotionDecision(PromotionKind.NEW_BEST)
            else:
                expected_promotion = PromotionDecision(PromotionKind.DISCARD, reason="not_better")
        if expected_promotion != record.promotion:
            return step - 1, Divergence(
                step, "promotion", repr(expected_promotion), repr(record.promotion)
            )
        if outcome_step.kept:
            incumbent = EliteNode(
                id=step,
                artifact=outcome_step.genome,
                metrics=outcome_step.metrics,
                description=record.outcome.description,
                role=Role.BEST,
                created_step=step,
                parent1=record.parent1,
            )
    return len(records), None


# --- invariant audit ----------------------------------------------------------


def _untried_pair_exists(
    frontier: Frontier, history: History, policy: PolicyConfig
) -> bool:
    """Is any unordered, never-crossed, lineage-admissible pair available?"""
    index = build_lineage(history.records) if policy.guards.skip_ancestor_pairs else None
    members = frontier.members
    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            a, b = members[i], members[j]
            if a.artifact is not None and a.artifact == b.artifact:
                continue
            if index is not None and _lineage_related(a.id, b.id, index, policy):
                continue
            if co_use_count(a.id, b.id, history.records) == 0:
                return True
    return False


def check_invariants(
    header: LogHeader, records: Sequence[ExperimentRecord], policy: PolicyConfig
) -> List[str]:
    """Audit the recorded run against every log-level invariant."""
    violations: List[str] = []

    best_so_far = header.root_metrics.bpb
    for record in records:
        if isinstance(record.outcome, Success):
            best_so_far = min(best_so_far, record.outcome.metrics.bpb)
    # running best is a prefix-min by construction; the real audits follow.

    if header.policy_kind is not PolicyKind.GEAR_FIXED:
        return violations

    run_id: Optional[int] = None
    run_length = 0
    # (record, frontier size at decision, crossover blocked at decision)
    non_crash: List[Tuple[ExperimentRecord, int, bool]] = []

    try:
        for state in walk_states(header, records):
            record = state.record
            if len(state.frontier_after) > state.frontier_after.capacity:
                violations.append(f"step {record.step}: frontier over capacity")
            roles = [m.role for m in state.frontier_after.members]
            if len(state.frontier_after) >= 2:
                if roles.count(Role.BEST) != 1 or roles.count(Role.LEAN) != 1:
                    violations.append(f"step {record.step}: role uniqueness broken")
            if record.crashed:
                continue
            blocked = crossover_blocked(state.frontier_before, record.parent1, state.history_before, policy)
            size = len(state.frontier_before)
            non_crash.append((record, size, blocked))

            if record.parent1 == run_id:
                run_length += 1
            else:
                run_id, run_length = record.parent1, 1
            if run_length > policy.max_consecutive_primary and size >= 2:
                violations.append(
                    f"step {record.step}: parent {record.parent1} used"
                    f" {run_length} consecutive non-crash steps"
                )

            if record.operator is OperatorKind.CROSSOVER:
                prior = state.history_before.records
                if policy.guards.skip_ancestor_pairs:
                    index = build_lineage(prior)
                    if _lineage_related(record.parent1, record.parent2, index, policy):
                        violations.append(
                            f"step {record.step}: crossover pairs lineage-related nodes"
                            f" {record.parent1} and {record.parent2}"
                        )
                if policy.guards.block_when_no_untried_pair:
                    if co_use_count(record.parent1, record.parent2, prior) > 0 and _untried_pair_exists(
                        state.frontier_before, state.history_before, policy
                    ):
                        violations.append(
                            f"step {record.step}: repeated crossover pair while an untried pair existed"
                        )
    except (StateError, ValueError) as err:
        violations.append(f"state reconstruction failed: {err}")
        return violations

    window = policy.crossover_window + 1
    for start in range(len(non_crash) - window + 1):
        chunk = non_crash[start : start + window]
        if any(r.operator is OperatorKind.CROSSOVER for r, _, _ in chunk):
            continue
        if all(size >= 2 and not blocked for _, size, blocked in chunk):
            violations.append(
                f"steps {chunk[0][0].step}..{chunk[-1][0].step}:"
                f" no crossover in a {window}-step eligible window"
            )

    for (record, _, _), (nxt, _, blocked) in zip(non_crash, non_crash[1:]):
        if record.promotion.promoted and nxt.operator is not OperatorKind.CROSSOVER and not blocked:
            violations.append(
                f"step {nxt.step}: promotion at step {record.step} not followed by a crossover"
            )

    return violations


def replay_verify(log: LogFile, policy: PolicyConfig) -> VerificationReport:
    """Recompute every decision from each log prefix and audit invariants."""
    check_digest(log.header, policy)
    report = VerificationReport(policy_kind=log.header.policy_kind)

    divergence = _verify_root(log.header, policy)
    if divergence is not None:
        report.divergence = divergence
        return report

    if log.header.policy_kind is PolicyKind.HILLCLIMB:
        checked, divergence = _verify_hillclimb(log.header, log.records, policy)
        report.steps_checked = checked
        report.divergence = divergence
    else:
        checked = 0
        try:
            for state in walk_states(log.header, log.records):
                divergence = _verify_gear_step(state, log.header, policy)
                if divergence is not None:
                    report.divergence = divergence
                    break
                checked += 1
        except (StateError, ValueError) as err:
            report.divergence = Divergence(checked + 1, "state", "consistent state", str(err))
        report.steps_checked = checked

    if report.divergence is None:
        report.invariant_violations = check_invariants(log.header, log.records, policy)
    return report
