"""Deterministic search-policy decisions: parent scoring and selection,
operator scheduling, and the promotion cascade.

Every function here is a pure function of (frontier, log prefix, config),
which is what makes recorded runs replayable decision by decision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple

from .lineage import LineageIndex, ancestors, build_lineage, co_use_count
from .model import (
    ExperimentRecord,
    Frontier,
    Metrics,
    MutationCategory,
    OperatorKind,
    PromotionDecision,
    PromotionKind,
    ROOT_ID,
    Role,
    StateError,
    weakest_elite,
)
from .textsim import jaccard_distance, novelty, tokenize


@dataclass(frozen=True)
class GuardToggles:
    """End-state lineage/crossover guard rules, individually switchable.

    All default on; turning them all off leaves the bare composite-score
    controller.
    """

    block_until_two_nonbaseline: bool = True
    skip_ancestor_pairs: bool = True
    best_first_warmup: bool = True
    multi_hop_ancestry: bool = True
    block_when_no_untried_pair: bool = True
    follow_secondary_ancestry: bool = True


@dataclass(frozen=True)
class PolicyConfig:
    """All weights, margins, windows, quotas, and guard toggles."""

    # composite score weights
    beta: float = 0.5
    lambda_novelty: float = 0.3
    gamma_coverage: float = 0.3
    exploration_phase_steps: int = 25
    lambda_late: float = 0.1
    gamma_late: float = 0.1
    # secondary-parent complementarity
    alpha_role_mismatch: float = 0.2
    mu_pair_penalty: float = 0.1
    # promotion margins
    eps_improve: float = 1.5e-4
    eps_tie: float = 1.2e-4
    lean_margin_gb: float = 0.5
    diverse_jaccard_threshold: float = 0.65
    diverse_slack: float = 1.0e-3
    # recency shaping
    recency_penalty_1: float = -0.2
    recency_penalty_2: float = -0.05
    fresh_bonus: float = 0.05
    fresh_window: int = 2
    # rotation quotas and operator scheduling
    max_consecutive_primary: int = 2
    crossover_window: int = 4
    distinct_parent_window: int = 6
    min_distinct_parents: int = 3
    best_warmup_expansions: int = 3
    capacity: int = 4
    # novelty recency window
    novelty_window: int = 5
    novelty_include_secondary: bool = False
    guards: GuardToggles = field(default_factory=GuardToggles)

    def __post_init__(self) -> None:
        for name in ("eps_improve", "eps_tie", "lean_margin_gb", "diverse_slack"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in (
            "exploration_phase_steps",
            "fresh_window",
            "max_consecutive_primary",
            "crossover_window",
            "distinct_parent_window",
            "min_distinct_parents",
            "best_warmup_expansions",
            "novelty_window",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.capacity < 3:
            raise ValueError("capacity must be at least 3 (one slot per role)")
        if not 0.0 <= self.diverse_jaccard_threshold <= 1.0:
            raise ValueError("diverse_jaccard_threshold must lie in [0, 1]")
        for name in (
            "beta",
            "lambda_novelty",
            "gamma_coverage",
            "lambda_late",
            "gamma_late",
            "alpha_role_mismatch",
            "mu_pair_penalty",
            "recency_penalty_1",
            "recency_penalty_2",
            "fresh_bonus",
        ):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class NodeInfo:
    """Description and change category of a node, kept for evicted parents."""

    description: str
    category: MutationCategory


@dataclass(frozen=True)
class History:
    """Log prefix plus the registry of every node ever promoted (and the root)."""

    records: Tuple[ExperimentRecord, ...] = ()
    nodes: Mapping[int, NodeInfo] = field(default_factory=dict)

    @property
    def next_step(self) -> int:
        return len(self.records) + 1

    def non_crash(self) -> Tuple[ExperimentRecord, ...]:
        return tuple(r for r in self.records if not r.crashed)

    def recent_primaries(self, count: int) -> Tuple[int, ...]:
        """Primary-parent ids of the last `count` non-crash records, oldest first."""
        tail = self.non_crash()[-count:]
        return tuple(r.parent1 for r in tail)

    def consecutive_primary_run(self, node_id: int) -> int:
        """Length of the trailing run of non-crash records with this primary."""
        run = 0
        for record in reversed(self.non_crash()):
            if record.parent1 != node_id:
                break
            run += 1
        return run


@dataclass(frozen=True)
class ScoreBreakdown:
    """Additive components of one elite's selection score."""

    productivity: float
    exploration_bonus: float
    novelty_term: float
    coverage_term: float
    recency_term: float
    total: float


def productivity_score(mean_child_gain: float, n_used: int, total_expansions: int, beta: float) -> float:
    """Mean child gain plus an upper-confidence bonus for under-expanded elites."""
    if total_expansions < 0:
        raise ValueError("total_expansions must be non-negative")
    bonus = beta * math.sqrt(math.log(total_expansions + 2) / (n_used + 1))
    return mean_child_gain + bonus


def coverage(node_id: int, frontier: Frontier, categories: Mapping[int, MutationCategory]) -> float:
    """1/sqrt(k+1) where k counts other members sharing this node's role and category."""
    member = frontier.get(node_id)
    k = sum(
        1
        for other in frontier.members
        if other.id != node_id
        and other.role is member.role
        and categories[other.id] is categories[node_id]
    )
    return 1.0 / math.sqrt(k + 1)


def recency_adjustment(node_id: int, created_step: int, n_used: int, history: History, config: PolicyConfig) -> float:
    """Penalty for very recent primary use; small bonus for fresh unused elites."""
    recent = history.recent_primaries(2)
    if len(recent) >= 1 and recent[-1] == node_id:
        return config.recency_penalty_1
    if len(recent) >= 2 and recent[-2] == node_id:
        return config.recency_penalty_2
    if n_used == 0 and history.next_step - created_step <= config.fresh_window:
        return config.fresh_bonus
    return 0.0


def _recent_parent_descriptions(node_id: int, history: History, config: PolicyConfig) -> list[str]:
    window = history.non_crash()[-config.novelty_window :]
    recent_ids: list[int] = []
    for record in window:
        recent_ids.append(record.parent1)
        if config.novelty_include_secondary and record.parent2 is not None:
            recent_ids.append(record.parent2)
    descriptions = []
    for rid in dict.fromkeys(recent_ids):  # distinct, order kept
        if rid == node_id:
            continue
        descriptions.append(history.nodes[rid].description)
    return descriptions


def score_elite(node_id: int, frontier: Frontier, history: History, config: PolicyConfig) -> ScoreBreakdown:
    member = frontier.get(node_id)
    total_expansions = sum(m.n_used for m in frontier.members)
    bonus = config.beta * math.sqrt(math.log(total_expansions + 2) / (member.n_used + 1))

    late = history.next_step > config.exploration_phase_steps
    lam = config.lambda_late if late else config.lambda_novelty
    gam = config.gamma_late if late else config.gamma_coverage

    nov = novelty(member.description, _recent_parent_descriptions(node_id, history, config))
    categories = {m.id: history.nodes[m.id].category for m in frontier.members}
    cov = coverage(node_id, frontier, categories)
    rec = recency_adjustment(node_id, member.created_step, member.n_used, history, config)

    productivity = member.mean_child_gain
    novelty_term = lam * nov
    coverage_term = gam * cov
    total = productivity + bonus + novelty_term + coverage_term + rec
    return ScoreBreakdown(productivity, bonus, novelty_term, coverage_term, rec, total)


def select_primary(frontier: Frontier, history: History, config: PolicyConfig) -> int:
    """Pick the primary parent: score argmax under the rotation constraints."""
    members = frontier.members
    if not members:
        raise StateError("select_primary on an empty frontier")

    def capped(node_id: int) -> bool:
        # A parent may not exceed max_consecutive_primary runs while others exist.
        return (
            len(members) >= 2
            and history.consecutive_primary_run(node_id) >= config.max_consecutive_primary
        )

    if config.guards.best_first_warmup:
        best = next((m for m in members if m.role is Role.BEST), None)
        if best is not None and best.n_used < config.best_warmup_expansions and not capped(best.id):
            return best.id

    eligible = [m for m in members if not capped(m.id)]
    if not eligible:
        eligible = list(members)

    if len(members) >= 3:
        window = history.recent_primaries(config.distinct_parent_window)
        if len(set(window)) < config.min_distinct_parents:
            unused = [m for m in eligible if m.id not in window]
            if unused:
                eligible = unused

    scored = [(score_elite(m.id, frontier, history, config).total, m.id) for m in eligible]
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return scored[0][1]


def complementarity(
    candidate_id: int,
    primary_id: int,
    frontier: Frontier,
    records: Sequence[ExperimentRecord],
    config: PolicyConfig,
) -> float:
    """Secondary-parent score: textual distance, role mismatch, pair-reuse penalty."""
    if candidate_id == primary_id:
        raise StateError("candidate equals the primary parent")
    candidate = frontier.get(candidate_id)
    primary = frontier.get(primary_id)
    distance = jaccard_distance(tokenize(primary.description), tokenize(candidate.description))
    mismatch = config.alpha_role_mismatch if candidate.role is not primary.role else 0.0
    penalty = config.mu_pair_penalty * co_use_count(primary_id, candidate_id, records)
    return distance + mismatch - penalty


def _lineage_related(a: int, b: int, index: LineageIndex, config: PolicyConfig) -> bool:
    follow = config.guards.follow_secondary_ancestry
    if config.guards.multi_hop_ancestry:
        return a in ancestors(b, index, follow) or b in ancestors(a, index, follow)
    return a in index.parents_of(b, follow) or b in index.parents_of(a, follow)


def select_secondary(
    frontier: Frontier, primary_id: int, history: History, config: PolicyConfig
) -> Optional[int]:
    """Pick the crossover partner, or None when guards leave no usable pair."""
    primary = frontier.get(primary_id)
    candidates = [m for m in frontier.members if m.id != primary_id]
    # Crossing identical artifacts is degenerate; such candidates are never usable.
    candidates = [
        m
        for m in candidates
        if m.artifact is None or primary.artifact is None or m.artifact != primary.artifact
    ]
    if config.guards.skip_ancestor_pairs and candidates:
        index = build_lineage(history.records)
        candidates = [m for m in candidates if not _lineage_related(primary_id, m.id, index, config)]
    if not candidates:
        return None
    if config.guards.block_when_no_untried_pair:
        untried = [m for m in candidates if co_use_count(primary_id, m.id, history.records) == 0]
        if not untried:
            # Every surviving partner was already paired with the primary;
            # repeating one is never allowed under this guard, so the caller
            # falls back to mutation (a different primary may later open an
            # untried pair).
            return None
        candidates = untried
    scored = [
        (complementarity(m.id, primary_id, frontier, history.records, config), m.id)
        for m in candidates
    ]
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return scored[0][1]


def crossover_blocked(frontier: Frontier, primary_id: int, history: History, config: PolicyConfig) -> bool:
    """True when crossover cannot run at this step (too few elites or guards)."""
    if len(frontier) < 2:
        return True
    if config.guards.block_until_two_nonbaseline:
        if sum(1 for m in frontier.members if m.id != ROOT_ID) < 2:
            return True
    return select_secondary(frontier, primary_id, history, config) is None


def choose_operator(
    frontier: Frontier, primary_id: int, history: History, config: PolicyConfig
) -> OperatorKind:
    """Mutation unless crossover is both possible and currently forced.

    Crossover is forced when none happened in the last crossover_window
    non-crash experiments, or right after a promotion, so recombination
    keeps pace with discovery.
    """
    if crossover_blocked(frontier, primary_id, history, config):
        return OperatorKind.MUTATION
    non_crash = history.non_crash()
    window = non_crash[-config.crossover_window :]
    no_recent_crossover = not any(r.operator is OperatorKind.CROSSOVER for r in window)
    after_promotion = bool(non_crash) and non_crash[-1].promotion.promoted
    if no_recent_crossover or after_promotion:
        return OperatorKind.CROSSOVER
    return OperatorKind.MUTATION


def decide_promotion(
    child_metrics: Metrics, child_description: str, frontier: Frontier, config: PolicyConfig
) -> PromotionDecision:
    """Run the promotion cascade; the first matching rule wins.

    Expects frontier roles to be current (assign_roles is run after every
    promotion).
    """
    members = frontier.members
    if len(members) < frontier.capacity:
        return PromotionDecision(PromotionKind.FILL_EMPTY, slot=len(members))

    best = min(members, key=lambda m: (m.metrics.bpb, m.id))
    if child_metrics.bpb < best.metrics.bpb - config.eps_improve:
        return PromotionDecision(PromotionKind.NEW_BEST)

    weakest = frontier.get(weakest_elite(frontier))
    if child_metrics.bpb < weakest.metrics.bpb - config.eps_improve:
        return PromotionDecision(PromotionKind.REPLACE_WEAKEST, replaced_id=weakest.id)

    lean = next((m for m in members if m.role is Role.LEAN), None)
    if (
        lean is not None
        and child_metrics.bpb <= best.metrics.bpb + config.eps_tie
        and child_metrics.vram <= lean.metrics.vram - config.lean_margin_gb
    ):
        return PromotionDecision(PromotionKind.NEW_LEAN, replaced_id=lean.id)

    if child_metrics.bpb <= weakest.metrics.bpb + config.diverse_slack:
        child_tokens = tokenize(child_description)
        distances = {
            m.id: jaccard_distance(child_tokens, tokenize(m.description)) for m in members
        }
        if min(distances.values()) >= config.diverse_jaccard_threshold:
            diverse = [m for m in members if m.role is Role.DIVERSE]
            if diverse:
                # Displace the diverse member closest to the child, keeping the
                # most distinct remaining lines alive.
                target = min(diverse, key=lambda m: (distances[m.id], m.id))
                return PromotionDecision(PromotionKind.NEW_DIVERSE, replaced_id=target.id)

    return PromotionDecision(PromotionKind.DISCARD, reason="thresholds")
