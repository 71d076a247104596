"""Deterministic frontier-based genetic search controller with a synthetic
experiment harness, append-only run logs, and decision-level replay."""

from .engine import PolicyKind, RunConfig, RunResult, run_search
from .landscape import LandscapeSpec, load_landscape
from .logio import LogFile, load_log, log_from_result, save_log
from .model import (
    EliteNode,
    ExperimentRecord,
    Frontier,
    Metrics,
    MutationCategory,
    OperatorKind,
    PromotionDecision,
    PromotionKind,
    Role,
)
from .policy import GuardToggles, PolicyConfig
from .replay import replay_verify
from .report import report_running_best

__all__ = [
    "EliteNode",
    "ExperimentRecord",
    "Frontier",
    "GuardToggles",
    "LandscapeSpec",
    "LogFile",
    "Metrics",
    "MutationCategory",
    "OperatorKind",
    "PolicyConfig",
    "PolicyKind",
    "PromotionDecision",
    "PromotionKind",
    "Role",
    "RunConfig",
    "RunResult",
    "load_landscape",
    "load_log",
    "log_from_result",
    "replay_verify",
    "report_running_best",
    "run_search",
    "save_log",
]
