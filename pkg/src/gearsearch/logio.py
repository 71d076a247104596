"""Durable run-log format: one JSON object per line, header first.

Records are flushed as they are written, so a truncated run is always a
valid log prefix. Floats round-trip exactly (shortest-repr JSON), which the
replay verifier relies on.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Optional, Tuple, Union

from .engine import PolicyKind, RunConfig, RunResult
from .landscape import LandscapeSpec, landscape_from_dict, landscape_to_dict
from .model import (
    Crash,
    EliteNode,
    ExperimentRecord,
    Metrics,
    MutationCategory,
    OperatorKind,
    PromotionDecision,
    PromotionKind,
    ROOT_ID,
    Role,
    Success,
)
from .policy import GuardToggles, PolicyConfig

FORMAT_VERSION = 1


class LogError(Exception):
    """Base class for log I/O problems."""


class LogIntegrityError(LogError):
    """Steps out of order, missing header, or similar structural damage."""


class LogParseError(LogError):
    def __init__(self, line_number: int, message: str) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class LogHeader:
    format_version: int
    policy_kind: PolicyKind
    steps: int
    seed: int
    capacity: int
    config_digest: str
    landscape: LandscapeSpec
    root_artifact: Tuple[int, ...]
    root_metrics: Metrics
    root_description: str


@dataclass(frozen=True)
class LogFile:
    header: LogHeader
    records: Tuple[ExperimentRecord, ...] = ()
    partial_tail: Optional[str] = None


def config_digest(policy_kind: PolicyKind, steps: int, seed: int, landscape: LandscapeSpec, policy: PolicyConfig) -> str:
    """Digest over everything that determines a run's behavior."""
    payload = {
        "run": {"policy": policy_kind.value, "steps": steps, "seed": seed},
        "policy": policy_to_dict(policy),
        "landscape": landscape_to_dict(landscape),
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def policy_to_dict(policy: PolicyConfig) -> dict:
    data = dataclasses.asdict(policy)
    data["guards"] = dataclasses.asdict(policy.guards)
    return data


def make_header(result: RunResult) -> LogHeader:
    config = result.config
    return LogHeader(
        format_version=FORMAT_VERSION,
        policy_kind=config.policy_kind,
        steps=config.steps,
        seed=config.seed,
        capacity=config.policy.capacity,
        config_digest=config_digest(
            config.policy_kind, config.steps, config.seed, config.landscape, config.policy
        ),
        landscape=config.landscape,
        root_artifact=tuple(result.root.artifact),
        root_metrics=result.root.metrics,
        root_description=result.root.description,
    )


# --- JSON encoding ----------------------------------------------------------


def _metrics_to_dict(metrics: Metrics) -> dict:
    return {"bpb": metrics.bpb, "vram": metrics.vram, "params": metrics.params}


def _metrics_from_dict(data: dict) -> Metrics:
    return Metrics(bpb=data["bpb"], vram=data["vram"], params=data["params"])


def record_to_dict(record: ExperimentRecord) -> dict:
    if isinstance(record.outcome, Success):
        outcome = {
            "kind": "success",
            **_metrics_to_dict(record.outcome.metrics),
            "description": record.outcome.description,
            "category": record.outcome.category.value,
        }
    else:
        outcome = {"kind": "crash", "reason": record.outcome.reason}
    promotion: dict = {"kind": record.promotion.kind.value}
    if record.promotion.slot is not None:
        promotion["slot"] = record.promotion.slot
    if record.promotion.replaced_id is not None:
        promotion["replaced"] = record.promotion.replaced_id
    if record.promotion.reason is not None:
        promotion["reason"] = record.promotion.reason
    return {
        "step": record.step,
        "operator": record.operator.value,
        "parent1": record.parent1,
        "parent2": record.parent2,
        "artifact": list(record.artifact),
        "outcome": outcome,
        "promotion": promotion,
        "child_id": record.child_id,
        "reflection": record.reflection,
    }


def record_from_dict(data: dict) -> ExperimentRecord:
    raw_outcome = data["outcome"]
    if raw_outcome["kind"] == "success":
        outcome: Union[Success, Crash] = Success(
            metrics=_metrics_from_dict(raw_outcome),
            description=raw_outcome["description"],
            category=MutationCategory(raw_outcome["category"]),
        )
    elif raw_outcome["kind"] == "crash":
        outcome = Crash(reason=raw_outcome["reason"])
    else:
        raise ValueError(f"unknown outcome kind {raw_outcome['kind']!r}")
    raw_promotion = data["promotion"]
    promotion = PromotionDecision(
        kind=PromotionKind(raw_promotion["kind"]),
        slot=raw_promotion.get("slot"),
        replaced_id=raw_promotion.get("replaced"),
        reason=raw_promotion.get("reason"),
    )
    return ExperimentRecord(
        step=data["step"],
        operator=OperatorKind(data["operator"]),
        parent1=data["parent1"],
        parent2=data["parent2"],
        artifact=tuple(data["artifact"]),
        outcome=outcome,
        promotion=promotion,
        reflection=data["reflection"],
        child_id=data["child_id"],
    )


def header_to_dict(header: LogHeader) -> dict:
    return {
        "format_version": header.format_version,
        "policy": header.policy_kind.value,
        "steps": header.steps,
        "seed": header.seed,
        "capacity": header.capacity,
        "config_digest": header.config_digest,
        "landscape": landscape_to_dict(header.landscape),
        "root": {
            "artifact": list(header.root_artifact),
            **_metrics_to_dict(header.root_metrics),
            "description": header.root_description,
        },
    }


def header_from_dict(data: dict) -> LogHeader:
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise LogIntegrityError(f"unsupported log format version {version!r}")
    root = data["root"]
    return LogHeader(
        format_version=version,
        policy_kind=PolicyKind(data["policy"]),
        steps=data["steps"],
        seed=data["seed"],
        capacity=data["capacity"],
        config_digest=data["config_digest"],
        landscape=landscape_from_dict(data["landscape"]),
        root_artifact=tuple(root["artifact"]),
        root_metrics=_metrics_from_dict(root),
        root_description=root["description"],
    )


def root_node_from_header(header: LogHeader) -> EliteNode:
    return EliteNode(
        id=ROOT_ID,
        artifact=header.root_artifact,
        metrics=header.root_metrics,
        description=header.root_description,
        role=Role.BEST,
        created_step=0,
    )


# --- in-memory log operations ----------------------------------------------


def append_record(log: LogFile, record: ExperimentRecord) -> LogFile:
    expected = log.records[-1].step + 1 if log.records else 1
    if record.step != expected:
        raise LogIntegrityError(f"record step {record.step}, expected {expected}")
    return dataclasses.replace(log, records=log.records + (record,))


def log_from_result(result: RunResult) -> LogFile:
    log = LogFile(header=make_header(result))
    for record in result.records:
        log = append_record(log, record)
    return log


# --- file operations ---------------------------------------------------------


class LogWriter:
    """Streaming writer: header on open, one flushed line per record."""

    def __init__(self, path: Union[str, Path], header: LogHeader) -> None:
        self._path = Path(path)
        self._file: IO[str] = open(self._path, "w", encoding="utf-8", newline="\n")
        self._last_step = 0
        self._write_line(header_to_dict(header))

    def _write_line(self, payload: dict) -> None:
        self._file.write(json.dumps(payload, sort_keys=True) + "\n")
        self._file.flush()
        os.fsync(self._file.fileno())

    def append(self, record: ExperimentRecord) -> None:
        if record.step != self._last_step + 1:
            raise LogIntegrityError(f"record step {record.step}, expected {self._last_step + 1}")
        self._write_line(record_to_dict(record))
        self._last_step = record.step

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> "LogWriter":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


def save_log(log: LogFile, path: Union[str, Path]) -> None:
    with LogWriter(path, log.header) as writer:
        for record in log.records:
            writer.append(record)


def load_log(path: Union[str, Path]) -> LogFile:
    """Parse a log file; a trailing partial line is tolerated and reported."""
    raw = Path(path).read_text(encoding="utf-8")
    if not raw.strip():
        raise LogIntegrityError(f"{path}: empty file, missing header")
    complete, newline, tail = raw.rpartition("\n")
    partial_tail = tail if tail.strip() else None
    lines = complete.split("\n") if complete else []
    if not lines:
        raise LogIntegrityError(f"{path}: no complete header line")

    def parse_line(index: int, text: str) -> dict:
        try:
            return json.loads(text)
        except json.JSONDecodeError as err:
            raise LogParseError(index + 1, f"bad JSON: {err.msg}") from err

    header = header_from_dict(parse_line(0, lines[0]))
    log = LogFile(header=header, partial_tail=partial_tail)
    for index, text in enumerate(lines[1:], start=1):
        if not text.strip():
            raise LogParseError(index + 1, "blank line inside log")
        try:
            record = record_from_dict(parse_line(index, text))
        except LogParseError:
            raise
        except (KeyError, ValueError, TypeError) as err:
            raise LogParseError(index + 1, f"bad record: {err}") from err
        log = append_record(log, record)
    return log
