"""Synthetic experiment executor: integer-knob genomes evaluated against a
configurable fitness/VRAM/crash model.

A landscape file is JSON holding the knob schema, per-level effect tables,
epistatic interactions, and deterministic crash rules. The bundled "ladder"
landscape encodes a two-knob valley: deeper models only pay off once the
batch size has been cut, so reaching the global optimum requires keeping an
initially-regressive change alive.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterator, Optional, Sequence, Tuple, Union

from .model import Crash, Metrics, MutationCategory

Genome = Tuple[int, ...]

_MIN_BPB = 1e-9
_CONDITION_OPS = ("eq", "le", "ge")


@dataclass(frozen=True)
class KnobSpec:
    """One tunable dimension: named levels plus per-level metric effects."""

    name: str
    group: MutationCategory
    labels: Tuple[str, ...]
    bpb: Tuple[float, ...]
    vram: Tuple[float, ...] = ()
    params: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if len(self.labels) < 1:
            raise ValueError(f"knob {self.name} needs at least one level")
        for table_name in ("bpb", "vram", "params"):
            table = getattr(self, table_name)
            if table and len(table) != len(self.labels):
                raise ValueError(f"knob {self.name}: {table_name} table length mismatch")

    @property
    def levels(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class Condition:
    knob: str
    op: str
    level: int

    def __post_init__(self) -> None:
        if self.op not in _CONDITION_OPS:
            raise ValueError(f"unknown condition op {self.op!r}")

    def matches(self, level: int) -> bool:
        if self.op == "eq":
            return level == self.level
        if self.op == "le":
            return level <= self.level
        return level >= self.level


@dataclass(frozen=True)
class Interaction:
    when: Tuple[Condition, ...]
    bpb: float


@dataclass(frozen=True)
class CrashRule:
    when: Tuple[Condition, ...]
    reason: str


@dataclass(frozen=True)
class LandscapeSpec:
    name: str
    knobs: Tuple[KnobSpec, ...]
    baseline: Genome
    base_bpb: float
    base_vram: float
    base_params: float
    interactions: Tuple[Interaction, ...] = ()
    crash_rules: Tuple[CrashRule, ...] = ()
    noise_sd: float = 0.0

    def __post_init__(self) -> None:
        if self.base_bpb <= 0:
            raise ValueError("base_bpb must be positive")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        validate_genome(self.baseline, self.knobs)
        names = {k.name for k in self.knobs}
        if len(names) != len(self.knobs):
            raise ValueError("duplicate knob names")
        for condition in self._all_conditions():
            knob = self.knob(condition.knob)
            if not 0 <= condition.level < knob.levels:
                raise ValueError(f"condition level out of range for knob {knob.name}")

    def _all_conditions(self) -> Iterator[Condition]:
        for interaction in self.interactions:
            yield from interaction.when
        for rule in self.crash_rules:
            yield from rule.when

    def knob(self, name: str) -> KnobSpec:
        for k in self.knobs:
            if k.name == name:
                return k
        raise KeyError(f"unknown knob {name!r}")

    def knob_index(self, name: str) -> int:
        for i, k in enumerate(self.knobs):
            if k.name == name:
                return i
        raise KeyError(f"unknown knob {name!r}")


def validate_genome(genome: Sequence[int], knobs: Sequence[KnobSpec]) -> None:
    if len(genome) != len(knobs):
        raise ValueError(f"genome length {len(genome)} != schema length {len(knobs)}")
    for level, knob in zip(genome, knobs):
        if not 0 <= level < knob.levels:
            raise ValueError(f"knob {knob.name}: level {level} out of range")


def _conditions_match(conditions: Sequence[Condition], genome: Genome, spec: LandscapeSpec) -> bool:
    return all(c.matches(genome[spec.knob_index(c.knob)]) for c in conditions)


def evaluate(genome: Genome, spec: LandscapeSpec, rng: random.Random) -> Union[Metrics, Crash]:
    """Deterministic crash check, then additive effects plus seeded noise."""
    validate_genome(genome, spec.knobs)
    for rule in spec.crash_rules:
        if _conditions_match(rule.when, genome, spec):
            return Crash(rule.reason)
    bpb = spec.base_bpb
    vram = spec.base_vram
    params = spec.base_params
    for level, knob in zip(genome, spec.knobs):
        bpb += knob.bpb[level]
        if knob.vram:
            vram += knob.vram[level]
        if knob.params:
            params += knob.params[level]
    for interaction in spec.interactions:
        if _conditions_match(interaction.when, genome, spec):
            bpb += interaction.bpb
    if spec.noise_sd > 0:
        bpb += rng.gauss(0.0, spec.noise_sd)
    return Metrics(bpb=max(bpb, _MIN_BPB), vram=max(vram, 0.0), params=max(params, 0.0))


def mutate_genome(parent: Genome, knobs: Sequence[KnobSpec], rng: random.Random) -> Tuple[Genome, int]:
    """Change exactly one multi-level knob to a uniformly chosen other level."""
    validate_genome(parent, knobs)
    movable = [i for i, k in enumerate(knobs) if k.levels >= 2]
    if not movable:
        raise ValueError("no knob has more than one level")
    index = movable[rng.randrange(len(movable))]
    options = [lvl for lvl in range(knobs[index].levels) if lvl != parent[index]]
    level = options[rng.randrange(len(options))]
    child = tuple(level if i == index else v for i, v in enumerate(parent))
    return child, index


def crossover_genome(p1: Genome, p2: Genome, rng: random.Random) -> Tuple[Genome, int]:
    """Copy p1 with one differing knob set to p2's level."""
    if len(p1) != len(p2):
        raise ValueError("genomes have different schemas")
    differing = [i for i in range(len(p1)) if p1[i] != p2[i]]
    if not differing:
        raise ValueError("degenerate crossover: identical genomes")
    index = differing[rng.randrange(len(differing))]
    child = tuple(p2[i] if i == index else v for i, v in enumerate(p1))
    return child, index


def describe_change(parent: Genome, child: Genome, knobs: Sequence[KnobSpec]) -> str:
    """Deterministic one-clause-per-knob summary of what changed.

    Clauses avoid filler words so that token overlap between descriptions
    tracks whether they touch the same knob, not the template.
    """
    validate_genome(parent, knobs)
    validate_genome(child, knobs)
    clauses = []
    for i, knob in enumerate(knobs):
        if parent[i] != child[i]:
            clauses.append(
                f"{knob.name}: {knob.labels[parent[i]]} -> {knob.labels[child[i]]}"
                f" [{knob.group.value}]"
            )
    if not clauses:
        raise ValueError("genomes are identical")
    return "; ".join(clauses)


def enumerate_genomes(knobs: Sequence[KnobSpec]) -> Iterator[Genome]:
    yield from itertools.product(*(range(k.levels) for k in knobs))


# --- serialization ---------------------------------------------------------

_TOP_KEYS = {
    "name",
    "base_bpb",
    "base_vram",
    "base_params",
    "noise_sd",
    "knobs",
    "interactions",
    "crash_rules",
}
_KNOB_KEYS = {"name", "group", "labels", "baseline", "bpb", "vram", "params"}


def landscape_to_dict(spec: LandscapeSpec) -> dict:
    return {
        "name": spec.name,
        "base_bpb": spec.base_bpb,
        "base_vram": spec.base_vram,
        "base_params": spec.base_params,
        "noise_sd": spec.noise_sd,
        "knobs": [
            {
                "name": k.name,
                "group": k.group.value,
                "labels": list(k.labels),
                "baseline": spec.baseline[i],
                "bpb": list(k.bpb),
                "vram": list(k.vram),
                "params": list(k.params),
            }
            for i, k in enumerate(spec.knobs)
        ],
        "interactions": [
            {"when": [[c.knob, c.op, c.level] for c in x.when], "bpb": x.bpb}
            for x in spec.interactions
        ],
        "crash_rules": [
            {"when": [[c.knob, c.op, c.level] for c in r.when], "reason": r.reason}
            for r in spec.crash_rules
        ],
    }


def _parse_conditions(raw: list) -> Tuple[Condition, ...]:
    return tuple(Condition(knob=c[0], op=c[1], level=int(c[2])) for c in raw)


def landscape_from_dict(data: dict) -> LandscapeSpec:
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ValueError(f"unknown landscape keys: {sorted(unknown)}")
    knobs = []
    baseline = []
    for raw in data["knobs"]:
        unknown = set(raw) - _KNOB_KEYS
        if unknown:
            raise ValueError(f"unknown knob keys: {sorted(unknown)}")
        knobs.append(
            KnobSpec(
                name=raw["name"],
                group=MutationCategory(raw["group"]),
                labels=tuple(raw["labels"]),
                bpb=tuple(raw["bpb"]),
                vram=tuple(raw.get("vram", ())),
                params=tuple(raw.get("params", ())),
            )
        )
        baseline.append(int(raw.get("baseline", 0)))
    return LandscapeSpec(
        name=data["name"],
        knobs=tuple(knobs),
        baseline=tuple(baseline),
        base_bpb=float(data["base_bpb"]),
        base_vram=float(data.get("base_vram", 0.0)),
        base_params=float(data.get("base_params", 0.0)),
        interactions=tuple(
            Interaction(when=_parse_conditions(x["when"]), bpb=float(x["bpb"]))
            for x in data.get("interactions", [])
        ),
        crash_rules=tuple(
            CrashRule(when=_parse_conditions(r["when"]), reason=r["reason"])
            for r in data.get("crash_rules", [])
        ),
        noise_sd=float(data.get("noise_sd", 0.0)),
    )


def load_landscape(source: Union[str, Path]) -> LandscapeSpec:
    """Load a landscape from a JSON file path or a bundled fixture name."""
    path = Path(source)
    if path.suffix == ".json" or path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        try:
            text = (
                resources.files("gearsearch")
                .joinpath("landscapes", f"{source}.json")
                .read_text(encoding="utf-8")
            )
        except FileNotFoundError:
            raise FileNotFoundError(f"no landscape file or bundled fixture named {source!r}")
    return landscape_from_dict(json.loads(text))


def save_landscape(spec: LandscapeSpec, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(landscape_to_dict(spec), indent=2) + "\n", encoding="utf-8")
