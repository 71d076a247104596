"""Flat key-value config files.

Every policy field lives under `policy.`, guard toggles under `guards.`,
and run parameters under `run.`. Unknown keys are errors so typos cannot
silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

from .engine import PolicyKind
from .policy import GuardToggles, PolicyConfig


class ConfigError(Exception):
    pass


_POLICY_FIELDS = {f.name: f.type for f in dataclasses.fields(PolicyConfig) if f.name != "guards"}
_GUARD_FIELDS = {f.name for f in dataclasses.fields(GuardToggles)}
_RUN_KEYS = {"steps", "seed", "policy"}


@dataclasses.dataclass(frozen=True)
class RunOverrides:
    """Optional run parameters a config file may carry."""

    steps: Optional[int] = None
    seed: Optional[int] = None
    policy_kind: Optional[PolicyKind] = None


def _parse_scalar(key: str, text: str, kind: type) -> Union[bool, int, float]:
    text = text.strip()
    if kind is bool:
        lowered = text.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    try:
        if kind is int:
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {text!r}")


def parse_config_text(text: str) -> Dict[str, str]:
    """Raw `key = value` pairs; # comments and blank lines are skipped."""
    pairs: Dict[str, str] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_number}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"line {line_number}: duplicate key {key!r}")
        pairs[key] = value.strip()
    return pairs


def _field_type(annotation: object) -> type:
    # dataclasses.fields() yields string annotations under future-annotations.
    mapping = {"float": float, "int": int, "bool": bool}
    if isinstance(annotation, str):
        return mapping[annotation]
    return annotation  # type: ignore[return-value]


def config_from_pairs(pairs: Dict[str, str]) -> Tuple[PolicyConfig, RunOverrides]:
    policy_kwargs: Dict[str, object] = {}
    guard_kwargs: Dict[str, bool] = {}
    run_kwargs: Dict[str, object] = {}
    for key, value in pairs.items():
        namespace, _, name = key.partition(".")
        if namespace == "policy" and name in _POLICY_FIELDS:
            policy_kwargs[name] = _parse_scalar(key, value, _field_type(_POLICY_FIELDS[name]))
        elif namespace == "guards" and name in _GUARD_FIELDS:
            guard_kwargs[name] = bool(_parse_scalar(key, value, bool))
        elif namespace == "run" and name in _RUN_KEYS:
            if name == "policy":
                try:
                    run_kwargs["policy_kind"] = PolicyKind(value)
                except ValueError:
                    raise ConfigError(f"{key}: unknown policy {value!r}")
            else:
                run_kwargs[name] = _parse_scalar(key, value, int)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        policy = PolicyConfig(guards=GuardToggles(**guard_kwargs), **policy_kwargs)
    except ValueError as err:
        raise ConfigError(str(err))
    return policy, RunOverrides(**run_kwargs)  # type: ignore[arg-type]


def load_config(path: Union[str, Path]) -> Tuple[PolicyConfig, RunOverrides]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}")
    return config_from_pairs(parse_config_text(text))


def format_config(
    policy: PolicyConfig,
    steps: Optional[int] = None,
    seed: Optional[int] = None,
    policy_kind: Optional[PolicyKind] = None,
) -> str:
    """Render a config back to the flat key-value format."""
    lines = []
    if policy_kind is not None:
        lines.append(f"run.policy = {policy_kind.value}")
    if steps is not None:
        lines.append(f"run.steps = {steps}")
    if seed is not None:
        lines.append(f"run.seed = {seed}")
    for field in dataclasses.fields(PolicyConfig):
        if field.name == "guards":
            continue
        lines.append(f"policy.{field.name} = {getattr(policy, field.name)}")
    for field in dataclasses.fields(GuardToggles):
        lines.append(f"guards.{field.name} = {str(getattr(policy.guards, field.name)).lower()}")
    return "\n".join(lines) + "\n"
