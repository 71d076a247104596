"""Token-set similarity over experiment descriptions."""

from __future__ import annotations

import re
from functools import lru_cache
from typing import FrozenSet, Iterable

_TOKEN_RE = re.compile(r"[a-z0-9]+")

TokenSet = FrozenSet[str]


@lru_cache(maxsize=65536)
def tokenize(description: str) -> TokenSet:
    """Lowercased alphanumeric token set: split on every other character.

    No stop-word removal, no stemming; duplicates collapse by set semantics.
    """
    return frozenset(_TOKEN_RE.findall(description.lower()))


def jaccard_distance(a: TokenSet, b: TokenSet) -> float:
    """1 - |a & b| / |a | b|, with two empty sets counting as identical."""
    if not a and not b:
        return 0.0
    return 1.0 - len(a & b) / len(a | b)


def novelty(description: str, recent_descriptions: Iterable[str]) -> float:
    """Minimum Jaccard distance to any recently used parent's description.

    An empty candidate list means maximally novel (1.0).
    """
    own = tokenize(description)
    distances = [jaccard_distance(own, tokenize(d)) for d in recent_descriptions]
    if not distances:
        return 1.0
    return min(distances)
