"""Shared primitives: privacy budget, error types, desk-scale tokenization."""

from __future__ import annotations

import math
import string
from dataclasses import dataclass


class DataError(Exception):
    """Malformed or unusable input data (files, rows, point clouds)."""


class ProviderError(Exception):
    """A logit provider failed or returned an unusable response."""


class DegenerateCloudError(DataError):
    """Point cloud cannot support an ID estimate (too few unique points, or
    all retained neighbor ratios equal one)."""


@dataclass(frozen=True)
class PrivacyBudget:
    """Privacy budget epsilon; smaller means stronger privacy."""

    epsilon: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.epsilon) or self.epsilon <= 0:
            raise ValueError(f"epsilon must be finite and > 0, got {self.epsilon}")


_PUNCT = frozenset(string.punctuation)


def simple_word_tokenize(text: str) -> list[str]:
    """Split on whitespace with leading/trailing punctuation detached as tokens.

    Interior punctuation (hyphens, apostrophes) stays attached, so
    contractions survive as single tokens.
    """
    out: list[str] = []
    for chunk in text.split():
        head: list[str] = []
        while chunk and chunk[0] in _PUNCT:
            head.append(chunk[0])
            chunk = chunk[1:]
        tail: list[str] = []
        while chunk and chunk[-1] in _PUNCT:
            tail.append(chunk[-1])
            chunk = chunk[:-1]
        out.extend(head)
        if chunk:
            out.append(chunk)
        out.extend(reversed(tail))
    return out
