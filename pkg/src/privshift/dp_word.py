"""Word-level metric-DP rewriting (the MADLIB mechanism).

Each in-vocabulary word is perturbed independently: epsilon-calibrated noise
is added to its static embedding and the word is replaced by the nearest
vocabulary entry. The original word stays in the candidate set, so
self-substitution is possible and becomes near-certain as epsilon grows.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .common import DataError, PrivacyBudget


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """Vocabulary of unique tokens with static vectors (V x d, V >= 2)."""

    tokens: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self) -> None:
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim != 2:
            raise DataError("embedding vectors must form a 2-D matrix")
        if len(self.tokens) != vecs.shape[0]:
            raise DataError(
                f"{len(self.tokens)} tokens but {vecs.shape[0]} vector rows"
            )
        if len(self.tokens) < 2:
            raise DataError("embedding table needs at least 2 entries")
        if vecs.shape[1] < 1:
            raise DataError("embedding vectors need at least 1 dimension")
        if not np.all(np.isfinite(vecs)):
            raise DataError("embedding table contains non-finite values")
        index = {}
        for i, tok in enumerate(self.tokens):
            if tok in index:
                raise DataError(f"duplicate token in embedding table: {tok!r}")
            index[tok] = i
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "_index", index)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def vector(self, token: str) -> np.ndarray:
        try:
            return self.vectors[self._index[token]]
        except KeyError:
            raise KeyError(f"token not in embedding table: {token!r}") from None


@dataclass(frozen=True)
class WordRewriteRecord:
    """Per-word outcome of a MADLIB pass."""

    original: str
    replacement: str
    self_substituted: bool
    noise_norm: float
    oov: bool = False

    def __post_init__(self) -> None:
        if self.self_substituted != (self.original == self.replacement):
            raise ValueError("self_substituted flag disagrees with the tokens")
        if self.noise_norm < 0:
            raise ValueError("noise_norm must be >= 0")


def load_embedding_table(path: str | Path) -> EmbeddingTable:
    """Load a whitespace-separated ``token v1 ... vd`` text file.

    The format matches common public static word-vector releases (no header
    line). Dimensionality must be constant and tokens unique.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"embedding table not found: {path}")
    tokens: list[str] = []
    rows: list[list[float]] = []
    dim: int | None = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise DataError(
                    f"{path}:{lineno}: expected 'token v1 ... vd', got {line!r}"
                )
            token, raw_values = parts[0], parts[1:]
            if dim is None:
                dim = len(raw_values)
            elif len(raw_values) != dim:
                raise DataError(
                    f"{path}:{lineno}: inconsistent dimensionality "
                    f"({len(raw_values)} values, expected {dim})"
                )
            try:
                values = [float(v) for v in raw_values]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: unparsable number: {exc}") from None
            tokens.append(token)
            rows.append(values)
    if len(tokens) < 2:
        raise DataError(f"{path}: embedding table needs at least 2 entries")
    return EmbeddingTable(tokens=tuple(tokens), vectors=np.asarray(rows))


def sample_metric_noise(
    dim: int, budget: PrivacyBudget, rng: np.random.Generator
) -> np.ndarray:
    """Draw a noise vector with density proportional to exp(-epsilon * ||z||).

    Standard multivariate-exponential construction: a direction uniform on
    the unit (d-1)-sphere scaled by a Gamma(shape=d, scale=1/epsilon) radius.
    The norm therefore has mean d/epsilon.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    direction = rng.standard_normal(dim)
    norm = np.linalg.norm(direction)
    while norm == 0.0:  # measure-zero guard
        direction = rng.standard_normal(dim)
        norm = np.linalg.norm(direction)
    radius = rng.gamma(shape=dim, scale=1.0 / budget.epsilon)
    return direction * (radius / norm)


def nearest_token(query: np.ndarray, table: EmbeddingTable) -> str:
    """Token whose vector is Euclidean-closest to the query.

    The original word is not excluded from candidates; ties break toward the
    lowest table index.
    """
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (table.dim,):
        raise DataError(
            f"query dimension {q.shape} does not match table dim ({table.dim},)"
        )
    sq_dist = ((table.vectors - q) ** 2).sum(axis=1)
    return table.tokens[int(np.argmin(sq_dist))]


def madlib_rewrite(
    words: Sequence[str],
    table: EmbeddingTable,
    budget: PrivacyBudget,
    rng: np.random.Generator,
) -> tuple[list[str], list[WordRewriteRecord]]:
    """Perturb each word independently; OOV words pass through flagged.

    Each word is served by its own child generator spawned from ``rng``, so
    the substitution at position i depends only on the word at i and the
    root seed, never on surrounding words.
    """
    children = rng.spawn(len(words)) if words else []
    out: list[str] = []
    records: list[WordRewriteRecord] = []
    for word, child in zip(words, children):
        if word in table:
            noise = sample_metric_noise(table.dim, budget, child)
            replacement = nearest_token(table.vector(word) + noise, table)
            records.append(
                WordRewriteRecord(
                    original=word,
                    replacement=replacement,
                    self_substituted=replacement == word,
                    noise_norm=float(np.linalg.norm(noise)),
                )
            )
        else:
            replacement = word
            records.append(
                WordRewriteRecord(
                    original=word,
                    replacement=word,
                    self_substituted=True,
                    noise_norm=0.0,
                    oov=True,
                )
            )
        out.append(replacement)
    return out, records


def self_substitution_rate(records: Sequence[WordRewriteRecord]) -> float:
    """Fraction of in-vocabulary words replaced by themselves."""
    in_vocab = [r for r in records if not r.oov]
    if not in_vocab:
        raise DataError("no in-vocabulary words to rate")
    return sum(r.self_substituted for r in in_vocab) / len(in_vocab)
