"""Deterministic desk-scale fixtures: clustered vocabulary, bigram corpus,
and synthetic sentence pairs.

Each topic cluster spans its own 2-dimensional disc; the discs share one
ball, so a sentence drawn from a single cluster forms an exactly
2-dimensional point cloud while a random mix of vocabulary words looks
locally high-dimensional. Sentences are random walks along a per-cluster
cyclic word order, which gives the bigram provider strong in-cluster
transition counts. Word-level noise that kicks words off their disc
therefore inflates the estimated dimension, while context-driven
substitution mostly stays on the disc.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .dp_word import EmbeddingTable
from .harness import SentencePair

TOY_CLUSTERS = 5
TOY_WORDS_PER_CLUSTER = 16
TOY_DIM = 8
TOY_SEPARATION = 0.5
TOY_INTRA_SCALE = 0.5
TOY_CYCLE_FOLLOW = 0.6


def toy_word(cluster: int, index: int) -> str:
    return f"c{cluster}w{index:02d}"


def toy_embedding_table(
    n_clusters: int = TOY_CLUSTERS,
    words_per_cluster: int = TOY_WORDS_PER_CLUSTER,
    dim: int = TOY_DIM,
    separation: float = TOY_SEPARATION,
    intra_scale: float = TOY_INTRA_SCALE,
    seed: int = 0,
) -> EmbeddingTable:
    """Clustered static embeddings: each cluster is a 2-D disc around a
    well-separated center direction."""
    rng = np.random.default_rng([seed, 10])
    tokens: list[str] = []
    rows: list[np.ndarray] = []
    for cluster in range(n_clusters):
        center = rng.standard_normal(dim)
        center *= separation / np.linalg.norm(center)
        basis, _ = np.linalg.qr(rng.standard_normal((dim, 2)))
        for index in range(words_per_cluster):
            coeffs = rng.uniform(-1.0, 1.0, size=2) * intra_scale
            tokens.append(toy_word(cluster, index))
            rows.append(center + basis @ coeffs)
    return EmbeddingTable(tokens=tuple(tokens), vectors=np.stack(rows))


def _cluster_walk(
    rng: np.random.Generator,
    cluster: int,
    words_per_cluster: int,
    length: int,
    follow: float = TOY_CYCLE_FOLLOW,
) -> list[str]:
    """Random walk along the cluster's cyclic word order with occasional jumps."""
    position = int(rng.integers(words_per_cluster))
    words = [toy_word(cluster, position)]
    for _ in range(length - 1):
        if rng.random() < follow:
            position = (position + 1) % words_per_cluster
        else:
            position = int(rng.integers(words_per_cluster))
        words.append(toy_word(cluster, position))
    return words


def toy_corpus(
    n_clusters: int = TOY_CLUSTERS,
    words_per_cluster: int = TOY_WORDS_PER_CLUSTER,
    sentences_per_cluster: int = 60,
    sentence_len: int = 30,
    seed: int = 0,
) -> list[list[str]]:
    """Training sequences for the toy bigram provider, one cluster each."""
    rng = np.random.default_rng([seed, 11])
    corpus: list[list[str]] = []
    for cluster in range(n_clusters):
        for _ in range(sentences_per_cluster):
            corpus.append(_cluster_walk(rng, cluster, words_per_cluster, sentence_len))
    return corpus


def toy_sentence(
    length: int = 25,
    cluster: int = 0,
    words_per_cluster: int = TOY_WORDS_PER_CLUSTER,
    seed: int = 0,
) -> list[str]:
    """One canonical in-cluster sentence (for rate measurements)."""
    rng = np.random.default_rng([seed, 12])
    return _cluster_walk(rng, cluster, words_per_cluster, length)


def toy_pairs(
    n_pairs: int = 50,
    n_clusters: int = TOY_CLUSTERS,
    words_per_cluster: int = TOY_WORDS_PER_CLUSTER,
    min_len: int = 20,
    max_len: int = 26,
    seed: int = 0,
) -> list[SentencePair]:
    """Synthetic reference/paraphrase pairs; both walks share a cluster, so
    the pair mimics a human paraphrase staying on the same manifold."""
    rng = np.random.default_rng([seed, 13])
    pairs: list[SentencePair] = []
    for i in range(n_pairs):
        cluster = i % n_clusters
        length_ref = int(rng.integers(min_len, max_len + 1))
        length_par = int(rng.integers(min_len, max_len + 1))
        reference = " ".join(_cluster_walk(rng, cluster, words_per_cluster, length_ref))
        paraphrase = " ".join(_cluster_walk(rng, cluster, words_per_cluster, length_par))
        pairs.append(
            SentencePair(
                id=f"{1000 + i}_{2000 + i}",
                reference=reference,
                paraphrase=paraphrase,
                label=1,
            )
        )
    return pairs


def write_embedding_table(path: str | Path, table: EmbeddingTable) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for token, row in zip(table.tokens, table.vectors):
            fh.write(token + " " + " ".join(repr(float(v)) for v in row) + "\n")
    return path


def write_corpus(path: str | Path, corpus: Sequence[Sequence[str]]) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for sentence in corpus:
            fh.write(" ".join(sentence) + "\n")
    return path


def write_pairs_tsv(path: str | Path, pairs: Sequence[SentencePair]) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("quality\tid1\tid2\tstring1\tstring2\n")
        for pair in pairs:
            id1, _, id2 = pair.id.partition("_")
            fh.write(f"{pair.label}\t{id1}\t{id2}\t{pair.reference}\t{pair.paraphrase}\n")
    return path
