"""Bridge configuration."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BridgeConfig:
    """Which pretrained models to serve and how.

    ``layer`` indexes the hidden-state stack of the embedding model
    (0 = embedding output, -1 = last hidden layer, the default). When both a
    causal and a masked model are configured they must share one tokenizer
    vocabulary; run two bridge instances for model families with different
    vocabularies.
    """

    embedding_model: str = "bert-base-uncased"
    causal_model: str | None = None
    masked_model: str | None = None
    layer: int = -1
    device: str = "cpu"
    port: int = 8800
