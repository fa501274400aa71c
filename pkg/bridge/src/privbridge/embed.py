"""Batch extraction of contextual token embeddings.

Reads ``{"id": ..., "text": ...}`` JSON lines and writes one record per text
in the token-embeddings format consumed by the core toolkit:
``{"id", "tokens", "vectors", "special"}`` plus a ``word_ids`` subword-to-word
alignment map (null for demarcation tokens). A sidecar ``<out>.meta.json``
records the model name, the resolved hidden-state layer, and the embedding
dimension. Inference runs in eval mode with no sampling, so identical inputs
produce identical output files.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import torch
from transformers import AutoModel, AutoTokenizer

from .config import BridgeConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmbedSummary:
    records: int
    truncated: int
    dim: int | None
    layer: int


def _max_input_length(tokenizer, model) -> int:
    limit = getattr(model.config, "max_position_embeddings", None)
    tok_limit = getattr(tokenizer, "model_max_length", None)
    candidates = [c for c in (limit, tok_limit) if c and c < 1_000_000]
    return min(candidates) if candidates else 512


def _resolve_layer(layer: int, n_states: int) -> int:
    resolved = layer if layer >= 0 else n_states + layer
    if not (0 <= resolved < n_states):
        raise ValueError(
            f"layer {layer} is invalid for a model with {n_states} hidden states"
        )
    return resolved


def _pool_by_word(tokens, vectors, word_ids):
    """Mean-pool subword vectors per word; demarcation tokens are dropped."""
    words: list[str] = []
    pooled: list[list[float]] = []
    current: int | None = None
    bucket: list[torch.Tensor] = []
    pieces: list[str] = []

    def flush():
        if bucket:
            words.append("".join(pieces))
            pooled.append(torch.stack(bucket).mean(dim=0).tolist())

    for token, vector, wid in zip(tokens, vectors, word_ids):
        if wid is None:
            continue
        if wid != current:
            flush()
            current, bucket, pieces = wid, [], []
        bucket.append(vector)
        pieces.append(token[2:] if token.startswith("##") else token)
    flush()
    return words, pooled


def embed_batch(
    in_path: str | Path,
    out_path: str | Path,
    config: BridgeConfig,
    pool_words: bool = False,
) -> EmbedSummary:
    in_path, out_path = Path(in_path), Path(out_path)
    if not in_path.is_file():
        raise FileNotFoundError(f"input file not found: {in_path}")

    tokenizer = AutoTokenizer.from_pretrained(config.embedding_model)
    model = AutoModel.from_pretrained(config.embedding_model)
    model.to(config.device)
    model.eval()
    max_length = _max_input_length(tokenizer, model)
    # hidden_states holds the embedding output plus one entry per layer
    n_states = getattr(model.config, "num_hidden_layers", 0) + 1
    resolved_layer = _resolve_layer(config.layer, n_states)

    records = truncated = 0
    dim: int | None = None
    with in_path.open(encoding="utf-8") as fh, out_path.open("w", encoding="utf-8") as out:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            try:
                text_id, text = rec["id"], rec["text"]
            except KeyError as exc:
                raise ValueError(f"{in_path}:{lineno}: missing key {exc}") from None

            encoded = tokenizer(
                text, return_tensors="pt", truncation=True, max_length=max_length
            )
            ids = encoded.input_ids[0]
            if len(tokenizer(text, truncation=False).input_ids) > len(ids):
                truncated += 1
                log.warning("%s: text %r truncated to %d tokens", in_path, text_id, len(ids))

            with torch.no_grad():
                output = model(
                    **{k: v.to(config.device) for k, v in encoded.items()},
                    output_hidden_states=True,
                )
            vectors = output.hidden_states[resolved_layer][0].cpu()

            tokens = tokenizer.convert_ids_to_tokens(ids)
            special = [
                bool(s)
                for s in tokenizer.get_special_tokens_mask(
                    ids.tolist(), already_has_special_tokens=True
                )
            ]
            word_ids = list(encoded.word_ids(0))

            if pool_words:
                out_tokens, out_vectors = _pool_by_word(tokens, vectors, word_ids)
                out_special = [False] * len(out_tokens)
                out_word_ids = list(range(len(out_tokens)))
            else:
                out_tokens = tokens
                out_vectors = [v.tolist() for v in vectors]
                out_special = special
                out_word_ids = word_ids

            if out_vectors:
                dim = len(out_vectors[0])
            out.write(json.dumps({
                "id": text_id,
                "tokens": out_tokens,
                "vectors": out_vectors,
                "special": out_special,
                "word_ids": out_word_ids,
            }) + "\n")
            records += 1

    meta = {
        "model": config.embedding_model,
        "layer": resolved_layer,
        "pooled": pool_words,
        "dim": dim,
        "records": records,
        "truncated": truncated,
    }
    Path(str(out_path) + ".meta.json").write_text(
        json.dumps(meta, indent=2) + "\n", encoding="utf-8"
    )
    return EmbedSummary(records=records, truncated=truncated, dim=dim,
                        layer=resolved_layer)
