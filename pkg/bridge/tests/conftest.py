from __future__ import annotations

import json

import pytest
import torch
from transformers import (
    BertConfig,
    BertForMaskedLM,
    BertLMHeadModel,
    BertModel,
    BertTokenizerFast,
)

WORDS = [f"word{i}" for i in range(20)] + ["un", "##seen", "##piece"]
SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]


def _tiny_config(vocab_size: int, **overrides) -> BertConfig:
    params = dict(
        vocab_size=vocab_size,
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=40,
    )
    params.update(overrides)
    return BertConfig(**params)


@pytest.fixture(scope="session")
def tiny_models(tmp_path_factory):
    """Randomly initialized desk-scale models sharing one wordpiece tokenizer."""
    root = tmp_path_factory.mktemp("tiny_models")
    tok_dir = root / "tokenizer"
    tok_dir.mkdir()
    (tok_dir / "vocab.txt").write_text("\n".join(SPECIALS + WORDS) + "\n")
    (tok_dir / "tokenizer_config.json").write_text(
        json.dumps({"tokenizer_class": "BertTokenizer", "do_lower_case": True})
    )
    tokenizer = BertTokenizerFast.from_pretrained(tok_dir)

    paths = {}
    for name, cls, seed, extra in (
        ("embed", BertModel, 0, {}),
        ("masked", BertForMaskedLM, 1, {}),
        ("causal", BertLMHeadModel, 2, {"is_decoder": True}),
    ):
        torch.manual_seed(seed)
        model = cls(_tiny_config(len(tokenizer), **extra))
        model.eval()
        model_dir = root / name
        model.save_pretrained(model_dir)
        tokenizer.save_pretrained(model_dir)
        paths[name] = str(model_dir)
    paths["tokenizer"] = tokenizer
    return paths


@pytest.fixture
def texts_jsonl(tmp_path):
    def write(records):
        path = tmp_path / "texts.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in records) + ("\n" if records else ""))
        return path

    return write
