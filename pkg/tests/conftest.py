from __future__ import annotations

import pytest

from privshift.toydata import (
    toy_corpus,
    toy_embedding_table,
    toy_pairs,
    write_corpus,
    write_embedding_table,
    write_pairs_tsv,
)


@pytest.fixture(scope="session")
def toy_table():
    return toy_embedding_table()


@pytest.fixture(scope="session")
def toy_world(tmp_path_factory, toy_table):
    """Toy table/corpus/pairs written to disk; shared across tests."""
    root = tmp_path_factory.mktemp("toyworld")
    table_path = write_embedding_table(root / "table.txt", toy_table)
    corpus_path = write_corpus(root / "corpus.txt", toy_corpus())
    pairs = toy_pairs(n_pairs=50)
    pairs_path = write_pairs_tsv(root / "pairs.tsv", pairs)
    return {
        "root": root,
        "table_path": table_path,
        "corpus_path": corpus_path,
        "pairs": pairs,
        "pairs_path": pairs_path,
    }
