"""Shared fixtures: tiny catalogs, corpora, and model configs.

Everything here is deliberately small so the unit suite stays fast;
the end-to-end checks in test_acceptance.py build their own larger
fixtures with session scope.
"""

from __future__ import annotations

import numpy as np
import pytest

from seqrec.config import ModelConfig, PipelineConfig, TargetedConfig, UniversalConfig
from seqrec.data import Interaction, ItemCatalog, SequenceCorpus, corpus_from_sequences

nprng = np.random.default_rng


def make_catalog(n_items: int = 12, tokens_per_item: int = 3, vocab: int = 40, seed: int = 0):
    rng = nprng(seed)
    tokens = {
        f"i{i:03d}": rng.integers(0, vocab, size=tokens_per_item).tolist()
        for i in range(n_items)
    }
    return ItemCatalog(tokens=tokens, popularity={k: 0 for k in tokens}, vocab_size=vocab)


def make_corpus(
    catalog: ItemCatalog,
    n_users: int = 8,
    min_len: int = 3,
    max_len: int = 9,
    seed: int = 1,
) -> SequenceCorpus:
    rng = nprng(seed)
    items = list(catalog.tokens)
    sequences = {}
    for u in range(n_users):
        length = int(rng.integers(min_len, max_len + 1))
        seq = [
            Interaction(items[int(rng.integers(len(items)))], ts, "s", "a")
            for ts in range(length)
        ]
        sequences[f"u{u:03d}"] = seq
    return corpus_from_sequences(catalog, sequences)


@pytest.fixture
def tiny_catalog():
    return make_catalog()


@pytest.fixture
def tiny_corpus(tiny_catalog):
    return make_corpus(tiny_catalog)


@pytest.fixture
def tiny_model_cfg():
    return ModelConfig(
        d_id=8, d_sem=8, n_heads=2, n_layers=2, d_ff=32, n_max=16, n_experts=3, k_active=2
    )


@pytest.fixture
def tiny_pipeline_cfg(tiny_model_cfg):
    return PipelineConfig(
        seed=7,
        model=tiny_model_cfg,
        universal=UniversalConfig(max_len=6, batch_size=4, n_neg=4, lr=1e-3, epochs=1),
        targeted=TargetedConfig(max_len=8, batch_size=4, lr=1e-3, total_steps=10),
    )
