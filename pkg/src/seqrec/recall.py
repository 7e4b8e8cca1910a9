"""Embedding export, exact cosine retrieval, and ranking-feature joins.

Stores are flat ID-to-vector maps written as one tensor container plus a
sidecar JSON list fixing row order. The similarity index is brute force
on purpose: at this scale exact answers cost little and every retrieval
test can demand equality with an oracle instead of approximation bounds.
"""

from __future__ import annotations

import dataclasses
import json
import os
from datetime import datetime, timezone

import numpy as np
import torch

from .tensorstore import read_container, write_container


class NotFoundError(KeyError):
    """Unknown user or item ID at the service boundary."""


@dataclasses.dataclass
class EmbeddingStore:
    kind: str  # "user" | "item"
    ids: list[str]
    matrix: np.ndarray  # [N, d] float32
    meta: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if len(self.ids) != len(set(self.ids)):
            raise ValueError("duplicate IDs in embedding store")
        if self.matrix.ndim != 2 or len(self.ids) != self.matrix.shape[0]:
            raise ValueError("ID list and matrix rows disagree")
        self._row = {i: r for r, i in enumerate(self.ids)}

    def __contains__(self, key: str) -> bool:
        return key in self._row

    def vector(self, key: str) -> np.ndarray:
        if key not in self._row:
            raise NotFoundError(key)
        return self.matrix[self._row[key]]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def _sidecar(path: str) -> str:
    return path + ".ids.json"


def save_store(store: EmbeddingStore, path: str) -> None:
    meta = dict(store.meta)
    meta["kind"] = store.kind
    write_container(path, {"vectors": store.matrix.astype(np.float32)}, meta=meta)
    with open(_sidecar(path), "w", encoding="utf-8") as fh:
        json.dump(store.ids, fh)


def load_store(path: str) -> EmbeddingStore:
    box = read_container(path)
    with open(_sidecar(path), "r", encoding="utf-8") as fh:
        ids = json.load(fh)
    meta = dict(box.meta)
    kind = meta.pop("kind", "item")
    return EmbeddingStore(kind=kind, ids=list(ids), matrix=box["vectors"], meta=meta)


def export_embeddings(
    model,
    mode: str,
    corpus,
    kind: str,
    out_path: str,
    max_len: int | None = None,
    append: bool = False,
    source_checkpoint: str | None = None,
    created_at: str | None = None,
) -> EmbeddingStore:
    """Compute and persist user or item vectors from a live model.

    Item vectors are the fused embeddings; user vectors run the full
    encoder in the given mode over each user's sequence. Item export with
    append=True extends an existing store in place: only IDs the store
    has never seen are added and no old row changes bytes.
    """
    from .evaluation import _user_embeddings  # shared batched forward

    catalog = corpus.catalog
    if kind == "item":
        with torch.no_grad():
            matrix = model.fusion.all_item_embeddings().numpy().astype(np.float32)
        ids = [catalog.item_at(i) for i in range(1, catalog.num_items + 1)]
    elif kind == "user":
        users = sorted(corpus.sequences)
        if max_len is None:
            max_len = model.max_len if mode == "targeted" else model.cfg.n_max
        prefixes = [[catalog.index_of(i) for i in corpus.items_of(u)] for u in users]
        matrix = _user_embeddings(model, mode, prefixes, max_len).astype(np.float32)
        ids = users
    else:
        raise ValueError(f"kind must be user or item, got {kind!r}")

    meta = {
        "source_checkpoint": source_checkpoint,
        "created_at": created_at or datetime.now(timezone.utc).isoformat(),
        "mode": mode,
    }
    store = EmbeddingStore(kind=kind, ids=ids, matrix=matrix, meta=meta)
    if append and os.path.exists(out_path):
        base = load_store(out_path)
        if base.dim != store.dim:
            raise ValueError(
                f"append dimension mismatch: store has {base.dim}, new vectors {store.dim}"
            )
        fresh = [i for i in ids if i not in base]
        rows = np.stack([store.vector(i) for i in fresh]) if fresh else np.zeros(
            (0, base.dim), dtype=np.float32
        )
        store = EmbeddingStore(
            kind=base.kind,
            ids=base.ids + fresh,
            matrix=np.concatenate([base.matrix, rows], axis=0),
            meta={**base.meta, "appended_at": meta["created_at"]},
        )
    save_store(store, out_path)
    return store


@dataclasses.dataclass
class SimilarityIndex:
    """Item IDs aligned with L2-normalized rows; queries are exact."""

    ids: list[str]
    normalized: np.ndarray  # [N, d] float64, unit rows

    def __post_init__(self):
        self._row = {i: r for r, i in enumerate(self.ids)}

    def query(
        self, vector: np.ndarray, k: int, exclude: set[str] | None = None
    ) -> list[tuple[str, float]]:
        """Top-k by cosine, ties broken by item ID ascending; k clamps."""
        if k < 1:
            raise ValueError("k must be >= 1")
        v = np.asarray(vector, dtype=np.float64)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise ValueError("cannot query with a zero vector")
        scores = self.normalized @ (v / norm)
        pool = [
            (self.ids[i], float(scores[i]))
            for i in range(len(self.ids))
            if not exclude or self.ids[i] not in exclude
        ]
        pool.sort(key=lambda pair: (-pair[1], pair[0]))
        return pool[:k]


def build_index(store: EmbeddingStore) -> SimilarityIndex:
    if not store.ids:
        raise ValueError("cannot index an empty store")
    matrix = store.matrix.astype(np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    for i, n in enumerate(norms):
        if n == 0.0:
            raise ValueError(f"zero vector for item {store.ids[i]!r}")
    return SimilarityIndex(ids=list(store.ids), normalized=matrix / norms[:, None])


def save_index(index: SimilarityIndex, path: str) -> None:
    write_container(path, {"normalized": index.normalized}, meta={"kind": "index"})
    with open(_sidecar(path), "w", encoding="utf-8") as fh:
        json.dump(index.ids, fh)


def load_index(path: str) -> SimilarityIndex:
    box = read_container(path)
    with open(_sidecar(path), "r", encoding="utf-8") as fh:
        ids = json.load(fh)
    return SimilarityIndex(ids=list(ids), normalized=box["normalized"])


@dataclasses.dataclass
class RecallService:
    """In-process recall operations; the wire server is a thin shell."""

    users: EmbeddingStore
    items: EmbeddingStore
    index: SimilarityIndex
    history: dict[str, list[str]]  # chronological interacted items per user

    def exclusions(self, user: str) -> set[str]:
        return set(self.history.get(user, ()))

    def u2i(self, user: str, k: int) -> list[tuple[str, float]]:
        vector = self.users.vector(user)  # NotFoundError for unknown user
        return self.index.query(vector, k, exclude=self.exclusions(user))

    def item_neighbors(self, item: str, k: int) -> list[tuple[str, float]]:
        vector = self.items.vector(item)
        return self.index.query(vector, k, exclude={item})

    def u2i2i(self, user: str, m: int, k: int) -> list[tuple[str, float]]:
        """Seeds = the user's last m interacted items; per-seed neighbor
        lists merge by max score; seeds and exclusions never surface."""
        history = self.history.get(user, [])
        seeds = [i for i in history[-m:] if i in self.items]
        if not seeds:
            raise NotFoundError(user)
        merged: dict[str, float] = {}
        for seed in seeds:
            for item, score in self.item_neighbors(seed, k):
                if item not in merged or score > merged[item]:
                    merged[item] = score
        banned = set(seeds) | self.exclusions(user)
        pool = [(i, s) for i, s in merged.items() if i not in banned]
        pool.sort(key=lambda pair: (-pair[1], pair[0]))
        return pool[:k]

    def rank_features(self, user: str, item: str) -> dict:
        u = self.users.vector(user)
        v = self.items.vector(item)
        return {
            "concat": np.concatenate([u, v]).astype(np.float64).tolist(),
            "dot": float(np.dot(u.astype(np.float64), v.astype(np.float64))),
        }


def load_history(path: str) -> dict[str, list[str]]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return {str(u): [str(i) for i in items] for u, items in raw.items()}
