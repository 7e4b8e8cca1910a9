"""Interaction-log and catalog ingestion, splits, and training batch streams.

Items are indexed densely for model lookups: index 0 is the padding
sentinel, real items occupy 1..num_items in catalog file order. All raw
interfaces (files, test rows, recall responses) speak string item IDs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from .config import STREAM_BATCH_ORDER, STREAM_NEGATIVES, rng_stream

PAD_INDEX = 0


class Interaction(NamedTuple):
    item: str
    ts: int
    scene: str
    action: str


@dataclass
class ItemCatalog:
    """Item universe: token-ID lists per item plus interaction counts."""

    tokens: dict[str, list[int]] = field(default_factory=dict)
    popularity: dict[str, int] = field(default_factory=dict)
    vocab_size: int = 1

    def __post_init__(self):
        self._index = {item: i + 1 for i, item in enumerate(self.tokens)}
        self._items = list(self.tokens)

    @property
    def num_items(self) -> int:
        return len(self.tokens)

    def index_of(self, item: str) -> int:
        return self._index[item]

    def item_at(self, index: int) -> str:
        return self._items[index - 1]

    def __contains__(self, item: str) -> bool:
        return item in self.tokens


@dataclass
class SequenceCorpus:
    """Per-user chronological interactions, with per-corpus popularity counts."""

    catalog: ItemCatalog
    sequences: dict[str, list[Interaction]] = field(default_factory=dict)
    popularity: dict[str, int] = field(default_factory=dict)
    dropped: int = 0

    def items_of(self, user: str) -> list[str]:
        return [rec.item for rec in self.sequences[user]]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SequenceCorpus)
            and self.sequences == other.sequences
            and self.popularity == other.popularity
        )


class TestRow(NamedTuple):
    user: str
    prefix: list[str]
    target: str


@dataclass
class Batch:
    item_indices: np.ndarray  # [B, n] int64, PAD_INDEX beyond lengths
    lengths: np.ndarray  # [B] int64
    negative_indices: np.ndarray  # [B, n_neg] int64
    users: list[str]


def load_catalog(path: str, min_vocab: int = 1) -> ItemCatalog:
    """Read a JSON-lines catalog ({"item": ..., "tokens": [...]})."""
    tokens: dict[str, list[int]] = {}
    max_token = -1
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            if not isinstance(rec, dict) or "item" not in rec or "tokens" not in rec:
                raise ValueError(f"{path}:{lineno}: expected fields 'item' and 'tokens'")
            item = str(rec["item"])
            if item in tokens:
                raise ValueError(f"{path}:{lineno}: duplicate item id {item!r}")
            toks = rec["tokens"]
            if not isinstance(toks, list) or any(
                not isinstance(t, int) or isinstance(t, bool) or t < 0 for t in toks
            ):
                raise ValueError(f"{path}:{lineno}: tokens must be non-negative integers")
            tokens[item] = list(toks)
            if toks:
                max_token = max(max_token, max(toks))
    vocab = max(max_token + 1, min_vocab)
    return ItemCatalog(tokens=tokens, popularity={i: 0 for i in tokens}, vocab_size=vocab)


def load_interactions(
    path: str,
    catalog: ItemCatalog,
    scene_filter: set[str] | None = None,
    action_filter: set[str] | None = None,
) -> SequenceCorpus:
    """Read a JSON-lines interaction log into per-user chronological sequences.

    Records failing the scene/action filters are dropped and counted.
    Unknown item IDs abort with the first ten offenders listed. Ties in
    timestamp preserve input order.
    """
    per_user: dict[str, list[Interaction]] = {}
    popularity = {item: 0 for item in catalog.tokens}
    unknown: list[str] = []
    dropped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            missing = [k for k in ("user", "item", "ts", "scene", "action") if k not in rec]
            if missing:
                raise ValueError(f"{path}:{lineno}: missing fields {missing}")
            item = str(rec["item"])
            if item not in catalog:
                if len(unknown) < 10:
                    unknown.append(item)
                continue
            if scene_filter is not None and rec["scene"] not in scene_filter:
                dropped += 1
                continue
            if action_filter is not None and rec["action"] not in action_filter:
                dropped += 1
                continue
            inter = Interaction(item, int(rec["ts"]), str(rec["scene"]), str(rec["action"]))
            per_user.setdefault(str(rec["user"]), []).append(inter)
            popularity[item] += 1
            catalog.popularity[item] = catalog.popularity.get(item, 0) + 1
    if unknown:
        raise ValueError(f"{path}: unknown item ids (first {len(unknown)}): {unknown}")
    for user in per_user:
        per_user[user].sort(key=lambda rec: rec.ts)  # stable: input order on ts ties
    return SequenceCorpus(
        catalog=catalog, sequences=per_user, popularity=popularity, dropped=dropped
    )


def corpus_from_sequences(
    catalog: ItemCatalog, sequences: dict[str, list[Interaction]]
) -> SequenceCorpus:
    popularity = {item: 0 for item in catalog.tokens}
    for recs in sequences.values():
        for rec in recs:
            popularity[rec.item] += 1
    return SequenceCorpus(catalog=catalog, sequences=sequences, popularity=popularity)


def save_corpus(corpus: SequenceCorpus, path: str) -> None:
    doc = {
        "sequences": {u: [list(r) for r in recs] for u, recs in corpus.sequences.items()},
        "dropped": corpus.dropped,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_corpus(path: str, catalog: ItemCatalog) -> SequenceCorpus:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    sequences = {
        u: [Interaction(r[0], int(r[1]), r[2], r[3]) for r in recs]
        for u, recs in doc["sequences"].items()
    }
    corpus = corpus_from_sequences(catalog, sequences)
    corpus.dropped = int(doc.get("dropped", 0))
    return corpus


def save_split(path: str, rows: list[TestRow], meta: dict | None = None) -> None:
    doc = {
        "meta": meta or {},
        "rows": [{"user": r.user, "prefix": r.prefix, "target": r.target} for r in rows],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_split(path: str) -> tuple[list[TestRow], dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    rows = [TestRow(r["user"], list(r["prefix"]), r["target"]) for r in doc["rows"]]
    return rows, doc.get("meta", {})


def split_leave_one_out(corpus: SequenceCorpus) -> tuple[SequenceCorpus, list[TestRow]]:
    """Last interaction of every user with >= 3 becomes the test target.

    Shorter users stay entirely in train. Test targets never seen in any
    train sequence are dropped so evaluation only asks about items the
    model could have learned.
    """
    train_sequences: dict[str, list[Interaction]] = {}
    candidates: list[TestRow] = []
    for user, recs in corpus.sequences.items():
        if len(recs) >= 3:
            train_sequences[user] = recs[:-1]
            candidates.append(TestRow(user, [r.item for r in recs[:-1]], recs[-1].item))
        else:
            train_sequences[user] = list(recs)
    train = corpus_from_sequences(corpus.catalog, train_sequences)
    train_items = {rec.item for recs in train_sequences.values() for rec in recs}
    test = [row for row in candidates if row.target in train_items]
    return train, test


def popularity_partition(
    corpus: SequenceCorpus, hot_fraction: float = 0.2
) -> tuple[set[str], set[str]]:
    """Split catalog items into (hot, cold) by interaction count.

    Descending count, ties broken by item ID ascending; the top
    ceil(hot_fraction * num_items) are hot.
    """
    if not (0.0 < hot_fraction < 1.0):
        raise ValueError("hot_fraction must lie in (0, 1)")
    items = sorted(corpus.catalog.tokens, key=lambda i: (-corpus.popularity.get(i, 0), i))
    if not items:
        return set(), set()
    n_hot = math.ceil(hot_fraction * len(items))
    return set(items[:n_hot]), set(items[n_hot:])


def _eligible_rows(corpus: SequenceCorpus, max_len: int) -> list[tuple[str, list[int]]]:
    rows = []
    for user in sorted(corpus.sequences):
        items = corpus.items_of(user)
        if len(items) < 2:
            continue  # a single item yields no next-item target
        window = items[-max_len:]
        rows.append((user, [corpus.catalog.index_of(i) for i in window]))
    return rows


def batch_stream(
    corpus: SequenceCorpus,
    max_len: int,
    batch_size: int,
    n_neg: int,
    seed: int,
) -> Iterator[Batch]:
    """Infinite deterministic stream of training batches.

    Each epoch visits every eligible user once in an order drawn from the
    batch-order stream; negatives come from the negatives stream and never
    collide with the row's own items. Identical arguments reproduce the
    stream exactly.
    """
    rows = _eligible_rows(corpus, max_len)
    if not rows:
        raise ValueError("corpus has no user with >= 2 interactions")
    catalog = corpus.catalog
    longest = max(len(idx) for _, idx in rows)
    if n_neg >= catalog.num_items - longest:
        raise ValueError(
            f"n_neg={n_neg} too large for catalog of {catalog.num_items} "
            f"with sequences up to {longest} items"
        )
    order_rng = rng_stream(seed, STREAM_BATCH_ORDER)
    neg_rng = rng_stream(seed, STREAM_NEGATIVES)
    all_indices = np.arange(1, catalog.num_items + 1, dtype=np.int64)
    while True:
        order = order_rng.permutation(len(rows))
        for start in range(0, len(rows), batch_size):
            chunk = order[start : start + batch_size]
            bsz = len(chunk)
            item_mat = np.full((bsz, max_len), PAD_INDEX, dtype=np.int64)
            lengths = np.zeros(bsz, dtype=np.int64)
            negs = np.zeros((bsz, n_neg), dtype=np.int64)
            users = []
            for b, ri in enumerate(chunk):
                user, idx = rows[ri]
                users.append(user)
                item_mat[b, : len(idx)] = idx
                lengths[b] = len(idx)
                forbidden = set(idx)
                candidates = all_indices[~np.isin(all_indices, list(forbidden))]
                negs[b] = neg_rng.choice(candidates, size=n_neg, replace=False)
            yield Batch(item_mat, lengths, negs, users)


def steps_per_epoch(corpus: SequenceCorpus, max_len: int, batch_size: int) -> int:
    return math.ceil(len(_eligible_rows(corpus, max_len)) / batch_size)
