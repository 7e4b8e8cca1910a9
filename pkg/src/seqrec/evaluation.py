"""Offline ranking evaluation and the fusion-variant ablation harness.

Leave-one-out protocol: every catalog item is scored for every test
user, the user's own input prefix is excluded from the candidates, and
the held-out item's 1-based rank drives recall and NDCG. With a single
truth per user the ideal DCG is 1, so NDCG at K reduces to
1 / log2(rank + 1) when the rank is within K and 0 otherwise.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np
import torch

from .config import PipelineConfig
from .data import PAD_INDEX, SequenceCorpus, TestRow, popularity_partition
from .transformer import MaskMode
from .universal import train_universal

VARIANT_ORDER = ("full", "pool", "llm_only", "id_only")


def recall_at_k(ranked: Sequence[str], truth: str, k: int) -> int:
    if k < 1:
        raise ValueError("k must be >= 1")
    return 1 if truth in ranked[:k] else 0


def ndcg_at_k(ranked: Sequence[str], truth: str, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    for pos, item in enumerate(ranked[:k], start=1):
        if item == truth:
            return 1.0 / math.log2(pos + 1)
    return 0.0


def _metrics_from_rank(rank: int, k: int) -> tuple[int, float]:
    hit = 1 if rank <= k else 0
    gain = 1.0 / math.log2(rank + 1) if rank <= k else 0.0
    return hit, gain


def _user_embeddings(
    model, mode: str, prefixes: list[list[int]], max_len: int, batch_size: int = 256
) -> np.ndarray:
    """Batched user representations for dense-index prefixes -> [U, d]."""
    out = []
    with torch.no_grad():
        for start in range(0, len(prefixes), batch_size):
            chunk = prefixes[start : start + batch_size]
            n = max_len
            items = torch.full((len(chunk), n), PAD_INDEX, dtype=torch.int64)
            lengths = torch.zeros(len(chunk), dtype=torch.int64)
            for b, seq in enumerate(chunk):
                window = seq[-n:]
                items[b, : len(window)] = torch.tensor(window, dtype=torch.int64)
                lengths[b] = len(window)
            if mode == "universal":
                final = model.hidden_states(items, lengths, MaskMode.CAUSAL)[-1]
                idx = (lengths - 1).clamp(min=0)
                emb = final[torch.arange(len(chunk)), idx]
            elif mode == "targeted":
                emb = model.user_embeddings(items, lengths)
            else:
                raise ValueError(f"unknown mode {mode!r}")
            out.append(emb.numpy())
    return np.concatenate(out, axis=0)


def evaluate(
    model,
    mode: str,
    test_rows: list[TestRow],
    corpus: SequenceCorpus,
    k_values: Sequence[int] = (10, 30, 50),
    hot_fraction: float = 0.2,
    max_len: int | None = None,
    variant: str = "full",
) -> dict:
    """Full-catalog ranking report with all/hot/cold slices.

    Rows whose target also appears in their own prefix are skipped (the
    prefix is excluded from candidates, which would erase the truth) and
    counted in the report. Ties in score resolve by item ID ascending.
    """
    catalog = corpus.catalog
    if max_len is None:
        max_len = model.max_len if mode == "targeted" else model.cfg.n_max
    hot, _cold = popularity_partition(corpus, hot_fraction)

    rows = [r for r in test_rows if r.target not in set(r.prefix)]
    skipped = len(test_rows) - len(rows)
    with torch.no_grad():
        item_embs = model.fusion.all_item_embeddings().numpy()  # [I, d]
    prefixes = [[catalog.index_of(i) for i in r.prefix] for r in rows]
    user_embs = _user_embeddings(model, mode, prefixes, max_len) if rows else np.zeros((0, 1))

    # position of each dense index when items sort by external ID
    by_id = sorted(range(1, catalog.num_items + 1), key=catalog.item_at)
    id_rank = np.zeros(catalog.num_items + 1, dtype=np.int64)
    for pos, dense in enumerate(by_id):
        id_rank[dense] = pos

    id_rank_vec = id_rank[1:]  # aligned with dense index - 1
    slices = {"all": [], "hot": [], "cold": []}
    for u, row in enumerate(rows):
        scores = user_embs[u] @ item_embs.T  # [I], dense index i at scores[i-1]
        target_dense = catalog.index_of(row.target)
        t_score = scores[target_dense - 1]
        t_rank = id_rank[target_dense]
        candidate = np.ones(catalog.num_items, dtype=bool)
        candidate[target_dense - 1] = False
        for item in set(row.prefix):
            candidate[catalog.index_of(item) - 1] = False
        better = (scores > t_score) | ((scores == t_score) & (id_rank_vec < t_rank))
        rank = 1 + int(np.count_nonzero(better & candidate))
        slices["all"].append((row, rank))
        slices["hot" if row.target in hot else "cold"].append((row, rank))

    report = {"variant": variant, "mode": mode, "k": list(k_values),
              "skipped_repeat_target": skipped, "slices": {}}
    for name, entries in slices.items():
        block = {"n": len(entries), "recall": {}, "ndcg": {}}
        for k in k_values:
            if entries:
                hits, gains = zip(*(_metrics_from_rank(r, k) for _, r in entries))
                block["recall"][str(k)] = float(np.mean(hits))
                block["ndcg"][str(k)] = float(np.mean(gains))
            else:
                block["recall"][str(k)] = 0.0
                block["ndcg"][str(k)] = 0.0
        report["slices"][name] = block
    return report


def mean_report(reports: list[dict]) -> dict:
    """Leaf-wise mean of structurally identical evaluation reports."""
    out = {"variant": reports[0]["variant"], "mode": reports[0]["mode"],
           "k": reports[0]["k"], "n_reports": len(reports), "slices": {}}
    for name in reports[0]["slices"]:
        block = {"n": int(np.mean([r["slices"][name]["n"] for r in reports])),
                 "recall": {}, "ndcg": {}}
        for metric in ("recall", "ndcg"):
            for k in reports[0]["slices"][name][metric]:
                block[metric][k] = float(
                    np.mean([r["slices"][name][metric][k] for r in reports])
                )
        out["slices"][name] = block
    return out


def ablation_suite(
    train_corpus: SequenceCorpus,
    test_rows: list[TestRow],
    cfg: PipelineConfig,
    seeds: Sequence[int],
    token_init: np.ndarray | None = None,
    out_dir: str = "runs/ablation",
    variants: Sequence[str] = VARIANT_ORDER,
) -> dict:
    """Train and evaluate every fusion variant under identical budgets.

    Every variant sees the same corpus, schedule, and seed list; only the
    fusion wiring differs. Returns per-seed reports plus the mean."""
    suite: dict = {"variants": {}, "seeds": list(seeds)}
    for variant in variants:
        per_seed = {}
        for seed in seeds:
            run_cfg = dataclasses.replace(cfg, seed=seed)
            result = train_universal(
                train_corpus, run_cfg, f"{out_dir}/{variant}-seed{seed}",
                variant=variant, token_init=token_init,
            )
            report = evaluate(
                result.model, "universal", test_rows, train_corpus,
                k_values=cfg.eval.k_values, hot_fraction=cfg.eval.hot_fraction,
                max_len=cfg.universal.max_len, variant=variant,
            )
            per_seed[str(seed)] = report
        suite["variants"][variant] = {
            "per_seed": per_seed,
            "mean": mean_report(list(per_seed.values())),
        }
    return suite
