"""Item embedding fusion: learned ID vectors joined with a semantic half.

The semantic half digests an item's content token embeddings through a
small bank of attention experts. Each expert owns a learned query and a
value projection; a top-k gate over the mean-pooled tokens decides which
experts speak for a given item, and unchosen experts contribute exactly
zero. Ablation variants keep the output width fixed and instead zero or
simplify one half, so downstream shapes never change.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .config import STREAM_INIT, ModelConfig, rng_stream

VARIANTS = ("full", "pool", "id_only", "llm_only")

INIT_SCALE = 0.02


def _draw(rng: np.random.Generator, *shape: int) -> torch.Tensor:
    return torch.from_numpy(rng.normal(0.0, INIT_SCALE, size=shape).astype(np.float32))


def topk_gate_weights(scores: torch.Tensor, k: int) -> torch.Tensor:
    """Sparse gate weights [R, K] from raw scores [R, K].

    The k highest-scoring experts share a softmax over their own scores;
    everything else is exactly zero. Ties resolve to the lower expert
    index via a stable sort, so results do not depend on sort internals.
    """
    n_experts = scores.shape[-1]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k >= n_experts:
        return torch.softmax(scores, dim=-1)
    order = torch.argsort(-scores, dim=-1, stable=True)
    chosen = order[..., :k]
    top_scores = torch.gather(scores, -1, chosen)
    top_w = torch.softmax(top_scores, dim=-1)
    weights = torch.zeros_like(scores)
    weights.scatter_(-1, chosen, top_w)
    return weights


class EmbeddingFusion(nn.Module):
    """Fused item embeddings: concat(id_half, semantic_half) -> [d_id + d_sem].

    Token lists are ragged per item; they are packed once at construction
    into a padded [num_items + 1, T_max] matrix with a validity mask.
    Index 0 is the padding item: empty token list, zeroed ID row, and a
    zero fused embedding that stays zero through training because no
    gradient ever reaches it.
    """

    def __init__(
        self,
        num_items: int,
        vocab_size: int,
        token_lists: list[list[int]],
        cfg: ModelConfig,
        variant: str = "full",
        seed: int = 0,
        rng: np.random.Generator | None = None,
    ):
        super().__init__()
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
        if len(token_lists) != num_items:
            raise ValueError("token_lists must have one entry per real item")
        self.num_items = num_items
        self.vocab_size = vocab_size
        self.cfg = cfg
        self.variant = variant

        if rng is None:
            rng = rng_stream(seed, STREAM_INIT)
        # Draw order is part of the checkpoint contract: id, token, queries,
        # values, gate. Reordering would silently change every init.
        self.id_table = nn.Parameter(_draw(rng, num_items + 1, cfg.d_id))
        self.token_table = nn.Parameter(_draw(rng, vocab_size, cfg.d_sem))
        self.expert_queries = nn.Parameter(_draw(rng, cfg.n_experts, cfg.d_sem))
        # value projections start near identity so an externally supplied
        # token geometry passes through until the experts learn to reshape it
        eye = torch.eye(cfg.d_sem).expand(cfg.n_experts, -1, -1)
        self.expert_values = nn.Parameter(
            eye + _draw(rng, cfg.n_experts, cfg.d_sem, cfg.d_sem)
        )
        self.gate_weight = nn.Parameter(_draw(rng, cfg.d_sem, cfg.n_experts))
        with torch.no_grad():
            self.id_table[0].zero_()

        t_max = max((len(t) for t in token_lists), default=0)
        t_max = max(t_max, 1)
        padded = torch.zeros(num_items + 1, t_max, dtype=torch.int64)
        mask = torch.zeros(num_items + 1, t_max, dtype=torch.bool)
        for i, toks in enumerate(token_lists, start=1):
            for bad in toks:
                if not (0 <= bad < vocab_size):
                    raise ValueError(f"token {bad} out of range for vocab {vocab_size}")
            padded[i, : len(toks)] = torch.tensor(toks, dtype=torch.int64)
            mask[i, : len(toks)] = True
        self.register_buffer("item_tokens", padded)
        self.register_buffer("item_token_mask", mask)

    def load_token_init(self, vectors: np.ndarray) -> None:
        """Overwrite the token table with externally supplied vectors."""
        expect = (self.vocab_size, self.cfg.d_sem)
        if tuple(vectors.shape) != expect:
            raise ValueError(f"token init shape {tuple(vectors.shape)} != {expect}")
        with torch.no_grad():
            self.token_table.copy_(torch.from_numpy(np.asarray(vectors, dtype=np.float32)))

    # -- semantic half -------------------------------------------------

    def expert_attention(
        self, token_emb: torch.Tensor, token_mask: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-expert attention over token embeddings.

        token_emb: [R, T, d_sem], token_mask: [R, T] bool.
        Returns (expert_out [R, K, d_sem], attn [R, K, T]). Rows with no
        valid token come back all zero.
        """
        scale = 1.0 / math.sqrt(self.cfg.d_sem)
        scores = torch.einsum("rtd,kd->rkt", token_emb, self.expert_queries) * scale
        scores = scores.masked_fill(~token_mask[:, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        empty = ~token_mask.any(dim=-1)
        attn = torch.where(empty[:, None, None], torch.zeros_like(attn), attn)
        attended = torch.einsum("rkt,rtd->rkd", attn, token_emb)
        expert_out = torch.einsum("rkd,kde->rke", attended, self.expert_values)
        return expert_out, attn

    def gate(self, token_emb: torch.Tensor, token_mask: torch.Tensor) -> torch.Tensor:
        """Top-k gate weights [R, K]; entries off the support are exactly 0.

        Scores come from the mean-pooled tokens; the softmax is taken over
        the selected scores only. Score ties resolve to the lower expert
        index via a stable sort.
        """
        counts = token_mask.sum(dim=-1, keepdim=True).clamp(min=1).to(token_emb.dtype)
        pooled = (token_emb * token_mask[..., None]).sum(dim=1) / counts
        scores = pooled @ self.gate_weight  # [R, K]
        weights = topk_gate_weights(scores, self.cfg.k_active)
        empty = ~token_mask.any(dim=-1)
        return torch.where(empty[:, None], torch.zeros_like(weights), weights)

    def semantic_embeddings(self, indices: torch.Tensor) -> torch.Tensor:
        """Semantic half for a 1-D tensor of item indices -> [R, d_sem]."""
        token_ids = self.item_tokens[indices]
        token_mask = self.item_token_mask[indices]
        token_emb = self.token_table[token_ids] * token_mask[..., None]
        if self.variant == "id_only":
            return torch.zeros(
                len(indices), self.cfg.d_sem, dtype=token_emb.dtype, device=token_emb.device
            )
        if self.variant == "pool":
            counts = token_mask.sum(dim=-1, keepdim=True).clamp(min=1).to(token_emb.dtype)
            return token_emb.sum(dim=1) / counts
        expert_out, _ = self.expert_attention(token_emb, token_mask)
        weights = self.gate(token_emb, token_mask)
        return torch.einsum("rk,rkd->rd", weights, expert_out)

    # -- fused lookups -------------------------------------------------

    def forward(self, item_indices: torch.Tensor) -> torch.Tensor:
        """Fused embeddings for an arbitrary-shaped index tensor.

        Returns [*, d_id + d_sem]; padding index 0 maps to a zero row.
        """
        flat = item_indices.reshape(-1)
        unique, inverse = torch.unique(flat, return_inverse=True)
        id_half = self.id_table[unique]
        if self.variant == "llm_only":
            id_half = torch.zeros_like(id_half)
        sem_half = self.semantic_embeddings(unique)
        fused = torch.cat([id_half, sem_half], dim=-1)[inverse]
        return fused.reshape(*item_indices.shape, self.cfg.d_model)

    def all_item_embeddings(self) -> torch.Tensor:
        """Fused embeddings for every real item -> [num_items, d_model]."""
        idx = torch.arange(1, self.num_items + 1, dtype=torch.int64)
        return self.forward(idx)
