"""Broad next-item pre-training over all-scene interaction sequences.

The model is the embedding fusion feeding the causal transformer stack;
the objective is sampled-softmax cross entropy where each valid position
must pick the true next item against the row's shared negatives. One
numerical anchor the tests use: if every logit is equal, the loss is
exactly ln(n_neg + 1).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .checkpoints import save_checkpoint
from .config import STREAM_INIT, ModelConfig, PipelineConfig, config_hash, rng_stream
from .data import Batch, SequenceCorpus, batch_stream, steps_per_epoch
from .fusion import EmbeddingFusion
from .transformer import Adam, MaskMode, TransformerStack


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, last_good: str | None):
        super().__init__(f"non-finite loss at step {step}; last good checkpoint: {last_good}")
        self.step = step
        self.last_good = last_good


class UniversalModel(nn.Module):
    """Fusion + causal stack; one shared init stream fixes every draw."""

    def __init__(
        self,
        num_items: int,
        vocab_size: int,
        token_lists: list[list[int]],
        cfg: ModelConfig,
        variant: str = "full",
        seed: int = 0,
    ):
        super().__init__()
        rng = rng_stream(seed, STREAM_INIT)
        self.cfg = cfg
        self.fusion = EmbeddingFusion(
            num_items, vocab_size, token_lists, cfg, variant=variant, rng=rng
        )
        self.stack = TransformerStack(cfg, rng=rng)

    def hidden_states(
        self,
        item_indices: torch.Tensor,
        lengths: torch.Tensor,
        mode: MaskMode = MaskMode.CAUSAL,
    ) -> list[torch.Tensor]:
        return self.stack(self.fusion(item_indices), lengths, mode)

    def batch_loss(self, batch: Batch) -> torch.Tensor:
        items = torch.from_numpy(batch.item_indices)
        lengths = torch.from_numpy(batch.lengths)
        negs = torch.from_numpy(batch.negative_indices)
        fused = self.fusion(items)
        hidden = self.stack(fused, lengths, MaskMode.CAUSAL)[-1]
        pos_emb = fused[:, 1:, :]
        neg_emb = self.fusion(negs)
        n = items.shape[1]
        valid = torch.arange(1, n)[None, :] < lengths[:, None]  # [B, n-1]
        return nip_loss(hidden[:, :-1, :], pos_emb, neg_emb, valid)

    def user_embedding(self, item_seq: list[int], max_len: int) -> torch.Tensor:
        """Causal representation: final hidden state at the last position."""
        window = item_seq[-max_len:]
        items = torch.tensor([window], dtype=torch.int64)
        lengths = torch.tensor([len(window)], dtype=torch.int64)
        final = self.hidden_states(items, lengths, MaskMode.CAUSAL)[-1]
        return final[0, len(window) - 1]


def nip_loss(
    hidden: torch.Tensor,
    pos_emb: torch.Tensor,
    neg_emb: torch.Tensor,
    valid: torch.Tensor,
) -> torch.Tensor:
    """Next-item sampled softmax loss, averaged over valid positions.

    hidden, pos_emb: [B, T, d] aligned so pos_emb[b, t] embeds the item
    that should follow position t. neg_emb: [B, N, d], shared across the
    row's positions. valid: [B, T] bool. Raises if nothing is valid.
    """
    if not bool(valid.any()):
        raise ValueError("batch contains no position with a next-item target")
    pos_logit = (hidden * pos_emb).sum(-1, keepdim=True)  # [B, T, 1]
    neg_logit = torch.einsum("btd,bnd->btn", hidden, neg_emb)  # [B, T, N]
    logits = torch.cat([pos_logit, neg_logit], dim=-1)
    loss = torch.logsumexp(logits, dim=-1) - logits[..., 0]
    return loss[valid].mean()


@dataclass
class UniversalResult:
    model: UniversalModel
    losses: list[float] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)
    final_checkpoint: str | None = None
    latest_path: str | None = None


def build_universal_model(
    corpus: SequenceCorpus, cfg: PipelineConfig, variant: str = "full"
) -> UniversalModel:
    catalog = corpus.catalog
    token_lists = [catalog.tokens[catalog.item_at(i)] for i in range(1, catalog.num_items + 1)]
    return UniversalModel(
        catalog.num_items, catalog.vocab_size, token_lists, cfg.model,
        variant=variant, seed=cfg.seed,
    )


def train_universal(
    corpus: SequenceCorpus,
    cfg: PipelineConfig,
    out_dir: str,
    variant: str = "full",
    token_init: np.ndarray | None = None,
    on_epoch=None,
    chash: str | None = None,
) -> UniversalResult:
    """Run the causal pre-training loop and checkpoint by epoch.

    The run is a pure function of (corpus, cfg, variant, token_init):
    batch order, negatives, and init all come from seeded streams, so a
    repeat produces byte-identical checkpoints. A non-finite loss aborts
    with the last written checkpoint left on disk.
    """
    ucfg = cfg.universal
    os.makedirs(out_dir, exist_ok=True)
    model = build_universal_model(corpus, cfg, variant)
    if token_init is not None:
        model.fusion.load_token_init(token_init)
    optimizer = Adam(lr=ucfg.lr)
    stream = batch_stream(corpus, ucfg.max_len, ucfg.batch_size, ucfg.n_neg, cfg.seed)
    spe = steps_per_epoch(corpus, ucfg.max_len, ucfg.batch_size)
    chash = chash or config_hash(cfg)
    named = dict(model.named_parameters())

    result = UniversalResult(model=model)
    latest = os.path.join(out_dir, f"universal-{variant}-latest.ptns")
    step = 0
    total = ucfg.epochs * spe
    if ucfg.max_steps is not None:
        total = min(total, ucfg.max_steps)

    def write_ckpt() -> str:
        path = os.path.join(out_dir, f"universal-{variant}-step{step:06d}.ptns")
        for target in (path, latest):
            save_checkpoint(
                target, model, optimizer,
                phase="universal", step=step, seed=cfg.seed, config_hash=chash,
                extra={"variant": variant},
            )
        result.checkpoints.append(path)
        return path

    for epoch in range(ucfg.epochs):
        if step >= total:
            break
        for _ in range(spe):
            if step >= total:
                break
            batch = next(stream)
            loss = model.batch_loss(batch)
            if not torch.isfinite(loss):
                raise TrainingDiverged(step, result.final_checkpoint)
            model.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step(named)
            step += 1
            result.losses.append(float(loss.detach()))
        if (epoch + 1) % ucfg.checkpoint_every == 0 or step >= total:
            result.final_checkpoint = write_ckpt()
        if on_epoch is not None:
            on_epoch(model, epoch, result.losses)
    if result.final_checkpoint is None or not result.final_checkpoint.endswith(
        f"step{step:06d}.ptns"
    ):
        result.final_checkpoint = write_ckpt()
    result.latest_path = latest
    with open(os.path.join(out_dir, f"universal-{variant}-loss.json"), "w") as fh:
        json.dump({"loss": result.losses, "steps_per_epoch": spe}, fh)
    return result
