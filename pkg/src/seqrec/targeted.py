"""Scene-specific fine-tuning on top of the pre-trained backbone.

A targeted model reuses the fused embeddings and the transformer stack,
warm-started byte-exactly from a pre-training checkpoint, and adds a
two-layer MLP head over the concatenated bidirectional hidden states.
Training ranks each user's own next item above the same item scored with
other users' representations (pairwise logistic loss over in-batch
contrast users).

Two schedule levers govern the run. Periodic warm-up re-copies the
shared tensors from the newest pre-training checkpoint, wiping their
optimizer moments but leaving the head and its moments alone. The
alternate phase freezes the token table at the parameter level for the
leading steps: gradients are still computed, nothing is applied.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .checkpoints import Checkpoint, load_checkpoint, save_checkpoint
from .config import (
    STREAM_HEAD_INIT,
    STREAM_TARGETED_BATCH,
    PipelineConfig,
    config_hash,
    rng_stream,
)
from .data import PAD_INDEX, SequenceCorpus
from .transformer import Adam, MaskMode
from .universal import TrainingDiverged, UniversalModel, build_universal_model

FROZEN_PHASE_A = "fusion.token_table"


class UserHead(nn.Module):
    """Two affine layers with GELU between: [n * d_model] -> [d_model]."""

    def __init__(self, n: int, d_model: int, hidden: int, seed: int):
        super().__init__()
        rng = rng_stream(seed, STREAM_HEAD_INIT)

        def draw(*shape):
            return torch.from_numpy(rng.normal(0.0, 0.02, size=shape).astype(np.float32))

        self.w1 = nn.Parameter(draw(n * d_model, hidden))
        self.b1 = nn.Parameter(torch.zeros(hidden))
        self.w2 = nn.Parameter(draw(hidden, d_model))
        self.b2 = nn.Parameter(torch.zeros(d_model))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.gelu(x @ self.w1 + self.b1) @ self.w2 + self.b2


class TargetedModel(nn.Module):
    """Shared backbone plus user head. Shared tensors keep the exact
    parameter names of the pre-training model so checkpoints map across."""

    def __init__(self, backbone: UniversalModel, max_len: int, head_hidden: int, seed: int):
        super().__init__()
        self.fusion = backbone.fusion
        self.stack = backbone.stack
        self.max_len = max_len
        self.head = UserHead(max_len, backbone.cfg.d_model, head_hidden, seed)

    def shared_names(self) -> set[str]:
        return {
            name for name, _ in self.named_parameters()
            if name.startswith("fusion.") or name.startswith("stack.")
        }

    def user_embeddings(self, items: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        """Bidirectional encode [B, n] -> [B, d_model] through the head.

        Rows are always padded to the configured window n; final-layer
        rows at padded positions are zeroed before the concat so the head
        input never sees stale values.
        """
        b, n = items.shape
        if n != self.max_len:
            raise ValueError(f"expected window of {self.max_len} columns, got {n}")
        fused = self.fusion(items)
        final = self.stack(fused, lengths, MaskMode.BIDIRECTIONAL)[-1]
        keep = (torch.arange(n)[None, :] < lengths[:, None]).to(final.dtype)
        final = final * keep[:, :, None]
        return self.head(final.reshape(b, n * final.shape[-1]))

    def user_embedding(self, item_seq: list[int]) -> torch.Tensor:
        if not item_seq:
            raise ValueError("sequence must be non-empty")
        window = item_seq[-self.max_len :]
        items = torch.full((1, self.max_len), PAD_INDEX, dtype=torch.int64)
        items[0, : len(window)] = torch.tensor(window, dtype=torch.int64)
        lengths = torch.tensor([len(window)], dtype=torch.int64)
        return self.user_embeddings(items, lengths)[0]


def bpr_loss(s_pos: torch.Tensor, s_contrast: torch.Tensor) -> torch.Tensor:
    """Mean pairwise logistic loss: -log sigmoid(s_pos - s_contrast).

    s_pos: [B], s_contrast: [B, C] where entry (b, j) scores row b's
    positive item against a contrast user's embedding. softplus keeps the
    log numerically stable; equal scores give exactly ln 2.
    """
    if s_contrast.shape[-1] < 1:
        raise ValueError("need at least one contrast score per row")
    return F.softplus(-(s_pos[:, None] - s_contrast)).mean()


def warm_start(
    universal_ckpt: Checkpoint, corpus: SequenceCorpus, cfg: PipelineConfig
) -> tuple[TargetedModel, str]:
    """Targeted model with shared tensors copied byte-exactly from the
    checkpoint and a freshly drawn head. Returns (model, parent id)."""
    backbone = build_universal_model(corpus, cfg)
    tcfg = cfg.targeted
    hidden = tcfg.head_hidden or cfg.model.d_model
    model = TargetedModel(backbone, tcfg.max_len, hidden, cfg.seed)
    _install_shared(model, universal_ckpt, allow_id_growth=False)
    parent = universal_ckpt.meta.get("checkpoint_id")
    return model, parent


def _install_shared(model: TargetedModel, ckpt: Checkpoint, allow_id_growth: bool) -> None:
    named = dict(model.named_parameters())
    shared = model.shared_names()
    missing = sorted(shared - set(ckpt.params))
    unexpected = sorted(set(ckpt.params) - shared)
    if missing or unexpected:
        raise ValueError(f"shared-tensor mismatch: missing={missing} unexpected={unexpected}")
    with torch.no_grad():
        for name in sorted(shared):
            arr = ckpt.params[name]
            param = named[name]
            if tuple(arr.shape) == tuple(param.shape):
                param.copy_(torch.from_numpy(arr.copy()))
            elif (
                allow_id_growth
                and name == "fusion.id_table"
                and arr.shape[1:] == tuple(param.shape[1:])
                and arr.shape[0] < param.shape[0]
            ):
                # items added since the checkpoint keep their fresh rows
                param[: arr.shape[0]].copy_(torch.from_numpy(arr.copy()))
            else:
                raise ValueError(
                    f"shape mismatch for {name}: checkpoint {tuple(arr.shape)}, "
                    f"model {tuple(param.shape)}"
                )


@dataclass
class TargetedResult:
    model: TargetedModel
    losses: list[float] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)
    final_checkpoint: str | None = None
    refresh_steps: list[int] = field(default_factory=list)
    phase_a_end: int = 0
    parent: str | None = None


def _sample_batch(
    corpus: SequenceCorpus,
    users: list[str],
    eligible: dict[str, list[int]],
    rng: np.random.Generator,
    batch_size: int,
    max_len: int,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Sample B (window, positive) pairs: target is a random eligible
    position, inputs are the preceding <= n items from any scene."""
    replace = len(users) < batch_size
    picks = rng.choice(len(users), size=batch_size, replace=replace)
    items = torch.full((batch_size, max_len), PAD_INDEX, dtype=torch.int64)
    lengths = torch.zeros(batch_size, dtype=torch.int64)
    positives = torch.zeros(batch_size, dtype=torch.int64)
    for b, ui in enumerate(picks):
        seq = [corpus.catalog.index_of(i) for i in corpus.items_of(users[ui])]
        spots = eligible[users[ui]]
        t = spots[int(rng.integers(len(spots)))]
        window = seq[max(0, t - max_len) : t]
        items[b, : len(window)] = torch.tensor(window, dtype=torch.int64)
        lengths[b] = len(window)
        positives[b] = seq[t]
    return items, lengths, positives


def train_targeted(
    corpus_target: SequenceCorpus,
    universal_provider: Callable[[], Checkpoint],
    cfg: PipelineConfig,
    out_dir: str,
    chash: str | None = None,
) -> TargetedResult:
    """Fine-tune with in-batch contrast users under the two schedules.

    universal_provider returns the newest pre-training checkpoint; it is
    consulted once at warm start and again at every refresh boundary.
    """
    tcfg = cfg.targeted
    sched = tcfg.schedule
    os.makedirs(out_dir, exist_ok=True)
    source = universal_provider()
    model, parent = warm_start(source, corpus_target, cfg)
    optimizer = Adam(lr=tcfg.lr)
    named = dict(model.named_parameters())
    shared = model.shared_names()
    chash = chash or config_hash(cfg)

    # supervision comes from target-scene positions when the config names
    # them; the window before a positive may span any scene
    scenes = set(cfg.target_scenes) if cfg.target_scenes else None
    eligible: dict[str, list[int]] = {}
    for u in sorted(corpus_target.sequences):
        seq = corpus_target.sequences[u]
        spots = [
            t for t in range(1, len(seq))
            if scenes is None or seq[t].scene in scenes
        ]
        if spots:
            eligible[u] = spots
    users = sorted(eligible)
    if not users:
        raise ValueError("target corpus has no user with >= 2 interactions")
    rng = rng_stream(cfg.seed, STREAM_TARGETED_BATCH)

    result = TargetedResult(model=model, parent=parent)
    n_contrast = tcfg.n_contrast or (tcfg.batch_size - 1)
    n_contrast = min(n_contrast, tcfg.batch_size - 1)

    def write_ckpt(step: int) -> str:
        path = os.path.join(out_dir, f"targeted-step{step:06d}.ptns")
        save_checkpoint(
            path, model, optimizer,
            phase="targeted", step=step, seed=cfg.seed, config_hash=chash, parent=parent,
        )
        result.checkpoints.append(path)
        return path

    # token_table is frozen for steps 1..frozen_until; the optional plateau
    # trigger can only shorten that range, never extend it
    frozen_until = min(sched.phase_a_steps, tcfg.total_steps)
    result.phase_a_end = frozen_until
    best_loss = float("inf")
    stale = 0

    for step in range(1, tcfg.total_steps + 1):
        items, lengths, positives = _sample_batch(
            corpus_target, users, eligible, rng, tcfg.batch_size, tcfg.max_len
        )
        user_emb = model.user_embeddings(items, lengths)  # [B, d]
        pos_emb = model.fusion(positives)  # [B, d]
        scores = user_emb @ pos_emb.T  # [u, item] grid
        s_pos = scores.diagonal()
        b = tcfg.batch_size
        # contrast rows cycle through the batch so a short cap stays deterministic
        offsets = torch.arange(1, n_contrast + 1)
        rows = (torch.arange(b)[:, None] + offsets[None, :]) % b
        s_contrast = scores.T.gather(1, rows)  # (b, j): U[rows]·E[b]
        loss = bpr_loss(s_pos, s_contrast)
        if not torch.isfinite(loss):
            raise TrainingDiverged(step, result.final_checkpoint)
        model.zero_grad(set_to_none=True)
        loss.backward()

        in_phase_a = step <= frozen_until
        if in_phase_a and sched.plateau_patience is not None:
            if float(loss.detach()) < best_loss - 1e-4:
                best_loss = float(loss.detach())
                stale = 0
            else:
                stale += 1
            if stale >= sched.plateau_patience:
                frozen_until = step
                result.phase_a_end = step
        skip = frozenset([FROZEN_PHASE_A]) if in_phase_a else frozenset()
        optimizer.step(named, skip=skip)
        result.losses.append(float(loss.detach()))

        if sched.warmup_period is not None and step % sched.warmup_period == 0:
            fresh = universal_provider()
            _install_shared(model, fresh, allow_id_growth=True)
            optimizer.reset(shared)
            result.refresh_steps.append(step)
        if tcfg.checkpoint_every is not None and step % tcfg.checkpoint_every == 0:
            result.final_checkpoint = write_ckpt(step)

    if not result.checkpoints or not result.checkpoints[-1].endswith(
        f"targeted-step{tcfg.total_steps:06d}.ptns"
    ):
        result.final_checkpoint = write_ckpt(tcfg.total_steps)
    with open(os.path.join(out_dir, "targeted-loss.json"), "w") as fh:
        json.dump({"loss": result.losses, "refresh_steps": result.refresh_steps}, fh)
    return result


def targeted_provider(path: str) -> Callable[[], Checkpoint]:
    """Provider that re-reads the newest checkpoint file on every call."""

    def poll() -> Checkpoint:
        return load_checkpoint(path)

    return poll
