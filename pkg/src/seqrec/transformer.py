"""Pre-norm transformer stack over item embedding sequences, plus the
optimizer that trains it.

The stack is deliberately plain: learned absolute positions, residual
attention and feed-forward sublayers with LayerNorm in front of each, no
terminal norm. With zero layers the forward is exactly input plus
positions, which the tests lean on. The optimizer is a small Adam over
named tensors so training phases can freeze, reset, or swap state for
individual tensors without fighting a framework abstraction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import STREAM_INIT, ModelConfig, rng_stream

MASK_FILL = -1e9
LAYERNORM_EPS = 1e-5


class MaskMode(enum.Enum):
    CAUSAL = "causal"
    BIDIRECTIONAL = "bidirectional"


def _draw(rng: np.random.Generator, *shape: int) -> torch.Tensor:
    return torch.from_numpy(rng.normal(0.0, 0.02, size=shape).astype(np.float32))


class Block(nn.Module):
    """One residual unit: x + Attn(LN(x)), then + FFN(LN(.))."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        d = cfg.d_model
        self.n_heads = cfg.n_heads
        self.d_head = d // cfg.n_heads
        self.ln1 = nn.LayerNorm(d, eps=LAYERNORM_EPS)
        # projections applied as x @ w, no bias
        self.w_q = nn.Parameter(_draw(rng, d, d))
        self.w_k = nn.Parameter(_draw(rng, d, d))
        self.w_v = nn.Parameter(_draw(rng, d, d))
        self.w_o = nn.Parameter(_draw(rng, d, d))
        self.ln2 = nn.LayerNorm(d, eps=LAYERNORM_EPS)
        self.ffn_w1 = nn.Parameter(_draw(rng, d, cfg.d_ff))
        self.ffn_b1 = nn.Parameter(torch.zeros(cfg.d_ff))
        self.ffn_w2 = nn.Parameter(_draw(rng, cfg.d_ff, d))
        self.ffn_b2 = nn.Parameter(torch.zeros(d))

    def attention(self, x: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        h, dh = self.n_heads, self.d_head
        q = (x @ self.w_q).view(b, n, h, dh).transpose(1, 2)
        k = (x @ self.w_k).view(b, n, h, dh).transpose(1, 2)
        v = (x @ self.w_v).view(b, n, h, dh).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(dh) + bias
        out = torch.softmax(scores, dim=-1) @ v
        out = out.transpose(1, 2).reshape(b, n, d)
        return out @ self.w_o

    def forward(self, x: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
        x = x + self.attention(self.ln1(x), bias)
        # exact (erf) GELU, not the tanh approximation
        x = x + F.gelu(self.ln2(x) @ self.ffn_w1 + self.ffn_b1) @ self.ffn_w2 + self.ffn_b2
        return x


class TransformerStack(nn.Module):
    def __init__(
        self,
        cfg: ModelConfig,
        seed: int = 0,
        rng: np.random.Generator | None = None,
    ):
        super().__init__()
        if rng is None:
            rng = rng_stream(seed, STREAM_INIT)
        self.cfg = cfg
        self.positions = nn.Parameter(_draw(rng, cfg.n_max, cfg.d_model))
        self.layers = nn.ModuleList(Block(cfg, rng) for _ in range(cfg.n_layers))

    def attention_bias(
        self, lengths: torch.Tensor, n: int, mode: MaskMode
    ) -> torch.Tensor:
        """Additive [B, 1, n, n] mask: MASK_FILL on banned key positions.

        Keys at or beyond a row's valid length are banned for every query;
        causal mode additionally bans keys after the query position.
        """
        key_pad = torch.arange(n)[None, :] >= lengths[:, None]  # [B, n]
        bias = torch.zeros(len(lengths), n, n)
        bias = bias.masked_fill(key_pad[:, None, :], MASK_FILL)
        if mode is MaskMode.CAUSAL:
            future = torch.triu(torch.ones(n, n, dtype=torch.bool), diagonal=1)
            bias = bias.masked_fill(future[None, :, :], MASK_FILL)
        return bias[:, None, :, :]

    def forward(
        self,
        embeddings: torch.Tensor,
        lengths: torch.Tensor,
        mode: MaskMode = MaskMode.CAUSAL,
    ) -> list[torch.Tensor]:
        """Run the stack; returns hidden states for every depth.

        embeddings: [B, n, d_model], lengths: [B]. The result has
        n_layers + 1 entries; entry 0 is embeddings + positions and each
        later entry is one block's output. Entry -1 is the final state.
        """
        b, n, _ = embeddings.shape
        if n > self.cfg.n_max:
            raise ValueError(f"sequence length {n} exceeds n_max {self.cfg.n_max}")
        x = embeddings + self.positions[:n][None, :, :]
        bias = self.attention_bias(lengths, n, mode)
        states = [x]
        for layer in self.layers:
            x = layer(x, bias)
            states.append(x)
        return states


# -- optimizer ---------------------------------------------------------


@dataclass
class AdamSlot:
    step: int
    m: torch.Tensor
    v: torch.Tensor


@dataclass
class Adam:
    """Adam over named tensors with independently managed per-tensor state.

    Each tensor carries its own (step, m, v) slot, so resetting or
    freezing a subset of the model leaves every other slot untouched.
    """

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    slots: dict[str, AdamSlot] = field(default_factory=dict)

    @torch.no_grad()
    def step(
        self,
        named_params: dict[str, nn.Parameter],
        skip: frozenset[str] = frozenset(),
    ) -> None:
        for name, param in named_params.items():
            if name in skip or param.grad is None:
                continue
            grad = param.grad
            if not torch.isfinite(grad).all():
                raise FloatingPointError(f"non-finite gradient in {name}")
            slot = self.slots.get(name)
            if slot is None:
                slot = AdamSlot(0, torch.zeros_like(param), torch.zeros_like(param))
                self.slots[name] = slot
            slot.step += 1
            slot.m.mul_(self.beta1).add_(grad, alpha=1 - self.beta1)
            slot.v.mul_(self.beta2).addcmul_(grad, grad, value=1 - self.beta2)
            m_hat = slot.m / (1 - self.beta1**slot.step)
            v_hat = slot.v / (1 - self.beta2**slot.step)
            param.addcdiv_(m_hat, v_hat.sqrt() + self.eps, value=-self.lr)

    def reset(self, names) -> None:
        """Drop state for the given tensors; their next step is step 1."""
        for name in names:
            self.slots.pop(name, None)

    def state_arrays(self) -> tuple[dict[str, np.ndarray], dict[str, int]]:
        tensors = {}
        steps = {}
        for name, slot in self.slots.items():
            tensors[f"opt.m.{name}"] = slot.m.numpy().copy()
            tensors[f"opt.v.{name}"] = slot.v.numpy().copy()
            steps[name] = slot.step
        return tensors, steps

    def load_state_arrays(
        self, tensors: dict[str, np.ndarray], steps: dict[str, int]
    ) -> None:
        self.slots = {}
        for name, count in steps.items():
            self.slots[name] = AdamSlot(
                int(count),
                torch.from_numpy(tensors[f"opt.m.{name}"].copy()),
                torch.from_numpy(tensors[f"opt.v.{name}"].copy()),
            )
