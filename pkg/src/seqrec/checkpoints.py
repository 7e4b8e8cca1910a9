"""Checkpoint save/load for model and optimizer state.

A checkpoint is one tensor container: every model parameter under its
dotted name, optimizer moments under opt.m.<name> / opt.v.<name>, and a
meta block with phase, step, seed, parent lineage, and config hash.
Nothing time- or host-dependent goes in, so identical state always
produces byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .tensorstore import read_container, write_container
from .transformer import Adam


def checkpoint_id(config_hash: str, phase: str, step: int, seed: int, parent: str | None) -> str:
    payload = json.dumps(
        {"config": config_hash, "phase": phase, "step": step, "seed": seed, "parent": parent},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    opt_tensors: dict[str, np.ndarray]
    opt_steps: dict[str, int]
    meta: dict


def save_checkpoint(
    path: str,
    model: nn.Module,
    optimizer: Adam | None,
    *,
    phase: str,
    step: int,
    seed: int,
    config_hash: str,
    parent: str | None = None,
    extra: dict | None = None,
) -> str:
    tensors: dict[str, np.ndarray] = {}
    for name, param in sorted(model.named_parameters()):
        tensors[name] = param.detach().numpy().copy()
    opt_steps: dict[str, int] = {}
    if optimizer is not None:
        opt_tensors, opt_steps = optimizer.state_arrays()
        for name in sorted(opt_tensors):
            tensors[name] = opt_tensors[name]
    ckpt_id = checkpoint_id(config_hash, phase, step, seed, parent)
    meta = {
        "phase": phase,
        "step": step,
        "seed": seed,
        "parent": parent,
        "config_hash": config_hash,
        "checkpoint_id": ckpt_id,
        "opt_steps": opt_steps,
        **(extra or {}),
    }
    write_container(path, tensors, meta=meta)
    return ckpt_id


def load_checkpoint(path: str) -> Checkpoint:
    box = read_container(path)
    params = {}
    opt_tensors = {}
    for name, arr in box.tensors.items():
        if name.startswith("opt.m.") or name.startswith("opt.v."):
            opt_tensors[name] = arr
        else:
            params[name] = arr
    steps = {k: int(v) for k, v in box.meta.get("opt_steps", {}).items()}
    return Checkpoint(params=params, opt_tensors=opt_tensors, opt_steps=steps, meta=box.meta)


def apply_checkpoint(
    model: nn.Module, ckpt: Checkpoint, optimizer: Adam | None = None
) -> None:
    """Install checkpoint tensors into a freshly built model, strictly.

    The parameter name sets must match exactly and every shape must agree;
    anything else means the checkpoint belongs to a different architecture.
    """
    named = dict(model.named_parameters())
    missing = sorted(set(named) - set(ckpt.params))
    unexpected = sorted(set(ckpt.params) - set(named))
    if missing or unexpected:
        raise ValueError(f"parameter mismatch: missing={missing} unexpected={unexpected}")
    with torch.no_grad():
        for name, param in named.items():
            arr = ckpt.params[name]
            if tuple(arr.shape) != tuple(param.shape):
                raise ValueError(
                    f"shape mismatch for {name}: checkpoint {tuple(arr.shape)}, "
                    f"model {tuple(param.shape)}"
                )
            param.copy_(torch.from_numpy(arr.copy()))
    if optimizer is not None:
        optimizer.load_state_arrays(ckpt.opt_tensors, ckpt.opt_steps)
