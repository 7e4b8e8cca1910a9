"""Configuration dataclasses, validation, and seeded RNG streams.

A single pipeline seed fans out into independent numpy generators via
fixed string labels, so changing how one component consumes randomness
never perturbs the draws seen by another.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

# Fixed stream labels. Adding a label is backward compatible; renaming one
# changes every artifact produced under it.
STREAM_INIT = "init"
STREAM_HEAD_INIT = "head-init"
STREAM_NEGATIVES = "negatives"
STREAM_BATCH_ORDER = "batch-order"
STREAM_TARGETED_BATCH = "targeted-batch"
STREAM_SYNTHETIC = "synthetic"


def rng_stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for (seed, label)."""
    tag = int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "big")
    return np.random.default_rng(np.random.SeedSequence(entropy=[seed, tag]))


@dataclass
class ModelConfig:
    d_id: int = 64
    d_sem: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 512
    n_max: int = 64
    n_experts: int = 4
    k_active: int = 2

    @property
    def d_model(self) -> int:
        return self.d_id + self.d_sem


@dataclass
class UniversalConfig:
    max_len: int = 32
    batch_size: int = 128
    n_neg: int = 64
    lr: float = 1e-3
    epochs: int = 5
    max_steps: int | None = None
    checkpoint_every: int = 1  # epochs
    eval_every: int | None = None  # epochs; None disables mid-train eval


@dataclass
class ScheduleConfig:
    warmup_period: int | None = None  # steps between refreshes; None disables
    phase_a_steps: int = 0  # token table frozen for this many leading steps
    plateau_patience: int | None = None  # optional loss-plateau trigger ending phase A early


@dataclass
class TargetedConfig:
    max_len: int = 32
    batch_size: int = 64
    lr: float = 1e-3
    total_steps: int = 500
    n_contrast: int | None = None  # capped at batch_size - 1; None means the cap
    head_hidden: int | None = None  # None -> d_model
    checkpoint_every: int | None = None  # steps; None -> only final
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)


@dataclass
class EvalConfig:
    k_values: tuple[int, ...] = (10, 30, 50)
    hot_fraction: float = 0.2


@dataclass
class SyntheticConfig:
    """Knobs for the pipeline's generated dataset stage."""

    kind: str = "two-scene"  # or "ablation"
    n_users: int = 800
    n_items: int = 240
    n_topics: int = 8


@dataclass
class PipelineConfig:
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    universal: UniversalConfig = field(default_factory=UniversalConfig)
    targeted: TargetedConfig = field(default_factory=TargetedConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    interactions_path: str | None = None
    catalog_path: str | None = None
    token_init_path: str | None = None
    universal_scenes: list[str] | None = None
    universal_actions: list[str] | None = None
    target_scenes: list[str] | None = None
    target_actions: list[str] | None = None
    out_dir: str = "runs/default"


# Full-scale defaults reported for the reference system; the desk preset
# halves embedding widths and shrinks the stack for laptop-scale runs.
PRESETS: dict[str, dict[str, Any]] = {
    "paper": {
        "model": {
            "d_id": 128,
            "d_sem": 128,
            "n_heads": 4,
            "n_layers": 6,
            "d_ff": 512,
            "n_max": 500,
        },
        "universal": {"batch_size": 128, "max_len": 500, "epochs": 20},
    },
    "desk": {
        "model": {
            "d_id": 64,
            "d_sem": 64,
            "n_heads": 4,
            "n_layers": 2,
            "d_ff": 512,
            "n_max": 64,
        },
        "universal": {"batch_size": 128, "max_len": 32, "epochs": 5},
    },
}


class ConfigError(ValueError):
    """Raised with the full list of constraint violations."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


def _apply(obj: Any, overrides: dict[str, Any]) -> None:
    names = {f.name for f in dataclasses.fields(obj)}
    for key, value in overrides.items():
        if key not in names:
            raise ConfigError([f"unknown field {type(obj).__name__}.{key}"])
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            _apply(current, value)
        elif key == "k_values":
            setattr(obj, key, tuple(value))
        else:
            setattr(obj, key, value)


def config_from_dict(raw: dict[str, Any]) -> PipelineConfig:
    """Build a PipelineConfig from a plain dict, applying a preset first if named."""
    raw = dict(raw)
    cfg = PipelineConfig()
    preset = raw.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError([f"unknown preset {preset!r}"])
        _apply(cfg, PRESETS[preset])
    _apply(cfg, raw)
    return cfg


def validate_config(cfg: PipelineConfig) -> list[str]:
    """All constraint violations at once; empty list means valid."""
    v: list[str] = []
    m = cfg.model
    if m.d_id < 1 or m.d_sem < 1:
        v.append("model.d_id and model.d_sem must be >= 1")
    if m.d_model % m.n_heads != 0:
        v.append(f"model.d_model={m.d_model} not divisible by n_heads={m.n_heads}")
    if m.n_layers < 0:
        v.append("model.n_layers must be >= 0")
    if m.n_experts < 1:
        v.append("model.n_experts must be >= 1")
    if not (1 <= m.k_active <= m.n_experts):
        v.append(f"model.k_active={m.k_active} outside [1, n_experts={m.n_experts}]")
    if m.n_max < 1:
        v.append("model.n_max must be >= 1")
    if cfg.universal.n_neg < 1:
        v.append("universal.n_neg must be >= 1")
    if cfg.universal.max_len > m.n_max:
        v.append("universal.max_len exceeds model.n_max")
    if cfg.universal.batch_size < 1:
        v.append("universal.batch_size must be >= 1")
    if cfg.targeted.max_len > m.n_max:
        v.append("targeted.max_len exceeds model.n_max")
    if cfg.targeted.batch_size < 2:
        v.append("targeted.batch_size must be >= 2 (in-batch contrast needs another row)")
    sched = cfg.targeted.schedule
    if sched.warmup_period is not None and sched.warmup_period < 1:
        v.append("targeted.schedule.warmup_period must be >= 1 or null")
    if sched.phase_a_steps < 0:
        v.append("targeted.schedule.phase_a_steps must be >= 0")
    for k in cfg.eval.k_values:
        if k < 1:
            v.append(f"eval.k_values entry {k} must be >= 1")
    if not (0.0 < cfg.eval.hot_fraction < 1.0):
        v.append("eval.hot_fraction must lie in (0, 1)")
    if cfg.synthetic.kind not in ("two-scene", "ablation"):
        v.append(f"synthetic.kind {cfg.synthetic.kind!r} not recognized")
    return v


def load_config(path: str) -> PipelineConfig:
    """Load, normalize and validate a JSON config file."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    cfg = config_from_dict(raw)
    violations = validate_config(cfg)
    if violations:
        raise ConfigError(violations)
    return cfg


def config_to_dict(cfg: PipelineConfig) -> dict[str, Any]:
    d = dataclasses.asdict(cfg)
    d["eval"]["k_values"] = list(cfg.eval.k_values)
    return d


def config_hash(cfg: PipelineConfig) -> str:
    """Stable hash of the fully normalized config; recorded in artifact manifests."""
    canon = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]
