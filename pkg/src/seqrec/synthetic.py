"""Synthetic corpora with controllable collaborative and semantic signal.

The generator plants three signals that different model variants can or
cannot exploit, so directional comparisons between variants are
meaningful rather than noise:

* Topic structure. Users follow a Markov chain over topics (stay or step
  around a ring). An item's content tokens identify its topic, so a
  model that reads token embeddings can infer the plausible next topic.
* Item-level succession. Within a topic, each item has a fixed successor
  on a ring ordered by popularity rank. Items of one topic share their
  topic tokens, so succession is invisible to content and only ID
  embeddings can resolve it.
* Noise tokens. Most of each item's tokens are high-norm distractors
  unique to the item. Mean pooling soaks them up; learned attention can
  pick out the topic tokens, which all carry a shared marker direction.

Popularity within a topic is Zipf-skewed, leaving a long cold tail whose
ID rows barely train; content is then the only handle on those items.

The two-scene variant adds a sparse target scene that consumes a
scene-stocked subset of the user's home topic: the topic preference
carries over from the broad scene, so pre-training transfers, while the
stocked subset is something only target-scene data can reveal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import STREAM_SYNTHETIC, rng_stream
from .data import Interaction, ItemCatalog, SequenceCorpus, corpus_from_sequences

BROAD_SCENE = "browse"
TARGET_SCENE = "buy"
ACTION = "click"


@dataclass
class SyntheticSpec:
    n_users: int = 2000
    n_items: int = 500
    n_topics: int = 10
    tokens_per_topic: int = 20
    n_noise_tokens: int = 400
    topic_tokens_per_item: int = 3
    noise_tokens_per_item: int = 5
    noise_tokens_max: int | None = None  # draw count uniform in [per_item, max]
    # Specificity hierarchy. With p_generic > 0, fine topics pair up into
    # groups; every item carries the group's coarse tokens (the leading
    # slots of the even topic's block) and only "specific" items add fine
    # tokens from their own block. Generic items reveal their group, not
    # their topic, so per-item token selection has to outrank averaging.
    p_generic: float = 0.0
    coarse_tokens_per_item: int = 2
    coarse_marker: float = 0.3  # marker strength of coarse tokens vs fine
    min_len: int = 8
    max_len: int = 24
    p_stay: float = 0.8  # stay on current topic, else step around the ring
    p_succ: float = 0.5  # inside a kept topic, follow the successor ring
    zipf_s: float = 1.3
    d_sem: int = 64
    noise_token_norm: float = 2.0

    @property
    def vocab_size(self) -> int:
        return self.n_topics * self.tokens_per_topic + self.n_noise_tokens


@dataclass
class TwoSceneSpec:
    base: SyntheticSpec
    target_user_fraction: float = 0.5
    target_min_len: int = 2
    target_max_len: int = 6
    # the target scene stocks every target_slice-th item of a topic block;
    # target_hop is the chance an event leaves the user's home topic
    target_slice: int = 2
    target_hop: float = 0.15

    def __init__(self, base: SyntheticSpec | None = None, **kw):
        self.base = base or SyntheticSpec(
            n_users=1200, n_items=300, n_topics=8, min_len=10, max_len=20
        )
        self.target_user_fraction = kw.get("target_user_fraction", 0.5)
        self.target_min_len = kw.get("target_min_len", 2)
        self.target_max_len = kw.get("target_max_len", 6)
        self.target_slice = kw.get("target_slice", 2)
        self.target_hop = kw.get("target_hop", 0.15)


def _item_id(i: int) -> str:
    return f"i{i:05d}"


def _user_id(u: int) -> str:
    return f"u{u:05d}"


class _World:
    """Shared item/topic machinery for both corpus flavors."""

    def __init__(self, spec: SyntheticSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        t = spec.n_topics
        self.topic_of = np.array([i * t // spec.n_items for i in range(spec.n_items)])
        self.topic_items: list[np.ndarray] = [
            np.flatnonzero(self.topic_of == k) for k in range(t)
        ]
        # popularity rank inside a topic = position in the block
        self.zipf: list[np.ndarray] = []
        for items in self.topic_items:
            w = 1.0 / np.power(np.arange(1, len(items) + 1), spec.zipf_s)
            self.zipf.append(w / w.sum())
        self.tokens = self._draw_tokens()

    def _draw_tokens(self) -> list[list[int]]:
        spec, rng = self.spec, self.rng
        noise_base = spec.n_topics * spec.tokens_per_topic
        out = []
        for i in range(spec.n_items):
            topic = int(self.topic_of[i])
            parts = []
            fine_slots = np.arange(spec.tokens_per_topic)
            if spec.p_generic > 0:
                group_block = (topic // 2) * 2 * spec.tokens_per_topic
                parts.append(group_block + np.arange(spec.coarse_tokens_per_item))
                fine_slots = fine_slots[spec.coarse_tokens_per_item:]
                specific = rng.random() >= spec.p_generic
            else:
                specific = True
            if specific:
                parts.append(
                    topic * spec.tokens_per_topic
                    + rng.choice(fine_slots, size=spec.topic_tokens_per_item, replace=False)
                )
            n_noise = spec.noise_tokens_per_item
            if spec.noise_tokens_max is not None:
                n_noise = int(rng.integers(n_noise, spec.noise_tokens_max + 1))
            parts.append(noise_base + rng.choice(
                spec.n_noise_tokens, size=n_noise, replace=False
            ))
            toks = np.concatenate(parts)
            rng.shuffle(toks)
            out.append([int(x) for x in toks])
        return out

    def successor(self, item: int) -> int:
        items = self.topic_items[self.topic_of[item]]
        pos = int(np.flatnonzero(items == item)[0])
        return int(items[(pos + 1) % len(items)])

    def draw_in_topic(self, topic: int) -> int:
        return int(self.rng.choice(self.topic_items[topic], p=self.zipf[topic]))

    def draw_in_slice(self, topic: int, slice_step: int) -> int:
        """Scene-stocked subset: every slice_step-th item of the block."""
        items = self.topic_items[topic][::slice_step]
        w = self.zipf[topic][::slice_step]
        return int(self.rng.choice(items, p=w / w.sum()))

    def draw_slice_set(self, topic: int, slice_step: int, count: int) -> np.ndarray:
        """Distinct stocked items, popularity-weighted."""
        items = self.topic_items[topic][::slice_step]
        w = self.zipf[topic][::slice_step]
        count = min(count, len(items))
        return self.rng.choice(items, size=count, replace=False, p=w / w.sum())

    def step(self, item: int, ring_delta: int) -> int:
        spec = self.spec
        topic = int(self.topic_of[item])
        if self.rng.random() < spec.p_stay:
            if self.rng.random() < spec.p_succ:
                return self.successor(item)
            return self.draw_in_topic(topic)
        nxt = (topic + ring_delta) % spec.n_topics
        return self.draw_in_topic(nxt)


def make_token_init(spec: SyntheticSpec, seed: int) -> np.ndarray:
    """Token vectors shaped like an external text encoder would shape them.

    Topic tokens cluster around their topic centroid and share a marker
    direction; noise tokens are isotropic with a larger norm, so naive
    averaging drowns the signal a single attention query can recover.
    """
    rng = rng_stream(seed, STREAM_SYNTHETIC + "-tokens")
    d = spec.d_sem
    marker = rng.normal(size=d)
    marker /= np.linalg.norm(marker)
    centroids = rng.normal(size=(spec.n_topics, d))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    vecs = np.zeros((spec.vocab_size, d))
    idx = 0
    for t in range(spec.n_topics):
        for slot in range(spec.tokens_per_topic):
            # group-level tokens sit farther from the topical marker, the
            # way generic words do in a text encoder's geometry
            coarse = (
                spec.p_generic > 0
                and t % 2 == 0
                and slot < spec.coarse_tokens_per_item
            )
            strength = spec.coarse_marker if coarse else 1.0
            v = strength * marker + centroids[t] + 0.25 * rng.normal(size=d)
            vecs[idx] = v / np.linalg.norm(v)
            idx += 1
    for _ in range(spec.n_noise_tokens):
        v = rng.normal(size=d)
        vecs[idx] = spec.noise_token_norm * v / np.linalg.norm(v)
        idx += 1
    return vecs.astype(np.float32)


def _catalog_from_world(world: _World, vocab_size: int) -> ItemCatalog:
    tokens = {_item_id(i): world.tokens[i] for i in range(world.spec.n_items)}
    return ItemCatalog(
        tokens=tokens, popularity={k: 0 for k in tokens}, vocab_size=vocab_size
    )


def build_ablation_dataset(
    spec: SyntheticSpec, seed: int
) -> tuple[ItemCatalog, SequenceCorpus, np.ndarray]:
    """Single-scene topic-Markov corpus plus token init vectors."""
    rng = rng_stream(seed, STREAM_SYNTHETIC)
    world = _World(spec, rng)
    catalog = _catalog_from_world(world, spec.vocab_size)
    sequences: dict[str, list[Interaction]] = {}
    for u in range(spec.n_users):
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        topic = int(rng.integers(spec.n_topics))
        item = world.draw_in_topic(topic)
        recs = [Interaction(_item_id(item), 0, BROAD_SCENE, ACTION)]
        for t in range(1, length):
            item = world.step(item, ring_delta=+1)
            recs.append(Interaction(_item_id(item), t, BROAD_SCENE, ACTION))
        sequences[_user_id(u)] = recs
    corpus = corpus_from_sequences(catalog, sequences)
    return catalog, corpus, make_token_init(spec, seed)


def build_two_scene_dataset(
    spec: TwoSceneSpec, seed: int
) -> tuple[ItemCatalog, SequenceCorpus, np.ndarray]:
    """Broad scene for everyone; a sparse target scene for a fraction of
    users. Target events draw from the stocked slice of the user's last
    broad topic, so the scenes share preferences but not inventories.
    Target events carry later timestamps so each user's target history is
    a suffix-ordered subsequence."""
    base = spec.base
    rng = rng_stream(seed, STREAM_SYNTHETIC)
    world = _World(base, rng)
    catalog = _catalog_from_world(world, base.vocab_size)
    sequences: dict[str, list[Interaction]] = {}
    for u in range(base.n_users):
        length = int(rng.integers(base.min_len, base.max_len + 1))
        topic = int(rng.integers(base.n_topics))
        item = world.draw_in_topic(topic)
        recs = [Interaction(_item_id(item), 0, BROAD_SCENE, ACTION)]
        for t in range(1, length):
            item = world.step(item, ring_delta=+1)
            recs.append(Interaction(_item_id(item), t, BROAD_SCENE, ACTION))
        if rng.random() < spec.target_user_fraction:
            t_len = int(rng.integers(spec.target_min_len, spec.target_max_len + 1))
            home = int(world.topic_of[item])
            chosen = world.draw_slice_set(home, spec.target_slice, t_len)
            for k, ts in enumerate(range(length, length + len(chosen))):
                t_item = int(chosen[k])
                if rng.random() < spec.target_hop:
                    t_item = world.draw_in_slice(
                        int(rng.integers(base.n_topics)), spec.target_slice
                    )
                recs.append(Interaction(_item_id(t_item), ts, TARGET_SCENE, ACTION))
        sequences[_user_id(u)] = recs
    corpus = corpus_from_sequences(catalog, sequences)
    return catalog, corpus, make_token_init(base, seed)


def write_dataset(
    catalog: ItemCatalog,
    corpus: SequenceCorpus,
    token_init: np.ndarray,
    out_dir: str,
) -> dict[str, str]:
    """Emit catalog.jsonl, interactions.jsonl, and the token-init container."""
    import json
    import os

    from .tensorstore import write_container

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "catalog": os.path.join(out_dir, "catalog.jsonl"),
        "interactions": os.path.join(out_dir, "interactions.jsonl"),
        "token_init": os.path.join(out_dir, "token_init.ptns"),
    }
    with open(paths["catalog"], "w", encoding="utf-8") as fh:
        for item, toks in catalog.tokens.items():
            fh.write(json.dumps({"item": item, "tokens": toks}) + "\n")
    with open(paths["interactions"], "w", encoding="utf-8") as fh:
        for user, recs in corpus.sequences.items():
            for rec in recs:
                fh.write(
                    json.dumps(
                        {"user": user, "item": rec.item, "ts": rec.ts,
                         "scene": rec.scene, "action": rec.action}
                    )
                    + "\n"
                )
    write_container(
        paths["token_init"],
        {"token_embeddings": token_init.astype(np.float32)},
        meta={"d_sem": int(token_init.shape[1])},
    )
    return paths
