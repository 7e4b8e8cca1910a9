"""Compare the training framework's three arms on two-scene data.

Arms: pre-train then fine-tune (UT+TT), pre-train only (UT), and
fine-tune from scratch (TT). Evaluation is leave-one-out over each
target user's last target-scene event.

Usage: python3 scripts/run_framework_study.py --seeds 0 1 2
"""

import argparse
import math
import os
import tempfile

from seqrec.config import (
    EvalConfig,
    ModelConfig,
    PipelineConfig,
    ScheduleConfig,
    TargetedConfig,
    UniversalConfig,
)
from seqrec.data import TestRow, corpus_from_sequences
from seqrec.evaluation import evaluate
from seqrec.synthetic import (
    BROAD_SCENE,
    SyntheticSpec,
    TwoSceneSpec,
    build_two_scene_dataset,
)
from seqrec.targeted import targeted_provider, train_targeted
from seqrec.universal import train_universal


def build_study_data(data_seed: int):
    """Two-scene corpus split into broad/target train views plus test rows.

    The held-out event is each target user's final target-scene record.
    The pre-train-only arm consumes the user's full remaining history;
    the fine-tuned arms consume only the target-scene prefix."""
    base = SyntheticSpec(n_users=1200, n_items=300, n_topics=8,
                         min_len=10, max_len=20, d_sem=32)
    spec = TwoSceneSpec(base, target_user_fraction=0.35,
                        target_min_len=3, target_max_len=7)
    catalog, corpus, token_init = build_two_scene_dataset(spec, data_seed)

    broad_seqs, tgt_seqs = {}, {}
    rows_tgt, rows_mixed = [], []
    for u, recs in corpus.sequences.items():
        broad_seqs[u] = [r for r in recs if r.scene == BROAD_SCENE]
        tgt = [r for r in recs if r.scene != BROAD_SCENE]
        if not tgt:
            continue
        held = tgt[-1]
        tgt_seqs[u] = tgt[:-1]
        rows_tgt.append(TestRow(u, [r.item for r in tgt[:-1]], held.item))
        rows_mixed.append(TestRow(u, [r.item for r in recs if r is not held], held.item))

    broad_train = corpus_from_sequences(catalog, broad_seqs)
    tgt_train = corpus_from_sequences(catalog, tgt_seqs)
    mixed_train = corpus_from_sequences(
        catalog, {u: broad_seqs[u] + tgt_seqs.get(u, []) for u in broad_seqs}
    )
    return broad_train, tgt_train, mixed_train, rows_tgt, rows_mixed, token_init


def make_cfg(seed: int, uni_steps: int | None = None) -> PipelineConfig:
    return PipelineConfig(
        seed=seed,
        model=ModelConfig(d_id=32, d_sem=32, n_heads=2, n_layers=2, d_ff=128,
                          n_max=24, n_experts=4, k_active=2),
        universal=UniversalConfig(max_len=24, batch_size=128, n_neg=64,
                                  lr=3e-3, epochs=4, max_steps=uni_steps),
        targeted=TargetedConfig(
            max_len=8, batch_size=32, lr=3e-3, total_steps=300,
            schedule=ScheduleConfig(warmup_period=None, phase_a_steps=100),
        ),
        eval=EvalConfig(k_values=(10,)),
    )


def run_seed(seed: int, data, work_dir: str) -> dict[str, float]:
    broad_train, tgt_train, mixed_train, rows_tgt, rows_mixed, token_init = data

    def r10(model, mode, rows):
        rep = evaluate(model, mode, rows, mixed_train, k_values=(10,))
        return rep["slices"]["all"]["recall"]["10"]

    out = {}
    cfg = make_cfg(seed)
    res_u = train_universal(broad_train, cfg, os.path.join(work_dir, "u"),
                            "full", token_init)
    out["ut"] = r10(res_u.model, "universal", rows_mixed)
    prov = targeted_provider(os.path.join(work_dir, "u", "universal-full-latest.ptns"))
    res_t = train_targeted(tgt_train, prov, cfg, os.path.join(work_dir, "t"))
    out["utt"] = r10(res_t.model, "targeted", rows_tgt)

    # from-scratch arm warm-starts off a step-0 checkpoint, so the shared
    # tensors carry init values and only targeted steps move them
    cfg0 = make_cfg(seed, uni_steps=0)
    train_universal(broad_train, cfg0, os.path.join(work_dir, "u0"), "full", token_init)
    prov0 = targeted_provider(os.path.join(work_dir, "u0", "universal-full-latest.ptns"))
    res_t0 = train_targeted(tgt_train, prov0, cfg0, os.path.join(work_dir, "t0"))
    out["tt"] = r10(res_t0.model, "targeted", rows_tgt)
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--out", default=None, help="work dir; default is temporary")
    args = ap.parse_args()

    data = build_study_data(args.data_seed)
    print(f"target users: {len(data[3])}")

    acc: dict[str, list[float]] = {"utt": [], "ut": [], "tt": []}
    for seed in args.seeds:
        if args.out:
            work = os.path.join(args.out, f"seed{seed}")
            os.makedirs(work, exist_ok=True)
            got = run_seed(seed, data, work)
        else:
            with tempfile.TemporaryDirectory() as work:
                got = run_seed(seed, data, work)
        for k, v in got.items():
            acc[k].append(v)
        print(f"seed {seed}: UT+TT={got['utt']:.4f} UT={got['ut']:.4f} "
              f"TT={got['tt']:.4f}")

    def mean(xs):
        return sum(xs) / len(xs)

    def sem2(xs):
        m = mean(xs)
        return sum((x - m) ** 2 for x in xs) / (len(xs) - 1) / len(xs)

    for hi, lo in (("utt", "ut"), ("ut", "tt")):
        d = mean(acc[hi]) - mean(acc[lo])
        se = math.sqrt(sem2(acc[hi]) + sem2(acc[lo]))
        print(f"{hi} - {lo}: {d:+.4f} ({d / se if se else float('inf'):+.1f} se)")


if __name__ == "__main__":
    main()
