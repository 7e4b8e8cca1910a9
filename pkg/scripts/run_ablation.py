"""Train every fusion variant on the synthetic topic-Markov corpus and
print the R@10 table with seed-pooled standard errors.

Usage: python3 scripts/run_ablation.py --seeds 0 1 2 --out runs/ablation
"""

import argparse
import json
import math

from seqrec.config import EvalConfig, ModelConfig, PipelineConfig, UniversalConfig
from seqrec.data import split_leave_one_out
from seqrec.evaluation import VARIANT_ORDER, ablation_suite
from seqrec.synthetic import SyntheticSpec, build_ablation_dataset


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--report", default=None, help="optional JSON dump path")
    args = ap.parse_args()

    spec = SyntheticSpec(n_users=2000, n_items=500, n_topics=10, d_sem=16,
                         n_noise_tokens=24, noise_tokens_per_item=2,
                         noise_tokens_max=8, noise_token_norm=4.0,
                         p_succ=0.7, p_generic=0.35)
    catalog, corpus, token_init = build_ablation_dataset(spec, args.data_seed)
    train, test = split_leave_one_out(corpus)
    print(f"{len(train.sequences)} users, {catalog.num_items} items, "
          f"{len(test)} test rows")

    cfg = PipelineConfig(
        model=ModelConfig(d_id=32, d_sem=spec.d_sem, n_heads=2, n_layers=2,
                          d_ff=128, n_max=24, n_experts=4, k_active=2),
        universal=UniversalConfig(max_len=24, batch_size=128, n_neg=64,
                                  lr=5e-3, epochs=args.epochs),
        eval=EvalConfig(k_values=(10, 30)),
    )
    suite = ablation_suite(train, test, cfg, args.seeds, token_init, args.out)

    def series(variant, slice_name="all"):
        per_seed = suite["variants"][variant]["per_seed"]
        return [r["slices"][slice_name]["recall"]["10"] for r in per_seed.values()]

    def mean(xs):
        return sum(xs) / len(xs)

    def var(xs):
        m = mean(xs)
        return sum((x - m) ** 2 for x in xs) / (len(xs) - 1)

    print(f"{'variant':<10} {'R@10':>8} {'R@10 cold':>10}")
    for v in VARIANT_ORDER:
        print(f"{v:<10} {mean(series(v)):>8.4f} {mean(series(v, 'cold')):>10.4f}")
    full = series("full")
    for other in VARIANT_ORDER[1:]:
        xs = series(other)
        d = mean(full) - mean(xs)
        se = math.sqrt(var(full) / len(full) + var(xs) / len(xs))
        print(f"full - {other}: {d:+.4f} ({d / se if se else float('inf'):+.1f} se)")

    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(suite, fh, indent=2)
        print(f"wrote {args.report}")


if __name__ == "__main__":
    main()
