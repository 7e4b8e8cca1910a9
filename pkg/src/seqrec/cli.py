"""Command-line entry points and the staged pipeline recipe.

Every stage writes a manifest recording the config hash and seed, so any
artifact on disk can be traced to the exact configuration that produced
it. The hash is pinned once when the config is loaded; later stages may
fill in generated data paths without changing provenance.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys

import numpy as np

from .checkpoints import apply_checkpoint, load_checkpoint
from .config import (
    PipelineConfig,
    config_from_dict,
    config_hash,
    config_to_dict,
    load_config,
)
from .coverage import simulate_arrivals, warmup_series, write_series_csv
from .data import (
    ItemCatalog,
    SequenceCorpus,
    load_catalog,
    load_interactions,
    load_split,
    save_corpus,
    save_split,
    split_leave_one_out,
)
from .evaluation import evaluate
from .recall import (
    RecallService,
    build_index,
    export_embeddings,
    load_history,
    load_index,
    load_store,
    save_index,
)
from .server import RecallServer
from .synthetic import (
    TARGET_SCENE,
    SyntheticSpec,
    TwoSceneSpec,
    build_ablation_dataset,
    build_two_scene_dataset,
    write_dataset,
)
from .targeted import TargetedModel, targeted_provider, train_targeted
from .tensorstore import read_container
from .universal import build_universal_model, train_universal

PIPELINE_STAGES = (
    "gen-synthetic",
    "ingest",
    "train-universal",
    "train-targeted",
    "eval",
    "export",
    "index",
)


def _csv_list(text: str | None) -> list[str] | None:
    if text is None:
        return None
    return [part for part in text.split(",") if part]


def _write_manifest(out_dir: str, stage: str, chash: str, seed: int, outputs: dict) -> None:
    os.makedirs(os.path.join(out_dir, "manifests"), exist_ok=True)
    doc = {"stage": stage, "config_hash": chash, "seed": seed, "outputs": outputs}
    path = os.path.join(out_dir, "manifests", f"{stage}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)


def _load_token_init(path: str | None) -> np.ndarray | None:
    if path is None:
        return None
    return read_container(path)["token_embeddings"]


def _build_corpus(
    cfg: PipelineConfig, scenes: list[str] | None, actions: list[str] | None
) -> tuple[ItemCatalog, SequenceCorpus]:
    # a token-init container fixes the vocabulary even when trailing token
    # ids never made it onto any catalog item
    min_vocab = 1
    if cfg.token_init_path and os.path.exists(cfg.token_init_path):
        min_vocab = read_container(cfg.token_init_path)["token_embeddings"].shape[0]
    catalog = load_catalog(cfg.catalog_path, min_vocab=min_vocab)
    corpus = load_interactions(
        cfg.interactions_path,
        catalog,
        scene_filter=set(scenes) if scenes else None,
        action_filter=set(actions) if actions else None,
    )
    return catalog, corpus


def _model_for_checkpoint(ckpt, corpus: SequenceCorpus, cfg: PipelineConfig):
    """Rebuild the right architecture for a checkpoint and install it."""
    phase = ckpt.meta.get("phase", "universal")
    variant = ckpt.meta.get("variant", "full")
    if phase == "universal":
        model = build_universal_model(corpus, cfg, variant)
    else:
        backbone = build_universal_model(corpus, cfg, variant)
        hidden = cfg.targeted.head_hidden or cfg.model.d_model
        model = TargetedModel(backbone, cfg.targeted.max_len, hidden, cfg.seed)
    apply_checkpoint(model, ckpt)
    model.eval()
    return model, phase


def _latest_universal(path: str) -> str:
    """Resolve a checkpoint file or a run directory to a checkpoint path."""
    if os.path.isfile(path):
        return path
    names = sorted(n for n in os.listdir(path) if n.endswith("-latest.ptns"))
    preferred = [n for n in names if "-full-" in n]
    picks = preferred or names
    if not picks:
        raise FileNotFoundError(f"no *-latest.ptns checkpoint under {path}")
    return os.path.join(path, picks[0])


# -- pipeline ----------------------------------------------------------


def run_pipeline(
    cfg: PipelineConfig,
    stages: list[str],
    out_dir: str | None = None,
) -> dict:
    """Execute the requested stages in canonical order.

    A stage failure raises and halts the run; artifacts already written
    stay on disk. The config hash is computed before any stage mutates
    generated-data paths, so artifacts from different working directories
    agree byte for byte when the input config and seed agree.
    """
    for stage in stages:
        if stage not in PIPELINE_STAGES:
            raise ValueError(f"unknown stage {stage!r}")
    stages = [s for s in PIPELINE_STAGES if s in stages]
    cfg = copy.deepcopy(cfg)  # generated-data stages fill in paths locally
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    chash = config_hash(cfg)
    artifacts: dict = {"out_dir": out_dir, "config_hash": chash}
    ctx: dict = {}

    def data_ready() -> None:
        if "uni_train" in ctx:
            return
        catalog, uni = _build_corpus(cfg, cfg.universal_scenes, cfg.universal_actions)
        ctx["catalog"] = catalog
        ctx["uni_full"] = uni
        ctx["uni_train"], ctx["uni_test"] = split_leave_one_out(uni)
        if cfg.target_scenes or cfg.target_actions:
            tgt = load_interactions(
                cfg.interactions_path,
                catalog,
                scene_filter=set(cfg.target_scenes) if cfg.target_scenes else None,
                action_filter=set(cfg.target_actions) if cfg.target_actions else None,
            )
        else:
            tgt = uni
        ctx["tgt_full"] = tgt
        ctx["tgt_train"], ctx["tgt_test"] = split_leave_one_out(tgt)

    for stage in stages:
        if stage == "gen-synthetic":
            data_dir = os.path.join(out_dir, "data")
            syn = cfg.synthetic
            # token vectors must come out at the width the model ingests
            if syn.kind == "ablation":
                spec = SyntheticSpec(
                    n_users=syn.n_users, n_items=syn.n_items, n_topics=syn.n_topics,
                    d_sem=cfg.model.d_sem,
                )
                catalog, corpus, token_init = build_ablation_dataset(spec, cfg.seed)
            else:
                spec = TwoSceneSpec(
                    SyntheticSpec(
                        n_users=syn.n_users, n_items=syn.n_items, n_topics=syn.n_topics,
                        min_len=10, max_len=20, d_sem=cfg.model.d_sem,
                    )
                )
                catalog, corpus, token_init = build_two_scene_dataset(spec, cfg.seed)
                cfg.target_scenes = [TARGET_SCENE]
            paths = write_dataset(catalog, corpus, token_init, data_dir)
            cfg.catalog_path = paths["catalog"]
            cfg.interactions_path = paths["interactions"]
            cfg.token_init_path = paths["token_init"]
            artifacts["data"] = paths
            _write_manifest(out_dir, stage, chash, cfg.seed, paths)

        elif stage == "ingest":
            data_ready()
            ingest_dir = os.path.join(out_dir, "ingest")
            os.makedirs(ingest_dir, exist_ok=True)
            split_meta = {
                "config": config_to_dict(cfg),
                "catalog": cfg.catalog_path,
                "interactions": cfg.interactions_path,
                "config_hash": chash,
            }
            outs = {}
            for name, corpus, rows, scenes, actions in (
                ("universal", ctx["uni_full"], ctx["uni_test"],
                 cfg.universal_scenes, cfg.universal_actions),
                ("target", ctx["tgt_full"], ctx["tgt_test"],
                 cfg.target_scenes, cfg.target_actions),
            ):
                cpath = os.path.join(ingest_dir, f"{name}-corpus.json")
                save_corpus(corpus, cpath)
                spath = os.path.join(ingest_dir, f"{name}-split.json")
                save_split(spath, rows, {**split_meta, "scenes": scenes, "actions": actions})
                outs[f"{name}_corpus"] = cpath
                outs[f"{name}_split"] = spath
            hpath = os.path.join(ingest_dir, "history.json")
            with open(hpath, "w", encoding="utf-8") as fh:
                json.dump(
                    {u: ctx["tgt_train"].items_of(u) for u in sorted(ctx["tgt_train"].sequences)},
                    fh,
                )
            outs["history"] = hpath
            artifacts["ingest"] = outs
            _write_manifest(out_dir, stage, chash, cfg.seed, outs)

        elif stage == "train-universal":
            data_ready()
            udir = os.path.join(out_dir, "universal")
            result = train_universal(
                ctx["uni_train"], cfg, udir,
                token_init=_load_token_init(cfg.token_init_path), chash=chash,
            )
            ctx["universal"] = result
            artifacts["universal_checkpoint"] = result.final_checkpoint
            artifacts["universal_latest"] = result.latest_path
            _write_manifest(out_dir, stage, chash, cfg.seed, {
                "final": result.final_checkpoint, "latest": result.latest_path,
            })

        elif stage == "train-targeted":
            data_ready()
            latest = artifacts.get("universal_latest") or _latest_universal(
                os.path.join(out_dir, "universal")
            )
            tdir = os.path.join(out_dir, "targeted")
            result = train_targeted(
                ctx["tgt_train"], targeted_provider(latest), cfg, tdir, chash=chash
            )
            ctx["targeted"] = result
            artifacts["targeted_checkpoint"] = result.final_checkpoint
            _write_manifest(out_dir, stage, chash, cfg.seed, {
                "final": result.final_checkpoint,
            })

        elif stage == "eval":
            data_ready()
            edir = os.path.join(out_dir, "eval")
            os.makedirs(edir, exist_ok=True)
            outs = {}
            latest = artifacts.get("universal_latest")
            if latest is None and os.path.isdir(os.path.join(out_dir, "universal")):
                try:
                    latest = _latest_universal(os.path.join(out_dir, "universal"))
                except FileNotFoundError:
                    latest = None
            if latest:
                model, _ = _model_for_checkpoint(load_checkpoint(latest), ctx["uni_train"], cfg)
                report = evaluate(
                    model, "universal", ctx["uni_test"], ctx["uni_train"],
                    k_values=cfg.eval.k_values, hot_fraction=cfg.eval.hot_fraction,
                    max_len=cfg.universal.max_len,
                )
                path = os.path.join(edir, "universal.json")
                with open(path, "w", encoding="utf-8") as fh:
                    json.dump(report, fh, sort_keys=True, indent=2)
                outs["universal"] = path
            tckpt = artifacts.get("targeted_checkpoint")
            if tckpt is None:
                tdir = os.path.join(out_dir, "targeted")
                if os.path.isdir(tdir):
                    steps = sorted(n for n in os.listdir(tdir) if n.endswith(".ptns"))
                    if steps:
                        tckpt = os.path.join(tdir, steps[-1])
            if tckpt:
                model, _ = _model_for_checkpoint(load_checkpoint(tckpt), ctx["tgt_train"], cfg)
                report = evaluate(
                    model, "targeted", ctx["tgt_test"], ctx["tgt_train"],
                    k_values=cfg.eval.k_values, hot_fraction=cfg.eval.hot_fraction,
                    max_len=cfg.targeted.max_len,
                )
                path = os.path.join(edir, "targeted.json")
                with open(path, "w", encoding="utf-8") as fh:
                    json.dump(report, fh, sort_keys=True, indent=2)
                outs["targeted"] = path
            artifacts["eval"] = outs
            _write_manifest(out_dir, stage, chash, cfg.seed, outs)

        elif stage == "export":
            data_ready()
            xdir = os.path.join(out_dir, "export")
            os.makedirs(xdir, exist_ok=True)
            tckpt = artifacts.get("targeted_checkpoint")
            if tckpt is None:
                tdir = os.path.join(out_dir, "targeted")
                if os.path.isdir(tdir):
                    steps = sorted(n for n in os.listdir(tdir) if n.endswith(".ptns"))
                    if steps:
                        tckpt = os.path.join(tdir, steps[-1])
            if tckpt:
                ckpt = load_checkpoint(tckpt)
                corpus = ctx["tgt_train"]
            else:
                latest = artifacts.get("universal_latest") or _latest_universal(
                    os.path.join(out_dir, "universal")
                )
                ckpt = load_checkpoint(latest)
                corpus = ctx["uni_train"]
            model, phase = _model_for_checkpoint(ckpt, corpus, cfg)
            max_len = cfg.targeted.max_len if phase == "targeted" else cfg.universal.max_len
            upath = os.path.join(xdir, "users.ptns")
            ipath = os.path.join(xdir, "items.ptns")
            export_embeddings(
                model, phase, corpus, "user", upath, max_len=max_len,
                source_checkpoint=ckpt.meta.get("checkpoint_id"),
            )
            export_embeddings(
                model, phase, corpus, "item", ipath,
                source_checkpoint=ckpt.meta.get("checkpoint_id"),
            )
            hpath = os.path.join(xdir, "history.json")
            with open(hpath, "w", encoding="utf-8") as fh:
                json.dump({u: corpus.items_of(u) for u in sorted(corpus.sequences)}, fh)
            outs = {"users": upath, "items": ipath, "history": hpath}
            artifacts["export"] = outs
            _write_manifest(out_dir, stage, chash, cfg.seed, outs)

        elif stage == "index":
            ipath = artifacts.get("export", {}).get("items") or os.path.join(
                out_dir, "export", "items.ptns"
            )
            index = build_index(load_store(ipath))
            xpath = os.path.join(out_dir, "export", "index.ptns")
            save_index(index, xpath)
            artifacts["index"] = xpath
            _write_manifest(out_dir, stage, chash, cfg.seed, {"index": xpath})

    return artifacts


# -- subcommand handlers ----------------------------------------------


def _cmd_ingest(args) -> int:
    catalog = load_catalog(args.catalog)
    corpus = load_interactions(
        args.interactions, catalog,
        scene_filter=set(_csv_list(args.scene)) if args.scene else None,
        action_filter=set(_csv_list(args.action)) if args.action else None,
    )
    save_corpus(corpus, args.out)
    if args.split_out:
        _, rows = split_leave_one_out(corpus)
        save_split(
            args.split_out, rows,
            {"catalog": args.catalog, "interactions": args.interactions,
             "scenes": _csv_list(args.scene), "actions": _csv_list(args.action)},
        )
    print(json.dumps({
        "users": len(corpus.sequences),
        "records": sum(len(s) for s in corpus.sequences.values()),
        "dropped": corpus.dropped,
        "out": args.out,
    }))
    return 0


def _cmd_train_universal(args) -> int:
    cfg = load_config(args.config)
    _, corpus = _build_corpus(cfg, cfg.universal_scenes, cfg.universal_actions)
    train, _ = split_leave_one_out(corpus)
    out_dir = args.out_dir or os.path.join(cfg.out_dir, "universal")
    result = train_universal(
        train, cfg, out_dir, variant=args.variant,
        token_init=_load_token_init(cfg.token_init_path),
    )
    print(json.dumps({
        "checkpoint": result.final_checkpoint,
        "latest": result.latest_path,
        "final_loss": result.losses[-1] if result.losses else None,
    }))
    return 0


def _cmd_train_targeted(args) -> int:
    cfg = load_config(args.config)
    _, corpus = _build_corpus(cfg, cfg.target_scenes, cfg.target_actions)
    train, _ = split_leave_one_out(corpus)
    latest = _latest_universal(args.universal_ckpt_dir)
    out_dir = args.out_dir or os.path.join(cfg.out_dir, "targeted")
    result = train_targeted(train, targeted_provider(latest), cfg, out_dir)
    print(json.dumps({
        "checkpoint": result.final_checkpoint,
        "final_loss": result.losses[-1] if result.losses else None,
        "refreshes": result.refresh_steps,
    }))
    return 0


def _cmd_eval(args) -> int:
    rows, meta = load_split(args.split)
    if args.config:
        cfg = load_config(args.config)
    elif "config" in meta:
        cfg = config_from_dict(meta["config"])
    else:
        raise SystemExit("split file has no embedded config; pass --config")
    catalog = load_catalog(meta.get("catalog") or cfg.catalog_path)
    scenes = meta.get("scenes")
    actions = meta.get("actions")
    corpus = load_interactions(
        meta.get("interactions") or cfg.interactions_path, catalog,
        scene_filter=set(scenes) if scenes else None,
        action_filter=set(actions) if actions else None,
    )
    train, _ = split_leave_one_out(corpus)
    model, _ = _model_for_checkpoint(load_checkpoint(args.ckpt), train, cfg)
    k_values = tuple(int(k) for k in args.k.split(","))
    max_len = cfg.targeted.max_len if args.mode == "targeted" else cfg.universal.max_len
    report = evaluate(
        model, args.mode, rows, train,
        k_values=k_values, hot_fraction=cfg.eval.hot_fraction, max_len=max_len,
    )
    if args.slice != "all,hot,cold":
        keep = set(_csv_list(args.slice))
        report["slices"] = {k: v for k, v in report["slices"].items() if k in keep}
    text = json.dumps(report, sort_keys=True, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _cmd_export(args) -> int:
    cfg = load_config(args.config)
    ckpt = load_checkpoint(args.ckpt)
    phase = args.mode or ckpt.meta.get("phase", "universal")
    scenes = cfg.target_scenes if phase == "targeted" else cfg.universal_scenes
    actions = cfg.target_actions if phase == "targeted" else cfg.universal_actions
    _, corpus = _build_corpus(cfg, scenes, actions)
    train, _ = split_leave_one_out(corpus)
    model, _ = _model_for_checkpoint(ckpt, train, cfg)
    max_len = cfg.targeted.max_len if phase == "targeted" else cfg.universal.max_len
    store = export_embeddings(
        model, phase, train, args.kind, args.out, max_len=max_len,
        append=args.append, source_checkpoint=ckpt.meta.get("checkpoint_id"),
    )
    print(json.dumps({"out": args.out, "count": len(store.ids), "dim": store.dim}))
    return 0


def _cmd_index(args) -> int:
    index = build_index(load_store(args.items))
    save_index(index, args.out)
    print(json.dumps({"out": args.out, "items": len(index.ids)}))
    return 0


def _cmd_serve(args) -> int:
    host, _, port = args.addr.rpartition(":")
    service = RecallService(
        users=load_store(args.users),
        items=load_store(args.items),
        index=load_index(args.index),
        history=load_history(args.exclusions),
    )
    server = RecallServer((host or "127.0.0.1", int(port)), service)
    print(json.dumps({"listening": f"{server.server_address[0]}:{server.server_address[1]}"}))
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
    return 0


def _cmd_simulate_warmup(args) -> int:
    if args.arrivals:
        with open(args.arrivals, "r", encoding="utf-8") as fh:
            exposures = json.load(fh)["days"]
    else:
        exposures = simulate_arrivals(
            args.days, initial_items=args.initial, growth_rate=args.rate, seed=args.seed
        )
    series = warmup_series(exposures, refresh_every=args.refresh_every)
    if args.out:
        write_series_csv(series, args.out)
        print(json.dumps({"out": args.out, "days": len(series)}))
    else:
        print("day,ratio")
        for day, ratio in series:
            print(f"{day},{ratio:.6f}")
    return 0


def _cmd_gen_synthetic(args) -> int:
    if args.kind == "ablation":
        spec = SyntheticSpec(n_users=args.users, n_items=args.items, n_topics=args.topics)
        catalog, corpus, token_init = build_ablation_dataset(spec, args.seed)
    else:
        spec = TwoSceneSpec(
            SyntheticSpec(
                n_users=args.users, n_items=args.items, n_topics=args.topics,
                min_len=10, max_len=20,
            )
        )
        catalog, corpus, token_init = build_two_scene_dataset(spec, args.seed)
    paths = write_dataset(catalog, corpus, token_init, args.out)
    print(json.dumps(paths))
    return 0


def _cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    stages = _csv_list(args.stages) or list(PIPELINE_STAGES)
    artifacts = run_pipeline(cfg, stages, out_dir=args.out_dir)
    print(json.dumps(artifacts, sort_keys=True, indent=2, default=str))
    return 0


def _cmd_validate_config(args) -> int:
    try:
        cfg = load_config(args.config)
    except Exception as exc:
        print(json.dumps({"valid": False, "violations": str(exc).split("; ")}))
        return 1
    print(json.dumps({"valid": True, "config_hash": config_hash(cfg),
                      "config": config_to_dict(cfg)}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqrec",
        description="Sequential recommender: fused embeddings, two-stage training, recall serving",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load interaction logs into a corpus artifact")
    p.add_argument("--interactions", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--scene", default=None, help="comma-separated scene filter")
    p.add_argument("--action", default=None, help="comma-separated action filter")
    p.add_argument("--out", required=True)
    p.add_argument("--split-out", default=None, help="also write a leave-one-out split")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("train-universal", help="broad next-item pre-training")
    p.add_argument("--config", required=True)
    p.add_argument("--variant", default="full",
                   choices=["full", "pool", "id_only", "llm_only"])
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=_cmd_train_universal)

    p = sub.add_parser("train-targeted", help="scene-specific fine-tuning")
    p.add_argument("--config", required=True)
    p.add_argument("--universal-ckpt-dir", required=True)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=_cmd_train_targeted)

    p = sub.add_parser("eval", help="offline ranking evaluation")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--mode", required=True, choices=["universal", "targeted"])
    p.add_argument("--split", required=True)
    p.add_argument("--k", default="10,30,50")
    p.add_argument("--slice", default="all,hot,cold")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("export", help="write user or item embeddings")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--kind", required=True, choices=["user", "item"])
    p.add_argument("--out", required=True)
    p.add_argument("--append", action="store_true")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", default=None, choices=["universal", "targeted"])
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("index", help="build the exact cosine index")
    p.add_argument("--items", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("serve", help="serve recall over line-delimited JSON/TCP")
    p.add_argument("--addr", required=True, help="HOST:PORT")
    p.add_argument("--users", required=True)
    p.add_argument("--items", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--exclusions", required=True)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("simulate-warmup", help="coverage-ratio series under item churn")
    p.add_argument("--arrivals", default=None, help='JSON {"days": [[item, ...], ...]}')
    p.add_argument("--days", type=int, default=20)
    p.add_argument("--initial", type=int, default=100)
    p.add_argument("--rate", type=float, default=0.1)
    p.add_argument("--refresh-every", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV path; stdout if omitted")
    p.set_defaults(func=_cmd_simulate_warmup)

    p = sub.add_parser("gen-synthetic", help="emit a synthetic dataset")
    p.add_argument("--kind", default="ablation", choices=["ablation", "two-scene"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, default=2000)
    p.add_argument("--items", type=int, default=500)
    p.add_argument("--topics", type=int, default=10)
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("pipeline", help="run pipeline stages in order")
    p.add_argument("--config", required=True)
    p.add_argument("--stages", default=None,
                   help=f"comma-separated subset of {','.join(PIPELINE_STAGES)}")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("validate-config", help="normalize and check a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_validate_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
