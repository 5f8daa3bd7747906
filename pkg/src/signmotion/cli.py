"""Command-line entry point tying the pipeline together.

Exit codes: 0 success, 2 input/validation error, 3 runtime/state error.
Every run writes a reproducibility stamp (config hash, seed, tool version)
next to its outputs, and identical seeds give byte-identical outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .dataset import (
    filter_by_min_samples,
    load_manifest,
    load_qc_sidecar,
    make_split,
    save_manifest,
    select_top_k_subset,
    trim_clip,
)
from .embeddings import EmbeddingService, ProviderConfig
from .errors import (
    SignMotionError,
    StateError,
    TransportError,
)
from .metrics import EvalConfig, full_report
from .model import ModelConfig, load_checkpoint
from .motion import convert_channels, fix_lower_body_rest, read_container, write_container
from .training import TrainConfig, train


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 3
    except (StateError, TransportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SignMotionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="signmotion", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="trim, filter, and split a raw clip manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--qc", help="QC sidecar JSON (clip_id -> keep range)")
    p.add_argument("--min-samples", type=int, default=20)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top-k", type=int, help="keep only the k most sampled words")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare_data)

    p = sub.add_parser("train", help="train the motion model on a prepared dataset")
    p.add_argument("--data", required=True, help="directory containing manifest.json")
    p.add_argument("--config", help="JSON config file with model/train/provider sections")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-curriculum", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="re-synthesize a motion through the model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="motion container to reconstruct")
    p.add_argument("--text", help="condition word (defaults to the container gloss)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON config file (provider section)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("generate", help="generate a motion from a word or image")
    p.add_argument("--checkpoint", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text")
    group.add_argument("--image")
    p.add_argument("--snap-to-vocab", action="store_true",
                   help="route image embeddings to the nearest training gloss")
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON config file (provider section)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score raw/rec/gen groups with the metric suite")
    p.add_argument("--raw", required=True, help="directory with train/ and test/ containers")
    p.add_argument("--rec", required=True)
    p.add_argument("--gen", required=True)
    p.add_argument("--config", help="JSON config file (eval/classifier sections)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("embed", help="embed a word or image and print the vector")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text")
    group.add_argument("--image")
    p.add_argument("--config", help="JSON config file (provider section)")
    p.add_argument("--out", help="write the embedding JSON here instead of stdout")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("export", help="prepare a container for external renderers")
    p.add_argument("--input", required=True)
    p.add_argument("--channels", choices=["axis_angle", "sixd", "matrix"], default="axis_angle")
    p.add_argument("--keep-lower-body", action="store_true",
                   help="skip pinning lower-body joints to the rest pose")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def cmd_prepare_data(args) -> int:
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.qc:
        qc_map = load_qc_sidecar(args.qc)
        trimmed = []
        for rec in manifest.records:
            if rec.clip_id in qc_map:
                trimmed.append(trim_clip(rec, qc_map[rec.clip_id], out_dir / "clips"))
            else:
                trimmed.append(rec)
        manifest = replace(manifest, records=trimmed)

    keep = set(filter_by_min_samples(manifest.words, args.min_samples))
    manifest = replace(manifest, records=[r for r in manifest.records if r.gloss in keep])
    if not manifest.records:
        print("error: no words survive the min-samples filter", file=sys.stderr)
        return 2
    if args.top_k is not None:
        manifest = select_top_k_subset(manifest, args.top_k)
    manifest = make_split(manifest, args.ratio, args.seed)

    save_manifest(manifest, out_dir / "manifest.json")
    _write_stamp(out_dir / "prepare_stamp.json", vars(args) | {"command": "prepare-data"}, args.seed)
    n_train = len(manifest.split_records("train"))
    n_test = len(manifest.split_records("test"))
    print(f"words: {len(manifest.words)}, train: {n_train}, test: {n_test}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    data_dir = Path(args.data)
    manifest = load_manifest(data_dir / "manifest.json")

    model_config = ModelConfig(**cfg.get("model", {}))
    train_kw = dict(cfg.get("train", {}))
    if args.epochs is not None:
        train_kw["epochs"] = args.epochs
    if args.seed is not None:
        train_kw["seed"] = args.seed
    if args.no_curriculum:
        train_kw["curriculum_enabled"] = False
    train_config = TrainConfig(**train_kw)
    service = _embedding_service(cfg)

    out_dir = Path(args.out)
    result = train(manifest, model_config, train_config, service, out_dir)
    _write_stamp(out_dir / "train_stamp.json", cfg | {"command": "train", "cli": vars(args) | {"func": None}},
                 train_config.seed)
    print(f"trained {train_config.epochs} epochs; final checkpoint: {result.checkpoint_paths[-1]}")
    return 0


def cmd_reconstruct(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    motion = read_container(args.input)
    word = args.text or motion.gloss
    if not word:
        print("error: container has no gloss; pass --text", file=sys.stderr)
        return 2
    cfg = _load_config(args.config)
    service = _embedding_service(cfg)
    cond = service.embed_text(word)
    out = bundle.model.reconstruct(motion, cond, seed=args.seed)
    write_container(out, args.out)
    _write_stamp(Path(args.out).with_suffix(".stamp.json"),
                 {"command": "reconstruct", "checkpoint": args.checkpoint, "word": word}, args.seed)
    print(f"reconstructed {word!r}: {out.frame_count} frames -> {args.out}")
    return 0


def cmd_generate(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    cfg = _load_config(args.config)
    service = _embedding_service(cfg)

    if args.text:
        cond = service.embed_text(args.text)
        gloss = args.text
    else:
        cond = service.embed_image(args.image)
        gloss = None
        if args.snap_to_vocab:
            if not bundle.glosses:
                raise StateError("checkpoint has no gloss vocabulary to snap to")
            gloss = service.nearest_gloss(cond, bundle.glosses)
            cond = service.embed_text(gloss)

    out = bundle.model.generate(cond, args.frames, seed=args.seed)
    if gloss is not None:
        out.gloss = gloss
    write_container(out, args.out)
    _write_stamp(Path(args.out).with_suffix(".stamp.json"),
                 {"command": "generate", "checkpoint": args.checkpoint, "gloss": gloss,
                  "image": args.image, "frames": args.frames}, args.seed)
    print(f"generated {gloss or args.image!r}: {out.frame_count} frames -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    from .classifier import ClassifierConfig, train_classifier

    cfg = _load_config(args.config)
    groups = {}
    for group, root in (("raw", args.raw), ("rec", args.rec), ("gen", args.gen)):
        for split in ("train", "test"):
            split_dir = Path(root) / split
            if not split_dir.is_dir():
                print(f"error: missing group directory {split_dir}", file=sys.stderr)
                return 2
            motions = [read_container(p) for p in sorted(split_dir.glob("*.smc"))]
            groups[(group, split)] = motions

    clf_config = ClassifierConfig(**cfg.get("classifier", {}))
    classifier = train_classifier(
        groups[("raw", "train")],
        [m.gloss for m in groups[("raw", "train")]],
        seed=args.seed,
        config=clf_config,
    )
    eval_config = EvalConfig(**(cfg.get("eval", {}) | {"seed": args.seed}))
    report = full_report(classifier, groups, eval_config)
    report.save(args.out)
    _write_stamp(Path(args.out).with_suffix(".stamp.json"), cfg | {"command": "evaluate"}, args.seed)
    for key in sorted(report.cells):
        cell = report.cells[key]
        print(f"{key}: acc={cell.accuracy:.3f} fid={cell.fid:.3f} "
              f"div={cell.diversity:.3f} multi={cell.multimodality:.3f}")
    return 0


def cmd_embed(args) -> int:
    cfg = _load_config(args.config)
    service = _embedding_service(cfg)
    emb = service.embed_text(args.text) if args.text else service.embed_image(args.image)
    payload = {
        "key": emb.key,
        "modality": emb.modality,
        "d_emb": len(emb.vector),
        "vector": emb.vector.tolist(),
    }
    text = json.dumps(payload)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_export(args) -> int:
    motion = read_container(args.input)
    if not args.keep_lower_body:
        motion = fix_lower_body_rest(motion)
    motion = convert_channels(motion, args.channels)
    write_container(motion, args.out)
    print(f"exported {args.out} ({motion.frame_count} frames, {args.channels})")
    return 0


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _embedding_service(cfg: dict) -> EmbeddingService:
    return EmbeddingService(ProviderConfig(**cfg.get("provider", {})))


def _write_stamp(path: Path, config: dict, seed: int) -> None:
    """Reproducibility stamp: config hash + seed + tool version, no timestamps."""
    canon = json.dumps(config, sort_keys=True, default=str)
    stamp = {
        "config_sha256": hashlib.sha256(canon.encode("utf-8")).hexdigest(),
        "seed": seed,
        "tool_version": __version__,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(stamp, indent=2, sort_keys=True) + "\n", encoding="utf-8")


if __name__ == "__main__":
    raise SystemExit(main())
