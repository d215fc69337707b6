"""Command-line entry points: ``python -m fforge <command> --config run.yaml``.

Commands: synth, build-pool, train, evaluate, attack, report, checksum.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .aepool import MANIFEST_SCHEMA, build_pool, load_pool
from .attacks import AttackConfig, blackbox_transfer, pgd_attack
from .config import RunConfig, load_config
from .dataprep import REAL, ingest_index
from .detector import Regime, load_crops, load_detector, split_videos, train_detector
from .errors import ConfigError, FforgeError, IOFailure, MissingPool
from .evaluation import EvalReport, ReportRow, resolve_conditions, robustness_grid, roc_auc, video_scores, ScoredFrame
from .synthdata import build_synth_dataset

logger = logging.getLogger("fforge")


def _dataset(cfg: RunConfig, which: str):
    path = cfg.train_data_dir if which == "train" else cfg.test_data_dir
    if not path.exists():
        raise ConfigError(f"{which} dataset not found at {path}; run 'synth' first")
    return ingest_index(path, name=(cfg.dataset if which == "train" else cfg.test_dataset).name)


def cmd_synth(cfg: RunConfig, args) -> int:
    for which in ("train", "test"):
        src = cfg.dataset if which == "train" else cfg.test_dataset
        if src.path is not None:
            print(f"{which}: using existing dataset {src.path}")
            continue
        out = cfg.train_data_dir if which == "train" else cfg.test_data_dir
        index = build_synth_dataset(cfg.synth_config(which), out)
        print(f"{which}: {out / 'index.csv'} ({len(index)} frames)")
    return 0


def _pool_images(cfg: RunConfig):
    index = _dataset(cfg, "train")
    tc = cfg.train_config(Regime.BL)
    train_ids, val_ids = split_videos(index, tc.val_fraction, tc.seed)
    train = [c.image for c in load_crops(index, train_ids, cfg.crop_size) if c.label == REAL]
    val = [c.image for c in load_crops(index, val_ids, cfg.crop_size) if c.label == REAL]
    return train, val


def cmd_build_pool(cfg: RunConfig, args) -> int:
    size = args.pool_size or cfg.pool.size
    train, val = _pool_images(cfg)
    pool = build_pool(size, train, val, cfg.seed, out_dir=cfg.pool_dir, max_epochs=cfg.pool.max_epochs,
                      batch_size=cfg.pool.batch_size, lr=cfg.pool.lr,
                      min_steps_per_epoch=cfg.pool.min_steps_per_epoch)
    print(f"{'config':<36} {'T':>6} {'epochs':>6} {'heldout_mae':>11}  status")
    for meta in [m.metadata() for m in pool.members] + pool.rejected:
        c = meta["config"]
        tag = f"{c['family']}-d{c['depth']}-k{c['kernel']}-{c['upsampling']}-{c['loss']}"
        status = "accepted" if meta["accepted"] else "rejected"
        print(f"{tag:<36} {c['threshold_T']:6.3f} {meta['epochs_run']:6d} {meta['heldout_mae']:11.4f}  {status}")
    print(f"accepted={len(pool.members)} rejected={len(pool.rejected)} manifest={cfg.pool_dir / 'manifest.json'}")
    return 0


def _regimes(values) -> list[Regime]:
    out = []
    for v in values:
        out += list(Regime) if v == "all" else [Regime(v)]
    return out


def cmd_train(cfg: RunConfig, args) -> int:
    regimes = _regimes(args.regime or ["BL"])
    pool_path = args.pool or cfg.pool.path
    if any(r.uses_pool for r in regimes) and pool_path is None:
        raise MissingPool("pool required for EA regimes: pass --pool DIR or set pool.path in the config")
    index = _dataset(cfg, "train")
    pool = load_pool(pool_path) if pool_path is not None and any(r.uses_pool for r in regimes) else None
    cfg.models_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(r.value, cfg.train_config(r), r) for r in regimes]
    if args.surrogate:
        jobs.append(("surrogate", cfg.surrogate_config(), Regime.BL))
    for name, tc, regime in jobs:
        stem = cfg.models_dir / name.replace("+", "_")
        model = train_detector(index, tc, regime, pool if regime.uses_pool else None,
                               log_path=stem.with_suffix(".log.csv"))
        path = model.save(stem)
        print(f"{name}: {path} epochs={len(model.history)} checksum={model.checksum[:12]}")
    return 0


def _load_models(cfg: RunConfig, paths):
    if paths:
        files = [Path(p) for p in paths]
    else:
        files = sorted(p.with_suffix(".pt") for p in cfg.models_dir.glob("*.json") if p.stem != "surrogate")
        order = {r.value.replace("+", "_"): i for i, r in enumerate(Regime)}
        files.sort(key=lambda p: order.get(p.stem, len(order)))
    if not files:
        raise ConfigError(f"no detector checkpoints in {cfg.models_dir}; run 'train' first")
    return [load_detector(p) for p in files]


def _surrogate(cfg: RunConfig, path):
    path = Path(path) if path else cfg.models_dir / "surrogate.pt"
    if not path.with_suffix(".json").exists():
        raise ConfigError(f"black-box evaluation needs a surrogate checkpoint (looked for {path}); "
                          "run 'train --surrogate' or pass --surrogate-checkpoint")
    return load_detector(path)


def cmd_evaluate(cfg: RunConfig, args) -> int:
    conditions = resolve_conditions(args.conditions or cfg.conditions)
    models = _load_models(cfg, args.checkpoint)
    surrogate = _surrogate(cfg, args.surrogate_checkpoint) if "Black-box" in conditions else None
    index = _dataset(cfg, "test")
    report = robustness_grid(models, index, conditions, span=cfg.span, surrogate=surrogate,
                             attack_config=cfg.attack_config(), seed=cfg.seed)
    csv_path, md_path = report.write(cfg.reports_dir, args.stem)
    print(report.to_markdown())
    print(f"wrote {csv_path} and {md_path}")
    return 0


def cmd_attack(cfg: RunConfig, args) -> int:
    base = cfg.attack_config()
    acfg = AttackConfig(
        epsilon=args.epsilon if args.epsilon is not None else base.epsilon,
        alpha=args.alpha if args.alpha is not None else base.alpha,
        steps=args.steps if args.steps is not None else base.steps,
        random_start=base.random_start,
        seed=base.seed,
    )
    models = _load_models(cfg, args.checkpoint)
    surrogate = _surrogate(cfg, args.surrogate_checkpoint) if args.mode == "blackbox" else None
    index = _dataset(cfg, "test")
    crops = load_crops(index, None, cfg.crop_size)
    images, labels = [c.image for c in crops], [c.label for c in crops]
    keys = [f"{c.video_id}/{c.frame_idx}" for c in crops]
    cfg.reports_dir.mkdir(parents=True, exist_ok=True)
    out_path = cfg.reports_dir / f"attack_{args.mode}.csv"
    rows = []
    for model in models:
        if surrogate is not None:
            adv = blackbox_transfer(surrogate, model, images, labels, acfg, keys=keys)
        else:
            adv = pgd_attack(model, images, labels, acfg, keys=keys)
        linf = float(max(np.abs(a - x).max() for a, x in zip(adv, images)))

        def auc(imgs):
            frames = [ScoredFrame(c.video_id, c.frame_idx, float(s), c.label) for c, s in zip(crops, model.scores(imgs))]
            return roc_auc([(s, l) for _, s, l in video_scores(frames, cfg.span)])

        rows.append([model.regime.value, args.mode, f"{auc(images):.6f}", f"{auc(adv):.6f}", f"{linf:.8f}",
                     model.gradient_queries])
        print(f"{model.regime.value}: clean AUC {rows[-1][2]} -> {args.mode} AUC {rows[-1][3]} (max |delta| {linf:.5f})")
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["regime", "mode", "clean_auc", "attacked_auc", "max_linf", "target_gradient_queries"])
        w.writerows(rows)
    print(f"wrote {out_path}")
    return 0


def cmd_report(cfg: RunConfig | None, args) -> int:
    rows = []
    for path in args.inputs:
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                rows.append(ReportRow(r["dataset"], r["condition"], r["regime"], float(r["auc"])))
    report = EvalReport(rows, {"sources": [str(p) for p in args.inputs]})
    text = report.to_markdown()
    if args.output:
        Path(args.output).write_text(text)
    print(text)
    return 0


def tree_checksum(path) -> str:
    """SHA-256 over relative paths and contents of every file under ``path``."""
    root = Path(path)
    h = hashlib.sha256()
    files = [root] if root.is_file() else sorted(p for p in root.rglob("*") if p.is_file())
    for p in files:
        h.update(str(p.relative_to(root) if p != root else p.name).encode())
        h.update(b"\0")
        h.update(p.read_bytes())
    return h.hexdigest()


def cmd_checksum(cfg, args) -> int:
    for p in args.paths:
        if not Path(p).exists():
            raise IOFailure(f"{p} does not exist")
        print(f"{tree_checksum(p)}  {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fforge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--output-dir", help="override output_dir")
        p.add_argument("--workers", type=int, help="cap on torch intra-op threads")
        return p

    with_config(sub.add_parser("synth", help="generate the synthetic train/test datasets"))
    p = with_config(sub.add_parser("build-pool", help="train the autoencoder pool"))
    p.add_argument("--pool-size", type=int)
    p = with_config(sub.add_parser("train", help="train detector(s)"))
    p.add_argument("--regime", action="append", choices=[r.value for r in Regime] + ["all"])
    p.add_argument("--pool", help="pool directory (required for EA, EA+CA)")
    p.add_argument("--surrogate", action="store_true", help="also train the black-box surrogate")
    p = with_config(sub.add_parser("evaluate", help="run the robustness grid"))
    p.add_argument("--conditions", help="comma list of conditions or groups: perturbations, jpeg, attacks, all")
    p.add_argument("--checkpoint", action="append", help="detector checkpoint(s); default: all in models/")
    p.add_argument("--surrogate-checkpoint")
    p.add_argument("--stem", default="report")
    p = with_config(sub.add_parser("attack", help="attack detectors on the test split"))
    p.add_argument("--mode", choices=["whitebox", "blackbox"], default="whitebox")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--checkpoint", action="append")
    p.add_argument("--surrogate-checkpoint")
    p = sub.add_parser("report", help="render report CSVs as Markdown tables")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--output")
    p = sub.add_parser("checksum", help="content checksum of files or directories")
    p.add_argument("paths", nargs="+")
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "build-pool": cmd_build_pool,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "attack": cmd_attack,
    "report": cmd_report,
    "checksum": cmd_checksum,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = None
        if hasattr(args, "config"):
            out_dir = str(Path(args.output_dir).resolve()) if args.output_dir else None
            cfg = load_config(args.config, {"seed": args.seed, "output_dir": out_dir,
                                            "workers": args.workers})
            torch.set_num_threads(cfg.workers)
        return COMMANDS[args.command](cfg, args)
    except (FforgeError, OSError, ValueError) as exc:
        print(f"fforge {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
