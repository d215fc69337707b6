"""Frame and video AUC and the robustness grid.

Reports are laid out as result tables: one AUC per (dataset,
condition, regime), with average rows for the perturbation and JPEG groups.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .attacks import AttackConfig, blackbox_transfer, pgd_attack
from .dataprep import DEFAULT_SPAN, DatasetIndex, sample_frames
from .errors import EmptyVideo, InvalidParams, SingleClassInput
from .jpeg import CANONICAL_QUALITIES
from .perturbations import DISPLAY_NAMES, JpegSpec, apply_perturbation, jpeg_roundtrip, spec_by_name

logger = logging.getLogger(__name__)

PERTURBATION_CONDITIONS = list(DISPLAY_NAMES.values())
JPEG_CONDITIONS = [JpegSpec(q).name for q in CANONICAL_QUALITIES]
ATTACK_CONDITIONS = ["Black-box", "White-box"]
ALL_CONDITIONS = PERTURBATION_CONDITIONS + JPEG_CONDITIONS + ATTACK_CONDITIONS
GROUPS = {"perturbations": PERTURBATION_CONDITIONS, "jpeg": JPEG_CONDITIONS, "attacks": ATTACK_CONDITIONS}
AVERAGE_ROWS = {"perturbations": "Average (perturbations)", "jpeg": "Average (JPEG)"}


def roc_auc(scored: Sequence[tuple[float, int]]) -> float:
    """Probability that a random fake outscores a random real, ties counted 1/2."""
    if len(scored) == 0:
        raise SingleClassInput("no samples")
    scores = np.asarray([s for s, _ in scored], dtype=np.float64)
    labels = np.asarray([int(l) for _, l in scored])
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassInput("AUC needs at least one real and one fake sample")
    if n_pos + n_neg != len(labels):
        raise ValueError("labels must be 0 or 1")
    ranks = rankdata(scores)  # average ranks implement the half-credit tie rule
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class ScoredFrame:
    video_id: str
    frame_idx: int
    score: float
    label: int


def video_scores(frames: Sequence[ScoredFrame], span: int = DEFAULT_SPAN) -> list[tuple[str, float, int]]:
    """Mean score over the first ``span`` frames of each video, in first-seen order."""
    if not frames:
        raise EmptyVideo("no frames to aggregate")
    groups: OrderedDict[str, list[ScoredFrame]] = OrderedDict()
    for f in frames:
        if not np.isfinite(f.score):
            raise ValueError(f"non-finite score for {f.video_id}/{f.frame_idx}")
        groups.setdefault(f.video_id, []).append(f)
    out = []
    for vid, fs in groups.items():
        fs = sorted(fs, key=lambda f: f.frame_idx)[:span]
        labels = {f.label for f in fs}
        if len(labels) != 1:
            raise ValueError(f"video {vid} mixes labels")
        out.append((vid, float(np.mean([f.score for f in fs])), labels.pop()))
    return out


def resolve_conditions(conditions) -> list[str]:
    """Expand group aliases (``perturbations``, ``jpeg``, ``attacks``, ``all``)
    and validate condition names; order follows the canonical menu."""
    if isinstance(conditions, str):
        conditions = [c.strip() for c in conditions.split(",") if c.strip()]
    wanted = []
    for c in conditions:
        key = c.lower()
        if key == "all":
            wanted += ALL_CONDITIONS
        elif key in GROUPS:
            wanted += GROUPS[key]
        elif c in ALL_CONDITIONS:
            wanted.append(c)
        else:
            try:
                wanted.append(spec_by_name(c).name)
            except InvalidParams:
                raise InvalidParams(f"unknown condition {c!r}") from None
    return [c for c in ALL_CONDITIONS if c in set(wanted)]


def group_of(condition: str) -> str:
    for g, names in GROUPS.items():
        if condition in names:
            return g
    raise InvalidParams(condition)


@dataclass(frozen=True)
class ReportRow:
    dataset: str
    condition: str
    regime: str
    auc: float


@dataclass
class EvalReport:
    rows: list[ReportRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def auc(self, condition: str, regime: str, dataset: str | None = None) -> float:
        for r in self.rows:
            if r.condition == condition and r.regime == regime and (dataset is None or r.dataset == dataset):
                return r.auc
        raise KeyError((dataset, condition, regime))

    def data_rows(self) -> list[ReportRow]:
        return [r for r in self.rows if r.condition not in AVERAGE_ROWS.values()]

    def merge(self, other: "EvalReport") -> "EvalReport":
        meta = dict(self.metadata)
        meta.setdefault("merged", []).append(other.metadata)
        return EvalReport(self.rows + other.rows, meta)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["dataset", "condition", "regime", "auc"])
        for r in self.rows:
            writer.writerow([r.dataset, r.condition, r.regime, f"{r.auc:.6f}"])
        return buf.getvalue()

    def to_markdown(self) -> str:
        """One table per condition group: conditions down, (dataset, regime) across."""
        datasets = list(dict.fromkeys(r.dataset for r in self.rows))
        regimes = list(dict.fromkeys(r.regime for r in self.rows))
        lookup = {(r.dataset, r.condition, r.regime): r.auc for r in self.rows}
        present = {r.condition for r in self.rows}
        titles = {"perturbations": "Perturbation", "jpeg": "JPEG Compression", "attacks": "Adversarial Attacks"}
        parts = []
        for group, names in GROUPS.items():
            conds = [c for c in names if c in present]
            if not conds:
                continue
            if group in AVERAGE_ROWS and AVERAGE_ROWS[group] in present:
                conds.append(AVERAGE_ROWS[group])
            header = [titles[group]] + [f"{d} {g}" for d in datasets for g in regimes]
            lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
            for c in conds:
                cells = [c.replace("JPEG ", "") if group == "jpeg" else c]
                for d in datasets:
                    vals = [lookup.get((d, c, g)) for g in regimes]
                    best = max((v for v in vals if v is not None), default=None)
                    for v in vals:
                        if v is None:
                            cells.append("")
                        else:
                            cells.append(f"**{v:.3f}**" if v == best else f"{v:.3f}")
                lines.append("| " + " | ".join(cells) + " |")
            parts.append("\n".join(lines))
        return "\n\n".join(parts) + "\n"

    def write(self, out_dir, stem: str = "report") -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, md_path = out / f"{stem}.csv", out / f"{stem}.md"
        csv_path.write_text(self.to_csv())
        md_path.write_text(self.to_markdown())
        (out / f"{stem}.meta.json").write_text(json.dumps(self.metadata, indent=2, sort_keys=True, default=str) + "\n")
        return csv_path, md_path


def _corrupt(condition: str, crops, seed: int) -> list[np.ndarray]:
    group = group_of(condition)
    if group == "jpeg":
        q = int(condition.split()[-1])
        return [jpeg_roundtrip(c.image, q) for c in crops]
    spec = spec_by_name(condition)
    # one pinned draw per frame, shared by every model
    return [apply_perturbation(c.image, spec.with_stream(seed, "eval", condition, c.video_id, c.frame_idx))
            for c in crops]


def _video_auc(model_scores: np.ndarray, crops, span: int) -> float:
    frames = [ScoredFrame(c.video_id, c.frame_idx, float(s), c.label) for c, s in zip(crops, model_scores)]
    return roc_auc([(s, l) for _, s, l in video_scores(frames, span)])


def robustness_grid(
    models,
    index: DatasetIndex,
    conditions=("all",),
    *,
    dataset_name: str | None = None,
    span: int = DEFAULT_SPAN,
    surrogate=None,
    attack_config: AttackConfig = AttackConfig(),
    seed: int = 0,
    names: Sequence[str] | None = None,
) -> EvalReport:
    """Evaluate every model under every condition at video level.

    Each video contributes its first ``span`` frames. Perturbed inputs are
    drawn once per frame and shared by all models; white-box attacks target
    each model itself, black-box attacks are crafted once on ``surrogate``.
    Both classes are attacked toward the wrong label.
    """
    conds = resolve_conditions(conditions)
    if not models:
        raise ValueError("no models to evaluate")
    if "Black-box" in conds and surrogate is None:
        raise InvalidParams("the Black-box condition needs a surrogate model")
    names = list(names) if names is not None else [m.regime.value for m in models]
    if len(set(names)) != len(names):
        raise ValueError(f"model names must be unique: {names}")
    dataset_name = dataset_name or index.name
    size = models[0].input_size
    if any(m.input_size != size for m in models):
        raise ValueError("all models must share one input size")

    crops = []
    for vid in index.video_ids():
        crops.extend(sample_frames(index, vid, span, crop_size=size).crops)
    labels = [c.label for c in crops]
    keys = [f"{c.video_id}/{c.frame_idx}" for c in crops]

    rows = []
    for cond in conds:
        group = group_of(cond)
        if group == "attacks":
            cfg = AttackConfig(attack_config.epsilon, attack_config.alpha, attack_config.steps,
                               attack_config.random_start, seed)
            shared = None
            if cond == "Black-box":
                shared = _batched(lambda ims, lbs, ks: blackbox_transfer(surrogate, models[0], ims, lbs, cfg, keys=ks),
                                  [c.image for c in crops], labels, keys)
            for name, m in zip(names, models):
                adv = shared if shared is not None else _batched(
                    lambda ims, lbs, ks: pgd_attack(m, ims, lbs, cfg, keys=ks), [c.image for c in crops], labels, keys)
                rows.append(ReportRow(dataset_name, cond, name, _video_auc(m.scores(adv), crops, span)))
        else:
            images = _corrupt(cond, crops, seed)
            for name, m in zip(names, models):
                rows.append(ReportRow(dataset_name, cond, name, _video_auc(m.scores(images), crops, span)))
        logger.info("%s: %s", cond, ", ".join(f"{r.regime}={r.auc:.3f}" for r in rows[-len(models):]))

    for group, avg_name in AVERAGE_ROWS.items():
        members = [c for c in conds if c in GROUPS[group]]
        if not members:
            continue
        for name in names:
            vals = [r.auc for r in rows if r.regime == name and r.condition in members]
            rows.append(ReportRow(dataset_name, avg_name, name, float(np.mean(vals))))

    metadata = {
        "dataset": dataset_name,
        "seed": seed,
        "span": span,
        "models": [{"name": n, "regime": m.regime.value, "checksum": m.checksum} for n, m in zip(names, models)],
        "surrogate": None if surrogate is None else surrogate.checksum,
        "attack": {"epsilon": attack_config.epsilon, "alpha": attack_config.alpha,
                   "steps": attack_config.steps, "random_start": attack_config.random_start},
        "conditions": {c: _condition_params(c) for c in conds},
    }
    return EvalReport(rows, metadata)


def _batched(fn, images, labels, keys, size: int = 64):
    out = []
    for i in range(0, len(images), size):
        out.extend(fn(images[i : i + size], labels[i : i + size], keys[i : i + size]))
    return out


def _condition_params(condition: str):
    group = group_of(condition)
    if group == "jpeg":
        return {"quality": int(condition.split()[-1])}
    if group == "perturbations":
        spec = spec_by_name(condition)
        return {"kind": spec.kind.value, "params": {k: list(v) if isinstance(v, tuple) else v
                                                     for k, v in spec.params.items()}}
    return {}
