"""Binary deepfake scorer and its four training regimes.

``BL`` trains on clean crops. ``CA`` adds classic perturbations and JPEG.
``EA`` passes samples through random autoencoder chains from the pool.
``EA+CA`` runs the chain first and the classic perturbations afterwards.
Scores are logits: higher means more likely fake.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .aepool import ChainSpec, PoolManifest, chain_apply
from .dataprep import FAKE, REAL, DatasetIndex, FaceCrop, load_crop
from .errors import DivergedTraining, IOFailure, MissingPool, NoGradientCapability, ShapeMismatch
from .imaging import as_image
from .jpeg import CANONICAL_QUALITIES
from .nn_utils import deterministic_torch, state_checksum, to_tensor
from .perturbations import Kind, apply_perturbation, jpeg_roundtrip, make_spec
from .rng import derive_seed, substream

logger = logging.getLogger(__name__)


class Regime(str, Enum):
    BL = "BL"
    CA = "CA"
    EA = "EA"
    EA_CA = "EA+CA"

    @property
    def uses_pool(self) -> bool:
        return self in (Regime.EA, Regime.EA_CA)

    @property
    def uses_classic(self) -> bool:
        return self in (Regime.CA, Regime.EA_CA)


class LabelPolicy(str, Enum):
    Preserve = "Preserve"
    RelabelFake = "RelabelFake"


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    dropout: float = 0.25
    weight_decay: float = 3e-4
    max_epochs: int = 12
    batch_size: int = 32
    seed: int = 0
    ca_probability: float = 0.5
    jpeg_probability: float = 0.25
    ea_fraction: float = 0.5
    ea_label_policy: LabelPolicy = LabelPolicy.RelabelFake
    chain_max_len: int = 3
    patience: int = 5
    val_fraction: float = 0.25
    backbone: str = "CompactCNN"
    width: int = 16
    input_size: int = 64
    min_steps_per_epoch: int = 24

    def __post_init__(self):
        object.__setattr__(self, "ea_label_policy", LabelPolicy(self.ea_label_policy))
        for name in ("ca_probability", "jpeg_probability", "ea_fraction", "dropout"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.max_epochs < 1 or self.batch_size < 1 or self.chain_max_len < 1:
            raise ValueError("max_epochs, batch_size and chain_max_len must be >= 1")
        if self.min_steps_per_epoch < 0:
            raise ValueError("min_steps_per_epoch must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ea_label_policy"] = self.ea_label_policy.value
        return d


# --- backbones --------------------------------------------------------------


class CompactCNN(nn.Module):
    """Four conv stages, global average pool, dropout, one linear output."""

    def __init__(self, width: int = 16, dropout: float = 0.25):
        super().__init__()
        w = width
        chans = [(3, w, 1), (w, 2 * w, 2), (2 * w, 4 * w, 2), (4 * w, 4 * w, 2)]
        layers = []
        for cin, cout, stride in chans:
            layers += [nn.Conv2d(cin, cout, 3, stride=stride, padding=1), nn.BatchNorm2d(cout), nn.ReLU()]
        self.features = nn.Sequential(*layers)
        self.dropout = nn.Dropout(dropout)
        self.fc = nn.Linear(4 * w, 1)

    def forward(self, x):
        x = self.features((x - 0.5) / 0.25)
        x = x.mean(dim=(2, 3))
        return self.fc(self.dropout(x)).squeeze(1)


class LinearScorer(nn.Module):
    """``w . x + b`` over the flattened ``(3, H, W)`` image."""

    def __init__(self, weight: np.ndarray, bias: float = 0.0):
        super().__init__()
        w = np.asarray(weight, dtype=np.float64)
        if w.ndim == 3 and w.shape[2] == 3:
            w = w.transpose(2, 0, 1)
        self.weight = nn.Parameter(torch.from_numpy(np.ascontiguousarray(w)).float(), requires_grad=False)
        self.bias = nn.Parameter(torch.tensor(float(bias)), requires_grad=False)

    def forward(self, x):
        return (x * self.weight).flatten(1).sum(1) + self.bias


BACKBONES: dict[str, Callable[..., nn.Module]] = {
    "CompactCNN": lambda width=16, dropout=0.25, **_: CompactCNN(width, dropout),
}


def register_backbone(name: str, factory: Callable[..., nn.Module]) -> None:
    """Make ``factory(width=..., dropout=..., input_size=...)`` available as a backbone.

    The factory must return a module mapping ``(N, 3, H, W)`` images in
    ``[0, 1]`` to ``(N,)`` logits.
    """
    BACKBONES[name] = factory


# --- model ------------------------------------------------------------------


class DetectorModel:
    """A trained scorer plus its provenance.

    ``gradient_queries`` counts calls to :meth:`loss_gradient`, which lets
    black-box protocols prove the target was never differentiated.
    """

    def __init__(
        self,
        network: nn.Module,
        regime: Regime | str,
        input_size: int,
        *,
        backbone: str = "CompactCNN",
        train_config: dict | None = None,
        supports_gradients: bool = True,
        history: list[dict] | None = None,
    ):
        self.network = network.eval()
        self._regime = Regime(regime)
        self.input_size = int(input_size)
        self.backbone = backbone
        self.train_config = dict(train_config or {})
        self.supports_gradients = supports_gradients
        self.history = list(history or [])
        self.gradient_queries = 0
        self.checksum = state_checksum(network)

    @property
    def regime(self) -> Regime:
        return self._regime

    def _batch(self, images) -> torch.Tensor:
        imgs = [as_image(im) for im in images]
        for im in imgs:
            if im.shape[:2] != (self.input_size, self.input_size):
                raise ShapeMismatch(f"expected {self.input_size}x{self.input_size} input, got {im.shape[:2]}")
        return to_tensor(imgs)

    def scores(self, images, batch_size: int = 64) -> np.ndarray:
        """Logit scores for a sequence of images (deterministic, eval mode)."""
        self.network.eval()
        out = []
        with torch.no_grad():
            for i in range(0, len(images), batch_size):
                out.append(self.network(self._batch(images[i : i + batch_size])).double().numpy())
        res = np.concatenate(out) if out else np.zeros(0)
        if not np.all(np.isfinite(res)):
            raise DivergedTraining("non-finite detector score")
        return res

    def probabilities(self, images) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.scores(images)))

    def loss_gradient(self, images, labels) -> tuple[np.ndarray, np.ndarray]:
        """Per-image BCE loss for the given labels and its gradient w.r.t. the pixels.

        Returns ``(losses (N,), grads (N, H, W, 3))`` in float64.
        """
        if not self.supports_gradients:
            raise NoGradientCapability("this detector does not expose input gradients")
        self.gradient_queries += 1
        self.network.eval()
        x = self._batch(images).requires_grad_(True)
        y = torch.as_tensor(np.asarray(labels, dtype=np.float32))
        loss = F.binary_cross_entropy_with_logits(self.network(x), y, reduction="none")
        (grad,) = torch.autograd.grad(loss.sum(), x)
        return loss.detach().double().numpy(), grad.double().numpy().transpose(0, 2, 3, 1)

    def sidecar(self) -> dict:
        return {
            "regime": self.regime.value,
            "backbone": self.backbone,
            "input_size": self.input_size,
            "checksum": self.checksum,
            "train_config": self.train_config,
        }

    def save(self, path) -> Path:
        """Write ``<path>.pt`` (state dict) and ``<path>.json`` (sidecar)."""
        path = Path(path).with_suffix("")
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            torch.save(self.network.state_dict(), path.with_suffix(".pt"))
            path.with_suffix(".json").write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise IOFailure(f"cannot write detector checkpoint {path}: {exc}") from exc
        return path.with_suffix(".pt")


def make_network(backbone: str, width: int, dropout: float, input_size: int) -> nn.Module:
    try:
        factory = BACKBONES[backbone]
    except KeyError:
        raise ValueError(f"unknown backbone {backbone!r}; registered: {sorted(BACKBONES)}") from None
    return factory(width=width, dropout=dropout, input_size=input_size)


def load_detector(path) -> DetectorModel:
    path = Path(path).with_suffix("")
    try:
        meta = json.loads(path.with_suffix(".json").read_text())
        state = torch.load(path.with_suffix(".pt"), map_location="cpu", weights_only=True)
    except (OSError, ValueError) as exc:
        raise IOFailure(f"cannot read detector checkpoint {path}: {exc}") from exc
    tc = meta.get("train_config", {})
    net = make_network(meta["backbone"], tc.get("width", 16), tc.get("dropout", 0.25), meta["input_size"])
    net.load_state_dict(state)
    model = DetectorModel(net, meta["regime"], meta["input_size"], backbone=meta["backbone"], train_config=tc)
    if model.checksum != meta["checksum"]:
        raise IOFailure(f"checksum mismatch for {path}")
    return model


def predict_score(model: DetectorModel, image) -> float:
    return float(model.scores([image])[0])


# --- augmentation -----------------------------------------------------------

CLASSIC_KINDS = [k for k in Kind if k is not Kind.Identity]


def _sample_key(item, position: int) -> str:
    crop = item[0]
    if isinstance(crop, FaceCrop) and crop.video_id:
        return f"{crop.video_id}/{crop.frame_idx}"
    return f"#{position}"


def _image_of(item) -> np.ndarray:
    crop = item[0]
    return crop.image if isinstance(crop, FaceCrop) else np.asarray(crop, dtype=np.float64)


def classic_augment(image, config: TrainConfig, *keys, trace: dict | None = None) -> np.ndarray:
    """With probability ``ca_probability`` apply one random perturbation and,
    nested within that, a JPEG round trip with probability ``jpeg_probability``."""
    rng = substream(config.seed, "ca", *keys)
    if rng.random() >= config.ca_probability:
        return image
    kind = CLASSIC_KINDS[int(rng.integers(len(CLASSIC_KINDS)))]
    spec = make_spec(kind, seed_stream=(config.seed, "ca-draw", *keys))
    out = apply_perturbation(image, spec)
    quality = None
    if rng.random() < config.jpeg_probability:
        quality = int(CANONICAL_QUALITIES[int(rng.integers(len(CANONICAL_QUALITIES)))])
        out = jpeg_roundtrip(out, quality)
    if trace is not None:
        trace.update(perturbation=spec, jpeg_quality=quality)
    return out


def augment_batch(
    batch: Sequence[tuple],
    config: TrainConfig,
    regime: Regime | str,
    pool: PoolManifest | None = None,
    *,
    epoch: int = 0,
    batch_id: int = 0,
    trace: list | None = None,
) -> list[tuple[np.ndarray, int]]:
    """Augment ``(crop_or_image, label)`` pairs according to ``regime``.

    Random draws are keyed by ``(config.seed, epoch, sample identity)``, so
    different epochs see different draws of the same files. When ``trace``
    is a list it receives one dict per output sample describing what was
    applied (``source``, ``chain``, ``perturbation``, ``jpeg_quality``).
    """
    regime = Regime(regime)
    if not batch:
        raise ValueError("batch must be non-empty")
    if regime.uses_pool and (pool is None or len(pool) == 0):
        raise MissingPool(f"regime {regime.value} requires an autoencoder pool")

    keys = [_sample_key(item, i) for i, item in enumerate(batch)]
    samples = [(_image_of(item), int(item[1]), k, i, None) for i, (item, k) in enumerate(zip(batch, keys))]
    if regime is Regime.BL:
        if trace is not None:
            trace.extend({"source": i, "chain": None, "perturbation": None, "jpeg_quality": None}
                         for i in range(len(samples)))
        return [(img, label) for img, label, *_ in samples]

    if regime.uses_pool:
        rng = substream(config.seed, "ea-select", epoch, batch_id, *keys)
        policy = config.ea_label_policy
        eligible = [j for j, s in enumerate(samples) if policy is LabelPolicy.Preserve or s[1] == REAL]
        n_pick = int(round(config.ea_fraction * len(eligible)))
        picked = sorted(int(j) for j in rng.choice(eligible, size=n_pick, replace=False)) if n_pick else []
        chained = {}
        for j in picked:
            img, label, key, src, _ = samples[j]
            spec = ChainSpec.random(config.chain_max_len, config.seed, "ea-chain", epoch, key)
            chained[j] = (chain_apply(img, pool, spec), spec.resolve(len(pool)))
        out = []
        for j, s in enumerate(samples):
            if j in chained and policy is LabelPolicy.Preserve:
                out.append((chained[j][0], s[1], s[2] + "/ea", s[3], chained[j][1]))
            else:
                out.append(s)
        if policy is LabelPolicy.RelabelFake:
            for j in picked:
                s = samples[j]
                out.append((chained[j][0], FAKE, s[2] + "/ea", s[3], chained[j][1]))
        samples = out

    results = []
    for img, label, key, src, chain in samples:
        rec = {"source": src, "chain": chain, "perturbation": None, "jpeg_quality": None}
        if regime.uses_classic:
            img = classic_augment(img, config, epoch, key, trace=rec)
        results.append((img, label))
        if trace is not None:
            trace.append(rec)
    return results


# --- training ---------------------------------------------------------------


def split_videos(index: DatasetIndex, val_fraction: float, seed: int) -> tuple[list[str], list[str]]:
    """Per-class video split; returns ``(train_ids, val_ids)``, at least one
    validation video per class."""
    train_ids, val_ids = [], []
    for label in (REAL, FAKE):
        vids = sorted(v for v in index.video_ids() if index.video_label(v) == label)
        if not vids:
            raise ValueError(f"index has no videos with label {label}")
        n_val = max(1, int(round(val_fraction * len(vids)))) if len(vids) > 1 else 0
        order = substream(seed, "val-split", label).permutation(len(vids))
        val = {vids[i] for i in order[:n_val]}
        val_ids += [v for v in vids if v in val]
        train_ids += [v for v in vids if v not in val]
    return train_ids, val_ids


def load_crops(index: DatasetIndex, video_ids=None, crop_size: int = 64) -> list[FaceCrop]:
    keep = None if video_ids is None else set(video_ids)
    return [load_crop(index, e, crop_size) for e in index.entries if keep is None or e.video_id in keep]


def frame_auc(scores: np.ndarray, labels) -> float:
    from .evaluation import roc_auc

    return roc_auc(list(zip(scores.tolist(), labels)))


def train_detector(
    index: DatasetIndex,
    config: TrainConfig,
    regime: Regime | str,
    pool: PoolManifest | None = None,
    *,
    val_index: DatasetIndex | None = None,
    log_path=None,
) -> DetectorModel:
    """Train a detector on ``index`` under ``regime``.

    Minimises binary cross-entropy on freshly augmented minibatches each
    epoch; after every epoch the frame-level AUC on the validation split is
    measured (ties broken by lower validation loss) and the best weights are
    kept. Training stops after ``config.patience`` epochs without
    improvement. Without ``val_index``, whole videos are held out from
    ``index`` per class.
    """
    regime = Regime(regime)
    if regime.uses_pool and (pool is None or len(pool) == 0):
        raise MissingPool(f"regime {regime.value} requires an autoencoder pool")
    if set(index.labels) != {REAL, FAKE}:
        raise ValueError("training index must contain both classes")

    if val_index is None:
        train_ids, val_ids = split_videos(index, config.val_fraction, config.seed)
        train_crops = load_crops(index, train_ids, config.input_size)
        val_crops = load_crops(index, val_ids, config.input_size)
    else:
        overlap = set(index.video_ids()) & set(val_index.video_ids())
        if overlap:
            raise ValueError(f"validation videos overlap training: {sorted(overlap)[:3]}")
        train_crops = load_crops(index, None, config.input_size)
        val_crops = load_crops(val_index, None, config.input_size)
    return fit_detector(train_crops, val_crops, config, regime, pool, log_path=log_path)


def fit_detector(
    train_crops: Sequence[FaceCrop],
    val_crops: Sequence[FaceCrop],
    config: TrainConfig,
    regime: Regime | str,
    pool: PoolManifest | None = None,
    *,
    log_path=None,
) -> DetectorModel:
    """Training loop over in-memory crops (see :func:`train_detector`)."""
    regime = Regime(regime)
    if regime.uses_pool and (pool is None or len(pool) == 0):
        raise MissingPool(f"regime {regime.value} requires an autoencoder pool")
    deterministic_torch()
    torch.manual_seed(derive_seed(config.seed, "det-init", config.backbone, config.width))
    net = make_network(config.backbone, config.width, config.dropout, config.input_size)
    opt = torch.optim.Adam(net.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    torch.manual_seed(derive_seed(config.seed, "det-dropout", regime.value))

    val_x = to_tensor([c.image for c in val_crops])
    val_y = torch.tensor([float(c.label) for c in val_crops])
    items = [(c, c.label) for c in train_crops]

    best_key, best_state, stale = None, None, 0
    history = []
    for epoch in range(config.max_epochs):
        net.train()
        total, count, steps, rep = 0.0, 0, 0, 0
        while steps == 0 or steps < config.min_steps_per_epoch:
            # Each pass over the data gets its own shuffle and augmentation draws.
            draw = epoch * 1000 + rep
            order = substream(config.seed, "det-shuffle", epoch, rep).permutation(len(items))
            for b, start in enumerate(range(0, len(items), config.batch_size)):
                chunk = [items[i] for i in order[start : start + config.batch_size]]
                aug = augment_batch(chunk, config, regime, pool, epoch=draw, batch_id=b)
                x = to_tensor([img for img, _ in aug])
                y = torch.tensor([float(lbl) for _, lbl in aug])
                opt.zero_grad()
                loss = F.binary_cross_entropy_with_logits(net(x), y)
                if not torch.isfinite(loss):
                    raise DivergedTraining(f"non-finite detector loss at epoch {epoch}")
                loss.backward()
                opt.step()
                total += loss.item() * len(aug)
                count += len(aug)
                steps += 1
                if steps >= config.min_steps_per_epoch > 0:
                    break
            rep += 1

        net.eval()
        with torch.no_grad():
            logits = torch.cat([net(val_x[i : i + 64]) for i in range(0, len(val_x), 64)])
            val_loss = float(F.binary_cross_entropy_with_logits(logits, val_y))
        val_auc = frame_auc(logits.double().numpy(), val_y.numpy().astype(int).tolist())
        history.append({"epoch": epoch, "train_loss": total / count, "val_auc": val_auc, "val_loss": val_loss})
        logger.debug("%s epoch %d loss %.4f val_auc %.4f", regime.value, epoch, total / count, val_auc)

        key = (val_auc, -val_loss)
        if best_key is None or key > best_key:
            best_key, stale = key, 0
            best_state = {k: v.detach().clone() for k, v in net.state_dict().items()}
        else:
            stale += 1
            if stale >= config.patience:
                break

    net.load_state_dict(best_state)
    model = DetectorModel(net, regime, config.input_size, backbone=config.backbone,
                          train_config=config.to_dict(), history=history)
    if log_path is not None:
        write_training_log(log_path, history)
    return model


def write_training_log(path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_auc"])
        for row in history:
            writer.writerow([row["epoch"], f"{row['train_loss']:.6f}", f"{row['val_auc']:.6f}"])
