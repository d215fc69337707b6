"""Autoencoder pool: architecture grammar, MAE-band training, persistence
and the fingerprint chain.

Each member is a deliberately weak autoencoder. Training stops at the first
epoch whose validation MAE drops below the member's threshold ``T`` (drawn
from ``[0.03, 0.25]``), so every reconstruction keeps a residual,
architecture-specific trace. Passing an image through a chain of members
accumulates those traces.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from itertools import product
from pathlib import Path

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .errors import DivergedTraining, IOFailure, PoolExhausted, ShapeMismatch, UnknownMember
from .imaging import as_image, clamp, quality_stats, QualityStats
from .nn_utils import deterministic_torch, state_checksum, to_images, to_tensor
from .rng import derive_seed, substream

logger = logging.getLogger(__name__)

MAX_EPOCHS = 50
T_RANGE = (0.03, 0.25)
ACCEPT_BAND = (0.001, 0.30)
DEPTHS = (6, 8, 10, 12)
KERNELS = (3, 5, 7)
MAX_DOWNSAMPLES = 4
MANIFEST_NAME = "manifest.json"


class Family(str, Enum):
    ConvAE = "ConvAE"
    UNet = "UNet"


class Upsampling(str, Enum):
    Nearest = "Nearest"
    Bilinear = "Bilinear"
    Bicubic = "Bicubic"
    ConvTranspose = "ConvTranspose"


class Loss(str, Enum):
    MAE = "MAE"
    MSE = "MSE"


_UPSAMPLE_COST = {u: i for i, u in enumerate(Upsampling)}
_LOSS_COST = {Loss.MAE: 0, Loss.MSE: 1}
_FAMILY_ORDER = {Family.ConvAE: 0, Family.UNet: 1}


@dataclass(frozen=True)
class AutoencoderConfig:
    family: Family
    depth: int
    kernel: int
    upsampling: Upsampling
    loss: Loss
    threshold_T: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "upsampling", Upsampling(self.upsampling))
        object.__setattr__(self, "loss", Loss(self.loss))
        if self.depth not in DEPTHS:
            raise ValueError(f"depth must be one of {DEPTHS}")
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        if not T_RANGE[0] <= self.threshold_T <= T_RANGE[1]:
            raise ValueError(f"threshold_T must lie in {T_RANGE}")

    @property
    def complexity_key(self) -> tuple:
        return (
            self.depth,
            self.kernel,
            _UPSAMPLE_COST[self.upsampling],
            _LOSS_COST[self.loss],
            _FAMILY_ORDER[self.family],
        )

    @property
    def tag(self) -> str:
        return f"{self.family.value}-d{self.depth}-k{self.kernel}-{self.upsampling.value}-{self.loss.value}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(family=self.family.value, upsampling=self.upsampling.value, loss=self.loss.value)
        return d


def grammar_size() -> int:
    return len(Family) * len(DEPTHS) * len(KERNELS) * len(Upsampling) * len(Loss)


def enumerate_configs(limit: int, seed: int = 0) -> list[AutoencoderConfig]:
    """The first ``limit`` grammar points in order of increasing complexity.

    Each config gets ``threshold_T`` and a training seed from a substream
    keyed by its grammar position, so a config's draws do not depend on
    ``limit``.
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    combos = sorted(
        product(Family, DEPTHS, KERNELS, Upsampling, Loss),
        key=lambda c: (c[1], c[2], _UPSAMPLE_COST[c[3]], _LOSS_COST[c[4]], _FAMILY_ORDER[c[0]]),
    )
    out = []
    for fam, depth, kernel, up, loss in combos[:limit]:
        rng = substream(seed, "ae-config", fam.value, depth, kernel, up.value, loss.value)
        t = float(rng.uniform(*T_RANGE))
        out.append(AutoencoderConfig(fam, depth, kernel, up, loss, t, int(rng.integers(0, 2**31 - 1))))
    return out


# --- networks ---------------------------------------------------------------


def _width(level: int) -> int:
    return min(128, 16 * 2**level)


class _UpLayer(nn.Module):
    def __init__(self, cin: int, cout: int, kernel: int, mode: Upsampling):
        super().__init__()
        self.mode = mode
        pad = kernel // 2
        if mode is Upsampling.ConvTranspose:
            self.conv = nn.ConvTranspose2d(cin, cout, kernel, stride=2, padding=pad, output_padding=1)
        else:
            self.conv = nn.Conv2d(cin, cout, kernel, padding=pad)

    def forward(self, x):
        if self.mode is Upsampling.ConvTranspose:
            return self.conv(x)
        kwargs = {} if self.mode is Upsampling.Nearest else {"align_corners": False}
        x = F.interpolate(x, scale_factor=2, mode=self.mode.value.lower(), **kwargs)
        return self.conv(x)


class ReconstructionNet(nn.Module):
    """Symmetric encoder/decoder with ``depth`` conv layers in total.

    The encoder's first ``min(depth/2, 4)`` convs downsample by stride 2
    (widths 16, 32, 64, 128); remaining encoder convs work at the
    bottleneck. The decoder mirrors it, ending in a 3-channel sigmoid. The
    UNet family concatenates the mirrored encoder activation after each
    upsampling step that has one.
    """

    def __init__(self, config: AutoencoderConfig):
        super().__init__()
        half = config.depth // 2
        k, pad = config.kernel, config.kernel // 2
        self.n_down = min(half, MAX_DOWNSAMPLES)
        self.unet = config.family is Family.UNet

        self.encoder = nn.ModuleList()
        cin = 3
        for i in range(half):
            level = min(i, self.n_down - 1)
            stride = 2 if i < self.n_down else 1
            self.encoder.append(nn.Conv2d(cin, _width(level), k, stride=stride, padding=pad))
            cin = _width(level)

        self.bottleneck = nn.ModuleList()
        for _ in range(half - self.n_down):
            self.bottleneck.append(nn.Conv2d(cin, cin, k, padding=pad))

        self.decoder = nn.ModuleList()
        for j in range(self.n_down):
            # j-th upsample lands at the resolution of encoder output n_down-2-j
            target = self.n_down - 2 - j
            cout = 3 if target < 0 else _width(target)
            self.decoder.append(_UpLayer(cin, cout, k, config.upsampling))
            cin = cout + (cout if self.unet and target >= 0 else 0)

    def forward(self, x):
        h, w = x.shape[-2:]
        m = 2**self.n_down
        ph, pw = (-h) % m, (-w) % m
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph), mode="replicate")
        skips = []
        for i, conv in enumerate(self.encoder):
            x = F.relu(conv(x))
            if i < self.n_down:
                skips.append(x)
        for conv in self.bottleneck:
            x = F.relu(conv(x))
        for j, up in enumerate(self.decoder):
            x = up(x)
            target = self.n_down - 2 - j
            if target < 0:
                x = torch.sigmoid(x)
            else:
                x = F.relu(x)
                if self.unet:
                    x = torch.cat([x, skips[target]], dim=1)
        return x[..., :h, :w]


def build_network(config: AutoencoderConfig) -> ReconstructionNet:
    torch.manual_seed(derive_seed(config.seed, "ae-init"))
    return ReconstructionNet(config)


# --- training ---------------------------------------------------------------


@dataclass
class TrainedAutoencoder:
    config: AutoencoderConfig
    checksum: str
    epochs_run: int
    heldout_mae: float
    accepted: bool
    history: list[float] = field(default_factory=list)
    checkpoint: str | None = None
    network: ReconstructionNet | None = field(default=None, repr=False, compare=False)

    def reconstruct(self, image) -> np.ndarray:
        """One pass through the network; output clamped to [0, 1]."""
        if self.network is None:
            raise UnknownMember("member has no loaded network")
        img = as_image(image)
        self.network.eval()
        with torch.no_grad():
            out = self.network(to_tensor([img]))
        return clamp(out[0].numpy().astype(np.float64).transpose(1, 2, 0))

    def metadata(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "checksum": self.checksum,
            "epochs_run": self.epochs_run,
            "heldout_mae": self.heldout_mae,
            "accepted": self.accepted,
            "history": self.history,
            "checkpoint": self.checkpoint,
        }


def _check_images(images, what: str, minimum: int) -> torch.Tensor:
    if len(images) < minimum:
        raise ValueError(f"need at least {minimum} {what} images, got {len(images)}")
    shapes = {np.shape(im) for im in images}
    if len(shapes) != 1:
        raise ShapeMismatch(f"{what} images have mixed shapes {sorted(shapes)}")
    return to_tensor([as_image(im) for im in images])


def _val_mae(net: nn.Module, data: torch.Tensor, batch_size: int) -> float:
    net.eval()
    total = 0.0
    with torch.no_grad():
        for i in range(0, len(data), batch_size):
            xb = data[i : i + batch_size]
            total += float(torch.abs(net(xb) - xb).sum())
    return total / data.numel()


def train_autoencoder(
    config: AutoencoderConfig,
    train_images,
    val_images,
    *,
    max_epochs: int = MAX_EPOCHS,
    batch_size: int = 32,
    lr: float = 1e-3,
    min_steps_per_epoch: int = 100,
) -> TrainedAutoencoder:
    """Train one reconstruction network under the MAE-band stop rule.

    After every epoch the validation MAE is measured; training stops at the
    first epoch where it falls below ``config.threshold_T`` or after
    ``max_epochs`` (capped at 50). The member is accepted iff the final
    validation MAE lies in ``(0.001, 0.30)``.

    An epoch is one shuffled pass over ``train_images``, repeated (with a
    fresh shuffle) until at least ``min_steps_per_epoch`` minibatches have
    run. Small desk-scale sets would otherwise stop after a handful of
    updates with reconstructions that carry no image content.
    """
    max_epochs = min(int(max_epochs), MAX_EPOCHS)
    train = _check_images(train_images, "train", 8)
    val = _check_images(val_images, "validation", 4)
    if train.shape[1:] != val.shape[1:]:
        raise ShapeMismatch("train and validation images differ in shape")

    deterministic_torch()
    net = build_network(config)
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    loss_fn = nn.L1Loss() if config.loss is Loss.MAE else nn.MSELoss()
    gen = torch.Generator().manual_seed(derive_seed(config.seed, "ae-shuffle"))

    history: list[float] = []
    for epoch in range(1, max_epochs + 1):
        net.train()
        steps = 0
        while steps < max(1, min_steps_per_epoch):
            perm = torch.randperm(len(train), generator=gen)
            for i in range(0, len(train), batch_size):
                xb = train[perm[i : i + batch_size]]
                opt.zero_grad()
                loss = loss_fn(net(xb), xb)
                if not torch.isfinite(loss):
                    raise DivergedTraining(f"{config.tag}: non-finite loss at epoch {epoch}")
                loss.backward()
                opt.step()
                steps += 1
        val_mae = _val_mae(net, val, batch_size)
        if not math.isfinite(val_mae):
            raise DivergedTraining(f"{config.tag}: non-finite validation MAE at epoch {epoch}")
        history.append(val_mae)
        if val_mae < config.threshold_T:
            break

    heldout = history[-1]
    accepted = ACCEPT_BAND[0] < heldout < ACCEPT_BAND[1]
    net.eval()
    logger.info("%s: %d epochs, heldout MAE %.4f, %s", config.tag, len(history), heldout,
                "accepted" if accepted else "rejected")
    return TrainedAutoencoder(config, state_checksum(net), len(history), heldout, accepted, history, network=net)


# --- pool -------------------------------------------------------------------


@dataclass
class PoolManifest:
    members: list[TrainedAutoencoder]
    global_seed: int = 0
    build_timestamp: str = ""
    rejected: list[dict] = field(default_factory=list)

    @property
    def pool_size(self) -> int:
        return len(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __getitem__(self, i: int) -> TrainedAutoencoder:
        return self.members[i]

    def family_counts(self) -> dict[str, int]:
        counts = {f.value: 0 for f in Family}
        for m in self.members:
            counts[m.config.family.value] += 1
        return counts

    def to_dict(self, *, include_timestamp: bool = True) -> dict:
        d = {
            "pool_size": self.pool_size,
            "global_seed": self.global_seed,
            "members": [m.metadata() for m in self.members],
            "rejected": self.rejected,
        }
        if include_timestamp:
            d["build_timestamp"] = self.build_timestamp
        return d

    def save(self, out_dir) -> Path:
        """Write ``manifest.json`` and one checkpoint per member under ``out_dir``."""
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            for i, m in enumerate(self.members):
                name = f"member_{i:03d}.pt"
                torch.save(m.network.state_dict(), out / name)
                m.checkpoint = name
            path = out / MANIFEST_NAME
            path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise IOFailure(f"cannot write pool to {out}: {exc}") from exc
        return path


MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["pool_size", "global_seed", "members", "build_timestamp"],
    "properties": {
        "pool_size": {"type": "integer", "minimum": 0},
        "global_seed": {"type": "integer"},
        "build_timestamp": {"type": "string"},
        "rejected": {"type": "array"},
        "members": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["config", "checksum", "epochs_run", "heldout_mae", "accepted", "checkpoint"],
                "properties": {
                    "epochs_run": {"type": "integer", "minimum": 1, "maximum": MAX_EPOCHS},
                    "heldout_mae": {"type": "number", "exclusiveMinimum": ACCEPT_BAND[0],
                                    "exclusiveMaximum": ACCEPT_BAND[1]},
                    "accepted": {"const": True},
                    "checksum": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
                    "checkpoint": {"type": "string"},
                    "config": {
                        "type": "object",
                        "required": ["family", "depth", "kernel", "upsampling", "loss", "threshold_T", "seed"],
                        "properties": {
                            "family": {"enum": [f.value for f in Family]},
                            "depth": {"enum": list(DEPTHS)},
                            "kernel": {"enum": list(KERNELS)},
                            "upsampling": {"enum": [u.value for u in Upsampling]},
                            "loss": {"enum": [l.value for l in Loss]},
                            "threshold_T": {"type": "number", "minimum": T_RANGE[0], "maximum": T_RANGE[1]},
                            "seed": {"type": "integer"},
                        },
                    },
                },
            },
        },
    },
}


def load_pool(path) -> PoolManifest:
    """Load a pool from a manifest file or its directory, verifying checksums."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME if path.is_dir() else path
    try:
        doc = json.loads(manifest_path.read_text())
    except (OSError, ValueError) as exc:
        raise IOFailure(f"cannot read pool manifest {manifest_path}: {exc}") from exc
    members = []
    for meta in doc["members"]:
        config = AutoencoderConfig(**meta["config"])
        net = ReconstructionNet(config)
        state = torch.load(manifest_path.parent / meta["checkpoint"], map_location="cpu", weights_only=True)
        net.load_state_dict(state)
        net.eval()
        if state_checksum(net) != meta["checksum"]:
            raise IOFailure(f"checksum mismatch for {meta['checkpoint']}")
        members.append(TrainedAutoencoder(
            config, meta["checksum"], meta["epochs_run"], meta["heldout_mae"], meta["accepted"],
            list(meta.get("history", [])), meta["checkpoint"], net,
        ))
    return PoolManifest(members, doc["global_seed"], doc.get("build_timestamp", ""), doc.get("rejected", []))


def build_pool(
    pool_size: int,
    train_images,
    val_images,
    seed: int = 0,
    *,
    out_dir=None,
    max_epochs: int = MAX_EPOCHS,
    batch_size: int = 32,
    lr: float = 1e-3,
    min_steps_per_epoch: int = 100,
) -> PoolManifest:
    """Train grammar points in complexity order until ``pool_size`` members
    are accepted, keeping the two families within one of each other.

    Raises:
        PoolExhausted: the grammar ran out first.
    """
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    quota = {Family.ConvAE: math.ceil(pool_size / 2), Family.UNet: math.ceil(pool_size / 2)}
    if pool_size % 2:
        # the family that comes first in the ordering takes the odd slot
        quota[Family.UNet] -= 1
    counts = {f: 0 for f in Family}
    members: list[TrainedAutoencoder] = []
    rejected: list[dict] = []
    for config in enumerate_configs(grammar_size(), seed):
        if len(members) == pool_size:
            break
        if counts[config.family] >= quota[config.family]:
            continue
        trained = train_autoencoder(config, train_images, val_images,
                                    max_epochs=max_epochs, batch_size=batch_size, lr=lr,
                                    min_steps_per_epoch=min_steps_per_epoch)
        if trained.accepted:
            members.append(trained)
            counts[config.family] += 1
        else:
            logger.warning("rejected %s (heldout MAE %.4f)", config.tag, trained.heldout_mae)
            rejected.append(trained.metadata())
    if len(members) < pool_size:
        raise PoolExhausted(f"grammar exhausted with {len(members)}/{pool_size} accepted members")
    pool = PoolManifest(members, seed, time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()), rejected)
    if out_dir is not None:
        pool.save(out_dir)
    return pool


# --- chains -----------------------------------------------------------------


class Selection(str, Enum):
    Explicit = "Explicit"
    FullSet = "FullSet"
    RandomSubset = "RandomSubset"


@dataclass(frozen=True)
class ChainSpec:
    """Which pool members to apply, in order.

    ``Explicit`` uses ``member_indices`` as given; ``FullSet`` applies every
    member in pool order; ``RandomSubset`` draws a length uniformly from
    ``1..max_len`` and that many distinct members, from the substream
    ``seed_stream``.
    """

    member_indices: tuple[int, ...] = ()
    selection: Selection = Selection.Explicit
    max_len: int = 3
    seed_stream: tuple = (0,)

    @classmethod
    def of(cls, *indices: int) -> "ChainSpec":
        return cls(tuple(int(i) for i in indices))

    @classmethod
    def full(cls) -> "ChainSpec":
        return cls(selection=Selection.FullSet)

    @classmethod
    def random(cls, max_len: int = 3, *seed_stream) -> "ChainSpec":
        return cls(selection=Selection.RandomSubset, max_len=max_len, seed_stream=tuple(seed_stream) or (0,))

    def resolve(self, pool_size: int) -> tuple[int, ...]:
        sel = Selection(self.selection)
        if sel is Selection.FullSet:
            return tuple(range(pool_size))
        if sel is Selection.RandomSubset:
            if pool_size == 0:
                raise UnknownMember("cannot sample from an empty pool")
            rng = substream("chain", *self.seed_stream)
            length = int(rng.integers(1, min(self.max_len, pool_size) + 1))
            return tuple(int(i) for i in rng.choice(pool_size, size=length, replace=False))
        idx = tuple(self.member_indices)
        if len(set(idx)) != len(idx):
            raise UnknownMember(f"chain indices must be distinct: {idx}")
        for i in idx:
            if not 0 <= i < pool_size:
                raise UnknownMember(f"member {i} not in pool of size {pool_size}")
        return idx


def chain_apply(image, pool: PoolManifest, chain: ChainSpec) -> np.ndarray:
    """Pass ``image`` through the chain's members in order."""
    out = as_image(image).copy()
    for i in chain.resolve(len(pool)):
        out = pool[i].reconstruct(out)
    return out


def fingerprint_residual(image, pool: PoolManifest, chain: ChainSpec) -> QualityStats:
    return quality_stats(as_image(image), chain_apply(image, pool, chain))
