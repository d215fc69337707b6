"""Experiment configuration (YAML) shared by every CLI subcommand."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .attacks import AttackConfig
from .detector import Regime, TrainConfig
from .errors import ConfigError
from .evaluation import resolve_conditions
from .errors import InvalidParams
from .synthdata import SynthConfig

SEED_ENV = "FFORGE_SEED"


@dataclass
class DatasetSource:
    """Either an existing dataset root (``path``) or synthesis parameters."""

    path: str | None = None
    name: str | None = None
    synth: dict = field(default_factory=dict)
    seed_offset: int = 0


@dataclass
class PoolSettings:
    size: int = 8
    max_epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    min_steps_per_epoch: int = 100
    path: str | None = None


@dataclass
class RunConfig:
    seed: int
    output_dir: str
    crop_size: int = 64
    dataset: DatasetSource = field(default_factory=DatasetSource)
    test_dataset: DatasetSource = field(default_factory=lambda: DatasetSource(seed_offset=1))
    pool: PoolSettings = field(default_factory=PoolSettings)
    train: dict = field(default_factory=dict)
    regimes: dict = field(default_factory=dict)
    attack: dict = field(default_factory=dict)
    surrogate_width: int = 8
    conditions: list = field(default_factory=lambda: ["all"])
    span: int = 16
    workers: int = 1
    source: str | None = None

    # derived locations
    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    @property
    def train_data_dir(self) -> Path:
        return Path(self.dataset.path) if self.dataset.path else self.out / "data" / "train"

    @property
    def test_data_dir(self) -> Path:
        return Path(self.test_dataset.path) if self.test_dataset.path else self.out / "data" / "test"

    @property
    def pool_dir(self) -> Path:
        return Path(self.pool.path) if self.pool.path else self.out / "pool"

    @property
    def models_dir(self) -> Path:
        return self.out / "models"

    @property
    def reports_dir(self) -> Path:
        return self.out / "reports"

    def synth_config(self, which: str = "train") -> SynthConfig:
        src = self.dataset if which == "train" else self.test_dataset
        params = {"image_size": self.crop_size, **src.synth}
        return SynthConfig(seed=self.seed + src.seed_offset, **params)

    def train_config(self, regime: Regime | str) -> TrainConfig:
        regime = Regime(regime)
        params = {"input_size": self.crop_size, **self.train, **self.regimes.get(regime.value, {})}
        params.setdefault("seed", self.seed)
        return TrainConfig(**params)

    def surrogate_config(self) -> TrainConfig:
        params = {"input_size": self.crop_size, **self.train, "width": self.surrogate_width}
        params["seed"] = self.seed + 1000
        return TrainConfig(**params)

    def attack_config(self) -> AttackConfig:
        return AttackConfig(seed=self.seed, **self.attack)


def _build(cls, raw, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**raw)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read and fully validate a YAML run configuration.

    ``overrides`` (from CLI flags) replace top-level keys; the ``FFORGE_SEED``
    environment variable replaces ``seed``.
    """
    try:
        raw = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if SEED_ENV in os.environ:
        try:
            raw["seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    if "seed" not in raw:
        raise ConfigError("config must set 'seed'")
    if "output_dir" not in raw:
        raise ConfigError("config must set 'output_dir'")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    base = Path(path).resolve().parent
    cfg = RunConfig(
        seed=int(raw["seed"]),
        output_dir=str((base / raw["output_dir"]).resolve()),
        crop_size=int(raw.get("crop_size", 64)),
        dataset=_build(DatasetSource, raw.get("dataset"), "dataset"),
        test_dataset=_build(DatasetSource, raw.get("test_dataset") or {"seed_offset": 1}, "test_dataset"),
        pool=_build(PoolSettings, raw.get("pool"), "pool"),
        train=dict(raw.get("train") or {}),
        regimes=dict(raw.get("regimes") or {}),
        attack=dict(raw.get("attack") or {}),
        surrogate_width=int(raw.get("surrogate_width", 8)),
        conditions=list(raw.get("conditions") or ["all"]),
        span=int(raw.get("span", 16)),
        workers=int(raw.get("workers", 1)),
        source=str(path),
    )
    for src in (cfg.dataset, cfg.test_dataset):
        if src.path is not None:
            src.path = str((base / src.path).resolve())
            if not Path(src.path).exists():
                raise ConfigError(f"dataset path does not exist: {src.path}")
    if cfg.pool.path is not None:
        cfg.pool.path = str((base / cfg.pool.path).resolve())
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Construct every derived config once so errors surface before side effects."""
    try:
        cfg.synth_config("train")
        cfg.synth_config("test")
        for regime in Regime:
            cfg.train_config(regime)
        cfg.surrogate_config()
        cfg.attack_config()
        resolve_conditions(cfg.conditions)
    except (TypeError, ValueError, InvalidParams) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    unknown_regimes = set(cfg.regimes) - {r.value for r in Regime}
    if unknown_regimes:
        raise ConfigError(f"unknown regimes in 'regimes': {sorted(unknown_regimes)}")
    if cfg.pool.size < 1 or cfg.span < 1 or cfg.workers < 1:
        raise ConfigError("pool.size, span and workers must be >= 1")
