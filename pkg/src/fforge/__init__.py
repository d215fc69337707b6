"""Autoencoder-fingerprint augmentation and robustness evaluation for deepfake detectors."""

from .aepool import AutoencoderConfig, ChainSpec, PoolManifest, build_pool, chain_apply, load_pool
from .attacks import AttackConfig, blackbox_transfer, pgd_whitebox
from .detector import DetectorModel, Regime, TrainConfig, augment_batch, train_detector
from .evaluation import EvalReport, robustness_grid, roc_auc
from .perturbations import Kind, apply_perturbation, jpeg_roundtrip, perturbation_menu
from .synthdata import SynthConfig, build_synth_dataset

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "AutoencoderConfig", "ChainSpec", "DetectorModel", "EvalReport", "Kind",
    "PoolManifest", "Regime", "SynthConfig", "TrainConfig", "apply_perturbation", "augment_batch",
    "blackbox_transfer", "build_pool", "build_synth_dataset", "chain_apply", "jpeg_roundtrip",
    "load_pool", "perturbation_menu", "pgd_whitebox", "robustness_grid", "roc_auc", "train_detector",
]
