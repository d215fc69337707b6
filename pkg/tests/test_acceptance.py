"""Desk-scale acceptance suite.

Each test records one line in ``RESULTS``; ``conftest.py`` prints them at the
end of the session. The heavy fixtures (the CLI pipeline, run twice, and the
three-seed regime study) are shared across criteria.
"""

import json
import time

import numpy as np
import pytest
import yaml

from fforge.aepool import ChainSpec, chain_apply, load_pool
from fforge.attacks import AttackConfig, pgd_attack
from fforge.cli import main
from fforge.dataprep import ingest_index
from fforge.detector import DetectorModel, LinearScorer, Regime, TrainConfig, load_crops, load_detector, train_detector
from fforge.evaluation import PERTURBATION_CONDITIONS, robustness_grid, roc_auc
from fforge.imaging import psnr
from fforge.perturbations import jpeg_roundtrip
from fforge.rng import substream

RESULTS: dict[int, str] = {}
SEEDS = (0, 1, 2)
EPS = 8 / 255

DESK = {
    "seed": 0,
    "output_dir": "run",
    "crop_size": 64,
    "dataset": {"synth": {"n_videos_per_class": 8, "frames_per_video": 16}},
    "test_dataset": {"seed_offset": 1, "synth": {"n_videos_per_class": 8, "frames_per_video": 16}},
    "pool": {"size": 8},
}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def brute_auc(pairs):
    pos = [s for s, y in pairs if y == 1]
    neg = [s for s, y in pairs if y == 0]
    total = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return total / (len(pos) * len(neg))


def _pipeline(base):
    base.mkdir(parents=True, exist_ok=True)
    cfg = base / "desk.yaml"
    cfg.write_text(yaml.safe_dump(DESK))
    for argv in (["synth"], ["build-pool"], ["train", "--regime", "BL", "--surrogate"], ["evaluate"]):
        assert main([*argv, "--config", str(cfg)]) == 0, argv
    return base / "run"


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """synth -> build-pool -> train(BL) -> evaluate, twice with one seed."""
    root = tmp_path_factory.mktemp("acceptance")
    t0 = time.time()
    runs = [_pipeline(root / "first"), _pipeline(root / "second")]
    print(f"pipeline x2: {time.time() - t0:.0f}s")
    return runs


@pytest.fixture(scope="session")
def regime_study(pipeline):
    """Four regimes plus a surrogate per seed, evaluated on the full grid."""
    run = pipeline[0]
    train = ingest_index(run / "data" / "train")
    test = ingest_index(run / "data" / "test")
    pool = load_pool(run / "pool")
    reports = {}
    for seed in SEEDS:
        t0 = time.time()
        models = [train_detector(train, TrainConfig(seed=seed), r, pool if r.uses_pool else None) for r in Regime]
        surrogate = train_detector(train, TrainConfig(seed=seed + 1000, width=8), Regime.BL)
        reports[seed] = robustness_grid(models, test, ["all"], surrogate=surrogate, seed=seed,
                                        attack_config=AttackConfig(seed=seed))
        print(f"regime study seed {seed}: {time.time() - t0:.0f}s")
    return reports


def _mean_over(reports, conditions, regime):
    return float(np.mean([[r.auc(c, regime) for c in conditions] for r in reports.values()]))


def test_01_auc_oracle():
    rng = substream("acceptance", "auc")
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 51))
        labels = rng.integers(0, 2, size=n)
        labels[:2] = (0, 1)
        scores = np.round(rng.normal(size=n), 1)  # coarse rounding injects ties
        pairs = list(zip(scores.tolist(), labels.tolist()))
        worst = max(worst, abs(roc_auc(pairs) - brute_auc(pairs)))
    record(1, worst <= 1e-9, f"max |roc_auc - pair count| = {worst:.2e} (tol 1e-9)")
    assert worst <= 1e-9


def test_02_pgd_ball(pipeline):
    run = pipeline[0]
    model = load_detector(run / "models" / "BL.pt")
    crops = load_crops(ingest_index(run / "data" / "test"))[::5][:50]
    imgs = [c.image for c in crops]
    adv = pgd_attack(model, imgs, [c.label for c in crops], AttackConfig())
    dev = max(float(np.abs(a - x).max()) for a, x in zip(adv, imgs))
    violations = sum(int((np.abs(a - x) > EPS).sum()) for a, x in zip(adv, imgs))
    in_range = all(a.min() >= 0 and a.max() <= 1 for a in adv)
    ok = len(adv) == 50 and violations == 0 and in_range
    record(2, ok, f"50 images, max |out-in| = {dev:.10f} <= {EPS:.10f}, violations {violations}, in [0,1] {in_range}")
    assert ok


def test_03_linear_pgd_oracle():
    rng = substream("acceptance", "linear")
    w = rng.choice([-1.0, 1.0], size=(64, 64, 3)) * rng.uniform(0.01, 0.1, size=(64, 64, 3))
    model = DetectorModel(LinearScorer(w, 0.1), "BL", 64)
    worst = 0.0
    for label, sign in ((1, -1.0), (0, 1.0)):
        x0 = rng.uniform(EPS, 1 - EPS, size=(64, 64, 3))
        out = pgd_attack(model, [x0], [label], AttackConfig())[0]
        worst = max(worst, float(np.abs(out - (x0 + EPS * sign * np.sign(w))).max()))
    record(3, worst <= 1e-6, f"max |out - (x0 + eps*sign(+-w))| = {worst:.2e} (tol 1e-6)")
    assert worst <= 1e-6


def test_04_whitebox_collapse(regime_study):
    worst = max(r.auc("White-box", reg.value) for r in regime_study.values() for reg in Regime)
    record(4, worst < 0.20, f"max white-box video AUC over 4 regimes x {len(SEEDS)} seeds = {worst:.3f} (< 0.20)")
    assert worst < 0.20


def test_05_blackbox_damage(regime_study):
    drops = [r.auc("No distortion", "BL") - r.auc("Black-box", "BL") for r in regime_study.values()]
    mean = float(np.mean(drops))
    ok = mean >= 0.05
    record(5, ok, f"BL clean - black-box AUC, mean over seeds = {mean:.3f} (>= 0.05); per seed "
                  + ", ".join(f"{d:.3f}" for d in drops))
    assert ok


def test_06_augmentation_ordering(regime_study):
    avg = {reg: _mean_over(regime_study, PERTURBATION_CONDITIONS, reg.value) for reg in Regime}
    bl, ca, eaca = avg[Regime.BL], avg[Regime.CA], avg[Regime.EA_CA]
    ok = eaca >= bl + 0.02 and eaca >= ca
    record(6, ok, f"mean AUC over 11 perturbations x {len(SEEDS)} seeds: BL {bl:.3f}, CA {ca:.3f}, "
                  f"EA {avg[Regime.EA]:.3f}, EA+CA {eaca:.3f} (need EA+CA >= BL+0.02 and >= CA)")
    assert ok


def test_07_jpeg_ordering(regime_study):
    conds = ["JPEG 10", "JPEG 20"]
    diffs = {c: _mean_over(regime_study, [c], "EA+CA") - _mean_over(regime_study, [c], "BL") for c in conds}
    ok = all(d > 0 for d in diffs.values())
    record(7, ok, "EA+CA - BL, mean over seeds: " + ", ".join(f"{c} {d:+.3f}" for c, d in diffs.items()) + " (> 0)")
    assert ok


def test_08_pool_validity(pipeline):
    docs = [json.loads((run / "pool" / "manifest.json").read_text()) for run in pipeline]
    members = docs[0]["members"]
    maes = [m["heldout_mae"] for m in members]
    families = [m["config"]["family"] for m in members]
    epochs = max(m["epochs_run"] for m in members)
    same = [m["checksum"] for m in docs[0]["members"]] == [m["checksum"] for m in docs[1]["members"]]
    ok = (len(members) == 8 and all(m["accepted"] for m in members) and all(0.001 < v < 0.30 for v in maes)
          and families.count("ConvAE") == 4 and families.count("UNet") == 4 and epochs <= 50 and same)
    record(8, ok, f"{len(members)} members, MAE [{min(maes):.4f}, {max(maes):.4f}], "
                  f"ConvAE/UNet {families.count('ConvAE')}/{families.count('UNet')}, max epochs {epochs}, "
                  f"checksums identical across runs {same}")
    assert ok


def test_09_chain_algebra(pipeline):
    pool = load_pool(pipeline[0] / "pool")
    rng = substream("acceptance", "chains")
    frames = load_crops(ingest_index(pipeline[0] / "data" / "test"))
    images = [frames[int(i)].image for i in rng.choice(len(frames), size=20, replace=False)]
    failures = 0
    for x in images:
        failures += not np.array_equal(chain_apply(x, pool, ChainSpec.of()), x)
        for _ in range(10):
            length = int(rng.integers(2, 5))
            chain = [int(i) for i in rng.choice(len(pool), size=length, replace=False)]
            cut = int(rng.integers(1, length))
            whole = chain_apply(x, pool, ChainSpec.of(*chain))
            split = chain_apply(chain_apply(x, pool, ChainSpec.of(*chain[:cut])), pool, ChainSpec.of(*chain[cut:]))
            failures += not np.array_equal(whole, split)
    record(9, failures == 0, f"20 images x 10 chains (+ empty chain): {failures} bit-exact mismatches")
    assert failures == 0


def test_10_jpeg_monotonicity(pipeline):
    crops = load_crops(ingest_index(pipeline[0] / "data" / "test"))[::4]
    means = [float(np.mean([psnr(c.image, jpeg_roundtrip(c.image, q)) for c in crops])) for q in (10, 20, 30, 50, 80)]
    gray = np.full((64, 64, 3), 0.5)
    dev = float(np.abs(jpeg_roundtrip(gray, 10) - gray).max())
    ok = all(a < b for a, b in zip(means, means[1:])) and dev <= 2 / 255
    record(10, ok, "mean PSNR q10..q80 = " + " < ".join(f"{m:.2f}" for m in means)
           + f" dB over {len(crops)} frames; gray q10 max dev {dev * 255:.2f}/255")
    assert ok


def test_11_determinism(pipeline):
    a, b = (run / "reports" / "report.csv" for run in pipeline)
    same = a.read_bytes() == b.read_bytes()
    n_rows = a.read_text().count("\n") - 1
    record(11, same, f"two pipeline runs, report.csv ({n_rows} rows) byte-identical: {same}")
    assert same
