import numpy as np
import pytest

from fforge.dataprep import ingest_index
from fforge.errors import IOFailure, InvalidParams
from fforge.evaluation import roc_auc
from fforge.imaging import mae
from fforge.jpeg import jpeg_roundtrip
from fforge.synthdata import (
    SynthConfig,
    build_synth_dataset,
    checkerboard_energy,
    gen_real,
    inject_fingerprint,
)

CFG = SynthConfig(n_videos_per_class=10, frames_per_video=16, image_size=64, seed=11)


@pytest.fixture(scope="module")
def corpus():
    reals = [gen_real(CFG, v, f) for v in range(10) for f in range(0, 16, 2)]
    reals += [gen_real(CFG, v, 1) for v in range(10, 30)]
    fakes = [inject_fingerprint(x, 0.5) for x in reals]
    return reals, fakes


def test_config_validation():
    with pytest.raises(InvalidParams):
        SynthConfig(image_size=15)
    with pytest.raises(InvalidParams):
        SynthConfig(fingerprint_strength=0)
    with pytest.raises(InvalidParams):
        SynthConfig(n_videos_per_class=0)


def test_gen_real_deterministic_and_in_range():
    a, b = gen_real(CFG, 3, 7), gen_real(CFG, 3, 7)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (64, 64, 3) and a.min() >= 0 and a.max() <= 1


def test_temporal_coherence():
    for v in range(5):
        frames = [gen_real(CFG, v, f) for f in range(16)]
        assert max(mae(frames[0], f) for f in frames[1:]) < 0.1


def test_weak_fingerprint_vanishes():
    x = gen_real(CFG, 0, 0)
    assert mae(inject_fingerprint(x, 1e-9), x) < 1e-8


def test_fingerprint_magnitude(corpus):
    reals, fakes = corpus
    maes = [mae(r, f) for r, f in zip(reals, fakes)]
    assert 0.005 <= np.mean(maes) <= 0.1
    assert min(maes) >= 0.005 and max(maes) <= 0.1


def test_brightness_matched(corpus):
    reals, fakes = corpus
    assert np.mean([abs(r.mean() - f.mean()) for r, f in zip(reals, fakes)]) < 0.02


def _checker_auc(reals, fakes, transform=lambda x: x):
    scored = [(checkerboard_energy(transform(x)), 0) for x in reals]
    scored += [(checkerboard_energy(transform(x)), 1) for x in fakes]
    return roc_auc(scored)


def test_checkerboard_statistic_separates(corpus):
    assert _checker_auc(*corpus) >= 0.95


# measured on this corpus: q80 -> 1.000, q10 -> 0.48
def test_fingerprint_survives_mild_jpeg(corpus):
    assert _checker_auc(*corpus, lambda x: jpeg_roundtrip(x, 80)) >= 0.85


def test_fingerprint_damaged_by_strong_jpeg(corpus):
    assert _checker_auc(*corpus, lambda x: jpeg_roundtrip(x, 10)) < 0.7


def test_build_dataset(tmp_path):
    cfg = SynthConfig(n_videos_per_class=4, frames_per_video=16, image_size=16, seed=2)
    index = build_synth_dataset(cfg, tmp_path / "a")
    pngs = list((tmp_path / "a").rglob("*.png"))
    assert len(pngs) == 128 and len(index) == 128
    assert index.labels.count(0) == index.labels.count(1) == 64
    again = build_synth_dataset(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "index.csv").read_bytes() == (tmp_path / "b" / "index.csv").read_bytes()
    for p in pngs:
        assert p.read_bytes() == (tmp_path / "b" / p.relative_to(tmp_path / "a")).read_bytes()
    reloaded = ingest_index(tmp_path / "a")
    assert reloaded.entries == index.entries


def test_build_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IOFailure):
        build_synth_dataset(SynthConfig(1, 1, 16), blocker / "sub")
