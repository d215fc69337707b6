import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fforge.errors import NonFiniteInput, ShapeMismatch
from fforge.imaging import as_image, clamp, load_png, mae, mse, psnr, quality_stats, resize_bilinear, save_png

images = arrays(np.float64, (4, 5, 3), elements=st.floats(0, 1, allow_nan=False))


def test_clamp_in_range_unchanged():
    x = np.full((4, 4, 3), 0.5)
    np.testing.assert_array_equal(clamp(x), x)


def test_clamp_clips_out_of_range():
    x = np.full((2, 2, 3), 0.5)
    x[0, 0, 0], x[1, 1, 2] = 1.7, -0.2
    out = clamp(x)
    assert out[0, 0, 0] == 1.0 and out[1, 1, 2] == 0.0
    np.testing.assert_array_equal(clamp(out), out)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_clamp_rejects_non_finite(bad):
    x = np.zeros((2, 2, 3))
    x[0, 0, 0] = bad
    with pytest.raises(NonFiniteInput):
        clamp(x)


def test_as_image_checks_channels():
    with pytest.raises(ShapeMismatch):
        as_image(np.zeros((4, 4)))
    with pytest.raises(ShapeMismatch):
        as_image(np.zeros((4, 4, 4)))


def test_mae_examples():
    x = np.random.default_rng(0).random((3, 3, 3))
    assert mae(x, x) == 0
    assert mae(np.zeros((7, 2, 3)), np.full((7, 2, 3), 0.5)) == 0.5
    assert mae(np.array([0.0, 1.0]), np.array([0.25, 0.5])) == pytest.approx(0.375)


def test_mae_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        mae(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))


def test_psnr_examples():
    x = np.full((4, 4, 3), 0.3)
    assert psnr(x, x) == math.inf
    assert psnr(x, x + 0.1) == pytest.approx(20.0)
    assert psnr(np.zeros((4, 4, 3)), np.full((4, 4, 3), 0.5)) == pytest.approx(6.0206, abs=1e-4)


def test_quality_stats_infinite_iff_zero_error():
    x = np.full((2, 2, 3), 0.2)
    assert quality_stats(x, x).psnr == math.inf
    q = quality_stats(x, x + 0.01)
    assert q.mse > 0 and math.isfinite(q.psnr)


@given(images, images)
def test_mae_bounded_and_symmetric(a, b):
    m = mae(a, b)
    assert 0 <= m <= 1
    assert m == mae(b, a)
    assert mse(a, b) >= 0


@given(st.lists(st.floats(0.001, 0.5), min_size=2, max_size=6, unique=True))
def test_psnr_decreases_with_offset(offsets):
    base = np.zeros((3, 3, 3))
    vals = [psnr(base, base + d) for d in sorted(offsets)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_png_roundtrip_quantises(tmp_path):
    x = np.random.default_rng(1).random((8, 6, 3))
    save_png(tmp_path / "x.png", x)
    y = load_png(tmp_path / "x.png")
    np.testing.assert_array_equal(y, np.round(x * 255) / 255)


def test_resize_identity_and_shape():
    x = np.random.default_rng(2).random((8, 8, 3))
    np.testing.assert_array_equal(resize_bilinear(x, 8, 8), x)
    assert resize_bilinear(x, 5, 12).shape == (5, 12, 3)
