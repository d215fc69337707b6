import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image as PILImage

from fforge.errors import InvalidParams, InvalidQuality
from fforge.imaging import mse, psnr
from fforge.jpeg import scaled_table, LUMA_TABLE
from fforge.perturbations import (
    DISPLAY_NAMES,
    JpegSpec,
    Kind,
    PerturbationSpec,
    apply_perturbation,
    jpeg_menu,
    jpeg_roundtrip,
    make_spec,
    perturbation_menu,
)
from fforge.synthdata import SynthConfig, gen_real

FACE = gen_real(SynthConfig(seed=3), 0, 0)


def test_menu_matches_table_rows():
    menu = perturbation_menu()
    assert len(menu) == 11
    assert menu[0].kind is Kind.Identity and menu[0].name == "No distortion"
    assert [s.name for s in menu] == [
        "No distortion", "Adjust Sharpness", "Autocontrast", "Random Perspective", "Color Jitter",
        "Random Resized Crop", "Gaussian Blur", "Random Noise", "Random Rotation",
        "Random Affine (A)", "Random Affine (B)",
    ]


def test_blur_constant_image_bit_identical():
    x = np.full((32, 32, 3), 0.37)
    for sigma in (0.5, 1.3, 2.0):
        out = apply_perturbation(x, make_spec(Kind.GaussianBlur, sigma=(sigma, sigma)))
        np.testing.assert_array_equal(out, x)


def test_zero_noise_is_identity():
    out = apply_perturbation(FACE, make_spec(Kind.RandomNoise, sigma=(0.0, 0.0)))
    np.testing.assert_array_equal(out, FACE)


def test_zero_rotation_is_identity():
    out = apply_perturbation(FACE, make_spec(Kind.RandomRotation, degrees=(0.0, 0.0)))
    np.testing.assert_array_equal(out, FACE)


def test_identity_takes_no_params():
    with pytest.raises(InvalidParams):
        apply_perturbation(FACE, PerturbationSpec(Kind.Identity, {"sigma": 1.0}))


@pytest.mark.parametrize("kind,params", [
    (Kind.GaussianBlur, {"sigma": (2.0, 0.5)}),
    (Kind.RandomNoise, {"sigma": (-1.0, 0.1)}),
    (Kind.ColorJitter, {"warp": 1.0}),
    (Kind.RandomRotation, {"degrees": 5.0}),
])
def test_invalid_params(kind, params):
    with pytest.raises(InvalidParams):
        make_spec(kind, **params)


@pytest.mark.parametrize("spec", perturbation_menu(), ids=lambda s: s.kind.value)
def test_shape_range_determinism_no_mutation(spec):
    x = FACE.copy()
    a = apply_perturbation(x, spec.with_stream(7, "s", 1))
    b = apply_perturbation(x, spec.with_stream(7, "s", 1))
    np.testing.assert_array_equal(x, FACE)
    np.testing.assert_array_equal(a, b)
    assert a.shape == x.shape and a.min() >= 0 and a.max() <= 1


@pytest.mark.parametrize("kind", [Kind.RandomNoise, Kind.RandomRotation, Kind.RandomAffineA, Kind.ColorJitter])
def test_distinct_streams_differ(kind):
    spec = make_spec(kind)
    a = apply_perturbation(FACE, spec.with_stream(1))
    b = apply_perturbation(FACE, spec.with_stream(2))
    assert not np.array_equal(a, b)


def test_affine_a_stronger_than_b():
    a = np.mean([mse(FACE, apply_perturbation(FACE, make_spec(Kind.RandomAffineA).with_stream(i))) for i in range(20)])
    b = np.mean([mse(FACE, apply_perturbation(FACE, make_spec(Kind.RandomAffineB).with_stream(i))) for i in range(20)])
    assert a > b


def test_quality_scaling_rule():
    np.testing.assert_array_equal(scaled_table(LUMA_TABLE, 50), LUMA_TABLE)
    assert scaled_table(LUMA_TABLE, 100).max() == 1
    assert scaled_table(LUMA_TABLE, 10)[0, 0] == 80  # 16 * 500 / 100
    with pytest.raises(InvalidQuality):
        scaled_table(LUMA_TABLE, 0)


@pytest.mark.parametrize("q", [0, 101, 2.5])
def test_invalid_quality(q):
    with pytest.raises(InvalidQuality):
        JpegSpec(q)


def test_jpeg_menu():
    assert [s.quality for s in jpeg_menu()] == [10, 20, 30, 50, 80]
    assert all(s.canonical for s in jpeg_menu()) and not JpegSpec(55).canonical


def test_constant_gray_q10():
    g = np.full((16, 16, 3), 0.5)
    assert np.abs(jpeg_roundtrip(g, JpegSpec(10)) - g).max() <= 2 / 255


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 100), st.integers(0, 2**31))
def test_jpeg_shape_and_range(h, w, q, seed):
    x = np.random.default_rng(seed).random((h, w, 3))
    y = jpeg_roundtrip(x, q)
    assert y.shape == x.shape and y.min() >= 0 and y.max() <= 1


def test_jpeg_mse_nonincreasing_in_quality():
    errs = [mse(FACE, jpeg_roundtrip(FACE, s)) for s in jpeg_menu()]
    assert all(a >= b for a, b in zip(errs, errs[1:]))


def _pillow_roundtrip(x, q):
    buf = io.BytesIO()
    PILImage.fromarray(np.round(x * 255).astype(np.uint8)).save(buf, "JPEG", quality=q, subsampling=2)
    return np.asarray(PILImage.open(buf).convert("RGB"), dtype=np.float64) / 255


@pytest.mark.parametrize("q", [10, 20, 30, 50, 80])
def test_psnr_parity_with_reference_codec(q):
    ours = psnr(FACE, jpeg_roundtrip(FACE, q))
    ref = psnr(FACE, _pillow_roundtrip(FACE, q))
    assert abs(ours - ref) < 0.5
