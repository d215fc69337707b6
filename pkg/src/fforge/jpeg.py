"""Baseline JPEG round trip (encode + decode) in numpy.

The lossy stages are reproduced exactly as a baseline sequential codec runs
them: 8-bit quantisation of the input, JFIF RGB->YCbCr, 4:2:0 chroma
subsampling by 2x2 averaging, level shift, 8x8 orthonormal DCT-II,
quantisation with the Annex K tables scaled by the IJG quality rule, then
the inverse path with triangular ("fancy") chroma upsampling. Huffman
coding is lossless and therefore skipped.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dctn, idctn

from .errors import InvalidQuality
from .imaging import as_image

CANONICAL_QUALITIES = (10, 20, 30, 50, 80)

# ITU-T T.81 Annex K, tables K.1 and K.2 (natural order).
LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

CHROMA_TABLE = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.float64)


def scaled_table(base: np.ndarray, quality: int) -> np.ndarray:
    """IJG quality scaling, clamped to the baseline range [1, 255]."""
    if not 1 <= int(quality) <= 100:
        raise InvalidQuality(f"quality must be in [1, 100], got {quality}")
    q = int(quality)
    scale = 5000 // q if q < 50 else 200 - 2 * q
    table = np.floor((base * scale + 50) / 100)
    return np.clip(table, 1, 255)


def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 128.0, ycc[..., 2] - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b], axis=-1)


def _pad_to(plane: np.ndarray, mult_h: int, mult_w: int) -> np.ndarray:
    h, w = plane.shape
    ph, pw = (-h) % mult_h, (-w) % mult_w
    if ph or pw:
        plane = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    return plane


def _blockwise(plane: np.ndarray, fn) -> np.ndarray:
    h, w = plane.shape
    blocks = plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)
    out = fn(blocks)
    return out.transpose(0, 2, 1, 3).reshape(h, w)


def quantize_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    """DCT, quantise, dequantise and inverse-DCT an 8-aligned sample plane.

    ``plane`` holds level-shifted samples (range about [-128, 127]).
    """

    def roundtrip(blocks):
        coeffs = dctn(blocks, type=2, axes=(2, 3), norm="ortho")
        levels = np.round(coeffs / table)
        return idctn(levels * table, type=2, axes=(2, 3), norm="ortho")

    return _blockwise(plane, roundtrip)


def _downsample2(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _fancy_up_axis(plane: np.ndarray, axis: int) -> np.ndarray:
    # each output sample is 3/4 nearer input + 1/4 farther input, edges replicated
    x = np.moveaxis(plane, axis, 0)
    prev = np.concatenate([x[:1], x[:-1]], axis=0)
    nxt = np.concatenate([x[1:], x[-1:]], axis=0)
    out = np.empty((2 * x.shape[0],) + x.shape[1:])
    out[0::2] = 0.75 * x + 0.25 * prev
    out[1::2] = 0.75 * x + 0.25 * nxt
    return np.moveaxis(out, 0, axis)


def upsample2(plane: np.ndarray) -> np.ndarray:
    return _fancy_up_axis(_fancy_up_axis(plane, 0), 1)


def jpeg_roundtrip(image, quality: int) -> np.ndarray:
    """Compress ``image`` at ``quality`` and decode it again.

    Odd dimensions are reflect-padded to even before coding and cropped back
    afterwards. The result has the input's shape and lies on the 8-bit grid
    ``k / 255``.
    """
    img = as_image(image)
    luma_q = scaled_table(LUMA_TABLE, quality)
    chroma_q = scaled_table(CHROMA_TABLE, quality)
    h, w = img.shape[:2]
    eh, ew = h + h % 2, w + w % 2
    if (eh, ew) != (h, w):
        img = np.pad(img, ((0, eh - h), (0, ew - w), (0, 0)), mode="reflect" if min(h, w) > 1 else "edge")

    samples = np.round(img * 255.0)
    ycc = rgb_to_ycbcr(samples)
    # MCU is 16x16 luma / 8x8 chroma for 4:2:0
    ph, pw = -(-eh // 16) * 16, -(-ew // 16) * 16

    y = _pad_to(ycc[..., 0], 16, 16)
    y_rec = quantize_plane(y - 128.0, luma_q) + 128.0
    y_rec = np.clip(np.round(y_rec), 0, 255)[:eh, :ew]

    chans = []
    for c in (1, 2):
        full = _pad_to(ycc[..., c], 16, 16)
        sub = _downsample2(full)
        rec = quantize_plane(sub - 128.0, chroma_q) + 128.0
        rec = np.clip(np.round(rec), 0, 255)
        chans.append(upsample2(rec)[:eh, :ew])
    assert y.shape == (ph, pw)

    rgb = ycbcr_to_rgb(np.stack([y_rec, chans[0], chans[1]], axis=-1))
    rgb = np.clip(np.round(rgb), 0, 255) / 255.0
    return rgb[:h, :w]
