"""Image representation, arithmetic and quality metrics.

An image is a ``float64`` numpy array of shape ``(H, W, 3)`` holding RGB
intensities in ``[0, 1]``. 8-bit files map through ``v / 255`` on load and
``round(v * 255)`` on save.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

from .errors import IOFailure, NonFiniteInput, ShapeMismatch

__all__ = [
    "QualityStats",
    "as_image",
    "clamp",
    "mae",
    "mse",
    "psnr",
    "quality_stats",
    "resize_bilinear",
    "load_png",
    "save_png",
    "to_uint8",
]


@dataclass(frozen=True)
class QualityStats:
    mae: float
    mse: float
    psnr: float


def _check_finite(arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("image contains NaN or infinite values")


def as_image(data, *, check_range: bool = True) -> np.ndarray:
    """Validate ``data`` as an image and return it as a float64 array.

    Raises:
        ShapeMismatch: if the array is not ``(H, W, 3)``.
        NonFiniteInput: on NaN/inf.
        ValueError: if ``check_range`` and any value lies outside ``[0, 1]``.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeMismatch(f"expected (H, W, 3) image, got shape {arr.shape}")
    _check_finite(arr)
    if check_range and (arr.min(initial=0.0) < 0.0 or arr.max(initial=0.0) > 1.0):
        raise ValueError("image values must lie in [0, 1]")
    return arr


def clamp(image) -> np.ndarray:
    """Clip every element into ``[0, 1]``; NaN/inf is an error, never clipped."""
    arr = np.asarray(image, dtype=np.float64)
    _check_finite(arr)
    return np.clip(arr, 0.0, 1.0)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mae(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB with peak 1.0; ``inf`` for identical inputs."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / err)


def quality_stats(a, b) -> QualityStats:
    err = mse(a, b)
    return QualityStats(
        mae=mae(a, b),
        mse=err,
        psnr=math.inf if err == 0.0 else 10.0 * math.log10(1.0 / err),
    )


def resize_bilinear(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize with half-pixel centres and edge replication.

    Returns the input unchanged (as a copy) when the size already matches.
    """
    arr = np.asarray(image, dtype=np.float64)
    h, w = arr.shape[:2]
    if (h, w) == (height, width):
        return arr.copy()
    ys = (np.arange(height) + 0.5) * (h / height) - 0.5
    xs = (np.arange(width) + 0.5) * (w / width) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = np.empty((height, width, arr.shape[2]))
    for c in range(arr.shape[2]):
        out[..., c] = ndimage.map_coordinates(arr[..., c], [yy, xx], order=1, mode="nearest")
    return np.clip(out, 0.0, 1.0)


def to_uint8(image) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    return np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)


def load_png(path) -> np.ndarray:
    """Load an 8-bit image file as an RGB float image."""
    try:
        with PILImage.open(path) as im:
            data = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise IOFailure(f"cannot read image {path}: {exc}") from exc
    return data / 255.0


def save_png(path, image) -> None:
    arr = to_uint8(as_image(image))
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        # fixed compression settings keep the byte stream reproducible
        PILImage.fromarray(arr, mode="RGB").save(path, format="PNG", compress_level=6)
    except OSError as exc:
        raise IOFailure(f"cannot write image {path}: {exc}") from exc
