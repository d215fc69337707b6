"""Classic perturbation suite and JPEG round trip.

Every perturbation is a pure function of ``(image, spec)``: random parameters
are drawn from the substream named by ``spec.seed_stream``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import ndimage

from . import jpeg as _jpeg
from .errors import InvalidParams, InvalidQuality
from .imaging import as_image
from .rng import substream


class Kind(str, Enum):
    Identity = "Identity"
    AdjustSharpness = "AdjustSharpness"
    Autocontrast = "Autocontrast"
    RandomPerspective = "RandomPerspective"
    ColorJitter = "ColorJitter"
    RandomResizedCrop = "RandomResizedCrop"
    GaussianBlur = "GaussianBlur"
    RandomNoise = "RandomNoise"
    RandomRotation = "RandomRotation"
    RandomAffineA = "RandomAffineA"
    RandomAffineB = "RandomAffineB"


# report names, in table row order
DISPLAY_NAMES = {
    Kind.Identity: "No distortion",
    Kind.AdjustSharpness: "Adjust Sharpness",
    Kind.Autocontrast: "Autocontrast",
    Kind.RandomPerspective: "Random Perspective",
    Kind.ColorJitter: "Color Jitter",
    Kind.RandomResizedCrop: "Random Resized Crop",
    Kind.GaussianBlur: "Gaussian Blur",
    Kind.RandomNoise: "Random Noise",
    Kind.RandomRotation: "Random Rotation",
    Kind.RandomAffineA: "Random Affine (A)",
    Kind.RandomAffineB: "Random Affine (B)",
}

# (low, high) ranges are sampled uniformly; scalars are fixed values
DEFAULT_PARAMS: dict[Kind, dict] = {
    Kind.Identity: {},
    Kind.AdjustSharpness: {"factor": (0.5, 2.0)},
    Kind.Autocontrast: {"cutoff": 0.01},
    Kind.RandomPerspective: {"distortion": 0.12},
    Kind.ColorJitter: {
        "brightness": (0.8, 1.2),
        "contrast": (0.8, 1.2),
        "saturation": (0.8, 1.2),
        "hue": (-0.05, 0.05),
    },
    Kind.RandomResizedCrop: {"area": (0.6, 1.0), "aspect": (3 / 4, 4 / 3)},
    Kind.GaussianBlur: {"sigma": (0.5, 2.0)},
    Kind.RandomNoise: {"sigma": (0.01, 0.05)},
    Kind.RandomRotation: {"degrees": (-15.0, 15.0)},
    Kind.RandomAffineA: {"degrees": (-25.0, 25.0), "translate": 0.10, "scale": (0.8, 1.2), "shear": (-10.0, 10.0)},
    Kind.RandomAffineB: {"degrees": (-10.0, 10.0), "translate": 0.05, "scale": (0.9, 1.1), "shear": (0.0, 0.0)},
}

# hard limits used by validation
_BOUNDS = {
    "factor": (0.0, 10.0),
    "cutoff": (0.0, 0.49),
    "distortion": (0.0, 0.5),
    "brightness": (0.0, 10.0),
    "contrast": (0.0, 10.0),
    "saturation": (0.0, 10.0),
    "hue": (-0.5, 0.5),
    "area": (1e-3, 1.0),
    "aspect": (1e-2, 1e2),
    "sigma": (0.0, 10.0),
    "degrees": (-180.0, 180.0),
    "translate": (0.0, 1.0),
    "scale": (1e-2, 10.0),
    "shear": (-60.0, 60.0),
}


@dataclass(frozen=True)
class PerturbationSpec:
    kind: Kind
    params: dict = field(default_factory=dict)
    seed_stream: tuple = (0,)

    @property
    def name(self) -> str:
        return DISPLAY_NAMES[Kind(self.kind)]

    def with_stream(self, *keys) -> "PerturbationSpec":
        return replace(self, seed_stream=tuple(keys))


def make_spec(kind, seed_stream=(0,), **overrides) -> PerturbationSpec:
    kind = Kind(kind)
    params = dict(DEFAULT_PARAMS[kind])
    params.update(overrides)
    spec = PerturbationSpec(kind, params, tuple(seed_stream))
    validate_spec(spec)
    return spec


def validate_spec(spec: PerturbationSpec) -> None:
    try:
        kind = Kind(spec.kind)
    except ValueError:
        raise InvalidParams(f"unknown perturbation kind {spec.kind!r}") from None
    allowed = DEFAULT_PARAMS[kind]
    if kind is Kind.Identity and spec.params:
        raise InvalidParams("Identity takes no parameters")
    for key, value in spec.params.items():
        if key not in allowed:
            raise InvalidParams(f"{kind.value} has no parameter {key!r}")
        lo, hi = _BOUNDS[key]
        vals = value if isinstance(value, (tuple, list)) else (value,)
        if isinstance(allowed[key], tuple) and len(vals) != 2:
            raise InvalidParams(f"{key} must be a (low, high) pair")
        if len(vals) == 2 and vals[0] > vals[1]:
            raise InvalidParams(f"{key} range is reversed: {value}")
        for v in vals:
            if not (isinstance(v, (int, float)) and math.isfinite(v) and lo <= v <= hi):
                raise InvalidParams(f"{key}={value} outside [{lo}, {hi}]")


def perturbation_menu() -> list[PerturbationSpec]:
    """The eleven canonical conditions (Identity first) with default parameters."""
    return [make_spec(k) for k in DISPLAY_NAMES]


def spec_by_name(name: str) -> PerturbationSpec:
    for spec in perturbation_menu():
        if name in (spec.name, Kind(spec.kind).value):
            return spec
    raise InvalidParams(f"unknown perturbation {name!r}")


# --- primitive operations -------------------------------------------------


def _draw(rng: np.random.Generator, value) -> float:
    if isinstance(value, (tuple, list)):
        lo, hi = value
        return float(lo) if lo == hi else float(rng.uniform(lo, hi))
    return float(value)


def _warp(img: np.ndarray, inv: np.ndarray) -> np.ndarray:
    """Resample ``img`` with the 3x3 matrix ``inv`` mapping output pixel
    coordinates ``(x, y, 1)`` to input coordinates; bilinear, reflected."""
    if np.array_equal(inv, np.eye(3)):
        return img.copy()
    h, w = img.shape[:2]
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel(), np.ones(h * w)])
    src = inv @ pts
    sx, sy = src[0] / src[2], src[1] / src[2]
    out = np.empty_like(img)
    for c in range(3):
        out[..., c] = ndimage.map_coordinates(img[..., c], [sy, sx], order=1, mode="mirror").reshape(h, w)
    return out


def _about_center(h: int, w: int, m: np.ndarray) -> np.ndarray:
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    t = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1.0]])
    ti = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1.0]])
    return t @ m @ ti


def _affine_inverse(h, w, angle_deg, tx, ty, scale, shear_deg) -> np.ndarray:
    if angle_deg == 0 and tx == 0 and ty == 0 and scale == 1 and shear_deg == 0:
        return np.eye(3)
    a = math.radians(angle_deg)
    sh = math.radians(shear_deg)
    rot = np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1.0]])
    shear = np.array([[1, math.tan(sh), 0], [0, 1, 0], [0, 0, 1.0]])
    sc = np.diag([scale, scale, 1.0])
    tr = np.array([[1, 0, tx], [0, 1, ty], [0, 0, 1.0]])
    forward = tr @ _about_center(h, w, rot @ shear @ sc)
    return np.linalg.inv(forward)


def _luma(img: np.ndarray) -> np.ndarray:
    return img @ np.array([0.299, 0.587, 0.114])


def _blend(a: np.ndarray, b: np.ndarray, factor: float) -> np.ndarray:
    return np.clip(factor * a + (1.0 - factor) * b, 0.0, 1.0)


def adjust_sharpness(img: np.ndarray, factor: float) -> np.ndarray:
    kernel = np.array([[1, 1, 1], [1, 5, 1], [1, 1, 1]], dtype=np.float64) / 13.0
    smooth = img.copy()
    for c in range(3):
        smooth[1:-1, 1:-1, c] = ndimage.convolve(img[..., c], kernel, mode="nearest")[1:-1, 1:-1]
    return _blend(img, smooth, factor)


def autocontrast(img: np.ndarray, cutoff: float) -> np.ndarray:
    out = img.copy()
    for c in range(3):
        lo, hi = np.quantile(img[..., c], [cutoff, 1.0 - cutoff])
        if hi - lo > 1e-12:
            out[..., c] = (img[..., c] - lo) / (hi - lo)
    return np.clip(out, 0.0, 1.0)


def _hue_rotate(img: np.ndarray, turns: float) -> np.ndarray:
    if turns == 0:
        return img
    to_yiq = np.array([[0.299, 0.587, 0.114], [0.596, -0.274, -0.322], [0.211, -0.523, 0.312]])
    theta = 2 * math.pi * turns
    rot = np.array([[1, 0, 0], [0, math.cos(theta), -math.sin(theta)], [0, math.sin(theta), math.cos(theta)]])
    m = np.linalg.inv(to_yiq) @ rot @ to_yiq
    return np.clip(img @ m.T, 0.0, 1.0)


def color_jitter(img, brightness, contrast, saturation, hue) -> np.ndarray:
    out = np.clip(img * brightness, 0.0, 1.0)
    out = _blend(out, np.full_like(out, _luma(out).mean()), contrast)
    out = _blend(out, np.repeat(_luma(out)[..., None], 3, axis=2), saturation)
    return _hue_rotate(out, hue)


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma == 0:
        return img.copy()
    radius = math.ceil(3 * sigma)
    # blur the zero-mean residual so constant images come back bit-identical
    mean = img.mean(axis=(0, 1), keepdims=True)
    resid = ndimage.gaussian_filter(img - mean, sigma=(sigma, sigma, 0), mode="reflect", truncate=radius / sigma)
    return np.clip(mean + resid, 0.0, 1.0)


def resized_crop(img: np.ndarray, top: float, left: float, ch: float, cw: float) -> np.ndarray:
    h, w = img.shape[:2]
    if (top, left, ch, cw) == (0, 0, h, w):
        return img.copy()
    ys = top + (np.arange(h) + 0.5) * ch / h - 0.5
    xs = left + (np.arange(w) + 0.5) * cw / w - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = np.empty_like(img)
    for c in range(3):
        out[..., c] = ndimage.map_coordinates(img[..., c], [yy, xx], order=1, mode="mirror")
    return np.clip(out, 0.0, 1.0)


def _perspective_inverse(h, w, displacement: np.ndarray) -> np.ndarray:
    """Homography mapping output pixels back to source, given the four
    destination-corner displacements (pixels) of the source corners."""
    src = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)
    dst = src + displacement
    if np.array_equal(dst, src):
        return np.eye(3)
    rows, rhs = [], []
    for (x, y), (u, v) in zip(dst, src):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        rhs += [u, v]
    coef = np.linalg.solve(np.array(rows), np.array(rhs))
    return np.append(coef, 1.0).reshape(3, 3)


def apply_perturbation(image, spec: PerturbationSpec) -> np.ndarray:
    """Apply ``spec`` to ``image``; output has the same shape, values in [0, 1]."""
    validate_spec(spec)
    img = as_image(image).copy()
    kind = Kind(spec.kind)
    p = spec.params
    rng = substream("perturb", kind.value, *spec.seed_stream)
    h, w = img.shape[:2]

    if kind is Kind.Identity:
        out = img
    elif kind is Kind.AdjustSharpness:
        out = adjust_sharpness(img, _draw(rng, p["factor"]))
    elif kind is Kind.Autocontrast:
        out = autocontrast(img, float(p["cutoff"]))
    elif kind is Kind.RandomPerspective:
        d = float(p["distortion"])
        disp = rng.uniform(-d, d, size=(4, 2)) * np.array([w - 1, h - 1])
        out = _warp(img, _perspective_inverse(h, w, disp))
    elif kind is Kind.ColorJitter:
        b, c, s, hue = (_draw(rng, p[k]) for k in ("brightness", "contrast", "saturation", "hue"))
        out = color_jitter(img, b, c, s, hue)
    elif kind is Kind.RandomResizedCrop:
        area = _draw(rng, p["area"]) * h * w
        aspect = _draw(rng, p["aspect"])
        cw = min(float(w), math.sqrt(area * aspect))
        ch = min(float(h), math.sqrt(area / aspect))
        top = _draw(rng, (0.0, h - ch))
        left = _draw(rng, (0.0, w - cw))
        out = resized_crop(img, top, left, ch, cw)
    elif kind is Kind.GaussianBlur:
        out = gaussian_blur(img, _draw(rng, p["sigma"]))
    elif kind is Kind.RandomNoise:
        sigma = _draw(rng, p["sigma"])
        out = img + sigma * rng.standard_normal(img.shape)
    elif kind is Kind.RandomRotation:
        out = _warp(img, _affine_inverse(h, w, _draw(rng, p["degrees"]), 0, 0, 1, 0))
    else:  # affine variants
        angle = _draw(rng, p["degrees"])
        t = float(p["translate"])
        tx, ty = _draw(rng, (-t * w, t * w)), _draw(rng, (-t * h, t * h))
        scale = _draw(rng, p["scale"])
        shear = _draw(rng, p["shear"])
        out = _warp(img, _affine_inverse(h, w, angle, tx, ty, scale, shear))
    return np.clip(out, 0.0, 1.0)


# --- JPEG -----------------------------------------------------------------


@dataclass(frozen=True)
class JpegSpec:
    quality: int = 80

    def __post_init__(self):
        if isinstance(self.quality, bool) or not isinstance(self.quality, (int, np.integer)):
            raise InvalidQuality(f"quality must be an integer, got {self.quality!r}")
        if not 1 <= self.quality <= 100:
            raise InvalidQuality(f"quality must be in [1, 100], got {self.quality}")

    @property
    def canonical(self) -> bool:
        return self.quality in _jpeg.CANONICAL_QUALITIES

    @property
    def name(self) -> str:
        return f"JPEG {self.quality}"


def jpeg_menu() -> list[JpegSpec]:
    return [JpegSpec(q) for q in _jpeg.CANONICAL_QUALITIES]


def jpeg_roundtrip(image, spec: JpegSpec | int) -> np.ndarray:
    """Encode/decode ``image`` as baseline 4:2:0 JPEG at ``spec.quality``."""
    if not isinstance(spec, JpegSpec):
        spec = JpegSpec(spec)
    return _jpeg.jpeg_roundtrip(image, spec.quality)
