"""Desk-scale real/fake face-like video frames.

Real frames are procedural: a smooth colour field with an oval, shaded
"face" carrying eyes, a mouth and a fixed skin texture, plus per-frame drift
and sensor noise. Fake frames are real frames passed through
:func:`inject_fingerprint`, which stands in for a generator's upsampling
pipeline: a 2x area downsample, a stride-2 transposed-convolution upsample
with a checkerboard kernel, a light blend and a small chroma shift. The two
classes have matched brightness; the class signal is the fingerprint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .dataprep import FAKE, REAL, DatasetIndex, IndexEntry, INDEX_FILENAME
from .errors import IOFailure, InvalidParams
from .imaging import as_image, save_png
from .rng import substream

logger = logging.getLogger(__name__)

# 2x2 kernel of the stride-2 transposed convolution; mean 1 keeps brightness.
CHECKER_KERNEL = np.array([[2.0, 0.0], [0.0, 2.0]])
BLEND_SCALE = 0.1
CHROMA_SHIFT = np.array([0.02, 0.0, -0.02])


@dataclass(frozen=True)
class SynthConfig:
    n_videos_per_class: int = 8
    frames_per_video: int = 16
    image_size: int = 64
    seed: int = 0
    fingerprint_strength: float = 0.5

    def __post_init__(self):
        if self.n_videos_per_class < 1 or self.frames_per_video < 1:
            raise InvalidParams("video and frame counts must be >= 1")
        if self.image_size < 16 or self.image_size % 2:
            raise InvalidParams("image_size must be even and >= 16")
        if not 0.0 < self.fingerprint_strength <= 1.0:
            raise InvalidParams("fingerprint_strength must lie in (0, 1]")


def _ellipse(u, v, cx, cy, ax, ay, soft):
    r = np.sqrt(((u - cx) / ax) ** 2 + ((v - cy) / ay) ** 2)
    return np.clip((1.0 - r) / soft, 0.0, 1.0)


def gen_real(config: SynthConfig, video_id: int, frame_idx: int) -> np.ndarray:
    """Deterministic real frame for ``(config.seed, video_id, frame_idx)``."""
    if not 0 <= frame_idx < config.frames_per_video:
        raise InvalidParams(f"frame_idx {frame_idx} out of range")
    if video_id < 0:
        raise InvalidParams("video_id must be non-negative")
    s = config.image_size
    vr = substream(config.seed, "synth-video", video_id)

    grid = (np.arange(s) + 0.5) / s
    v, u = np.meshgrid(grid, grid, indexing="ij")

    img = np.empty((s, s, 3))
    base = vr.uniform(0.3, 0.7, size=3)
    for c in range(3):
        field = np.full((s, s), base[c])
        for _ in range(3):
            fx, fy = vr.uniform(-1.5, 1.5, size=2)
            field += vr.uniform(0.0, 0.08) * np.cos(2 * np.pi * (fx * u + fy * v) + vr.uniform(0, 2 * np.pi))
        img[..., c] = field

    skin_r = vr.uniform(0.45, 0.85)
    skin = np.array([skin_r, skin_r * vr.uniform(0.7, 0.85), skin_r * vr.uniform(0.55, 0.75)])
    cx, cy = vr.uniform(0.42, 0.58, size=2)
    ax, ay = vr.uniform(0.2, 0.28), vr.uniform(0.28, 0.36)
    phase = vr.uniform(0, 2 * np.pi, size=3)
    texture = ndimage.gaussian_filter(vr.standard_normal((s, s)), 1.0) * 0.05
    eye_shade = vr.uniform(0.1, 0.3)
    lip = np.array([vr.uniform(0.5, 0.8), 0.25, 0.3])

    # per-frame drift keeps consecutive frames coherent
    t = 2 * np.pi * frame_idx / 16.0
    cx += 0.01 * np.sin(t + phase[0])
    cy += 0.01 * np.sin(t + phase[1])
    gain = 1.0 + 0.01 * np.sin(t + phase[2])

    face = _ellipse(u, v, cx, cy, ax, ay, 0.08)
    shade = 1.0 - 0.25 * (u - cx) / ax - 0.1 * (v - cy) / ay
    face_rgb = skin[None, None, :] * shade[..., None] + texture[..., None]
    img = img * (1 - face[..., None]) + face_rgb * face[..., None]
    for side in (-1, 1):
        eye = _ellipse(u, v, cx + side * 0.4 * ax, cy - 0.25 * ay, 0.18 * ax, 0.08 * ay, 0.3)
        img = img * (1 - eye[..., None]) + eye_shade * eye[..., None]
    mouth = _ellipse(u, v, cx, cy + 0.5 * ay, 0.4 * ax, 0.08 * ay, 0.4)
    img = img * (1 - mouth[..., None]) + lip[None, None, :] * mouth[..., None]

    noise = substream(config.seed, "synth-noise", video_id, frame_idx).standard_normal(img.shape)
    return np.clip(img * gain + 0.01 * noise, 0.0, 1.0)


def checker_upsample(image: np.ndarray) -> np.ndarray:
    """2x area downsample followed by the fixed stride-2 transposed convolution."""
    h, w = image.shape[:2]
    low = image.reshape(h // 2, 2, w // 2, 2, 3).mean(axis=(1, 3))
    out = low[:, None, :, None, :] * CHECKER_KERNEL[None, :, None, :, None]
    return out.reshape(h, w, 3)


def inject_fingerprint(image, strength: float = 0.5) -> np.ndarray:
    """Blend a checkerboard upsampling artifact and a chroma shift into ``image``."""
    if not 0.0 < strength <= 1.0:
        raise InvalidParams("strength must lie in (0, 1]")
    img = as_image(image)
    h, w = img.shape[:2]
    padded = np.pad(img, ((0, h % 2), (0, w % 2), (0, 0)), mode="edge")
    artifact = checker_upsample(padded)[:h, :w]
    weight = BLEND_SCALE * strength
    out = (1.0 - weight) * img + weight * artifact + strength * CHROMA_SHIFT
    return np.clip(out, 0.0, 1.0)


def gen_fake(config: SynthConfig, video_id: int, frame_idx: int) -> np.ndarray:
    return inject_fingerprint(gen_real(config, video_id, frame_idx), config.fingerprint_strength)


def checkerboard_energy(image) -> float:
    """Sum of squared responses to the 2x2 filter [[+1, -1], [-1, +1]]."""
    img = np.asarray(image, dtype=np.float64)
    resp = img[:-1, :-1] - img[:-1, 1:] - img[1:, :-1] + img[1:, 1:]
    return float(np.sum(resp**2))


def build_synth_dataset(config: SynthConfig, out_dir) -> DatasetIndex:
    """Write PNG frames for ``n_videos_per_class`` real and fake videos plus
    ``index.csv``. Fake video ``k`` is real video ``k`` with the fingerprint."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise IOFailure(f"output directory {out} is not writable: {exc}") from exc

    entries = []
    for k in range(config.n_videos_per_class):
        for prefix, label in (("real", REAL), ("fake", FAKE)):
            vid = f"{prefix}_{k:04d}"
            for f in range(config.frames_per_video):
                frame = gen_real(config, k, f)
                if label == FAKE:
                    frame = inject_fingerprint(frame, config.fingerprint_strength)
                rel = f"frames/{vid}/{f:04d}.png"
                save_png(out / rel, frame)
                entries.append(IndexEntry(vid, f, rel, label))
    index = DatasetIndex(entries, root=str(out), name=out.name)
    try:
        index.write_csv(out / INDEX_FILENAME)
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    logger.info("wrote %d frames to %s", len(entries), out)
    return index
