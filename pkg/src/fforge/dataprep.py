"""Dataset indexing, landmark-driven face cropping and frame-span selection."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy import ndimage

from .errors import (
    EmptyDataset,
    LandmarkOutOfBounds,
    MalformedIndex,
    ShapeMismatch,
    UnknownVideo,
)
from .imaging import as_image, load_png

logger = logging.getLogger(__name__)

INDEX_FILENAME = "index.csv"
INDEX_COLUMNS = ("video_id", "frame_idx", "image_path", "label", "landmarks_path")
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}
REAL, FAKE = 0, 1
DEFAULT_MARGIN = 1.3
DEFAULT_SPAN = 16


@dataclass(frozen=True)
class IndexEntry:
    video_id: str
    frame_idx: int
    image_path: str
    label: int
    landmarks_path: str | None = None


@dataclass
class DatasetIndex:
    """Validated list of frames; ``(video_id, frame_idx)`` pairs are unique."""

    entries: list[IndexEntry]
    root: str = "."
    dropped: int = 0
    name: str = "dataset"

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            key = (e.video_id, e.frame_idx)
            if key in seen:
                raise MalformedIndex(f"duplicate (video_id, frame_idx): {key}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[IndexEntry]:
        return iter(self.entries)

    @property
    def labels(self) -> list[int]:
        return [e.label for e in self.entries]

    def video_ids(self) -> list[str]:
        """Video ids in first-appearance order."""
        return list(dict.fromkeys(e.video_id for e in self.entries))

    def video_label(self, video_id: str) -> int:
        return self.frames_of(video_id)[0].label

    def frames_of(self, video_id: str) -> list[IndexEntry]:
        frames = sorted((e for e in self.entries if e.video_id == video_id), key=lambda e: e.frame_idx)
        if not frames:
            raise UnknownVideo(video_id)
        return frames

    def subset(self, video_ids: Sequence[str], name: str | None = None) -> "DatasetIndex":
        keep = set(video_ids)
        return DatasetIndex(
            [e for e in self.entries if e.video_id in keep],
            root=self.root,
            name=name or self.name,
        )

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.root) / p

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(INDEX_COLUMNS)
            for e in self.entries:
                writer.writerow([e.video_id, e.frame_idx, e.image_path, e.label, e.landmarks_path or ""])


def _parse_label(raw: str) -> int:
    value = raw.strip().lower()
    if value in ("0", "real"):
        return REAL
    if value in ("1", "fake"):
        return FAKE
    raise MalformedIndex(f"bad label {raw!r}")


def _read_csv(csv_path: Path) -> tuple[list[IndexEntry], int]:
    root = csv_path.parent
    entries, dropped = [], 0
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"video_id", "frame_idx", "image_path", "label"} - set(reader.fieldnames or ())
        if missing:
            raise MalformedIndex(f"index CSV lacks columns: {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                frame_idx = int(row["frame_idx"])
            except (TypeError, ValueError):
                raise MalformedIndex(f"line {lineno}: bad frame_idx {row['frame_idx']!r}") from None
            if frame_idx < 0:
                raise MalformedIndex(f"line {lineno}: negative frame_idx")
            image_path = row["image_path"]
            lm = (row.get("landmarks_path") or "").strip() or None
            resolved = Path(image_path) if Path(image_path).is_absolute() else root / image_path
            if not resolved.is_file():
                logger.warning("index line %d: missing image %s, dropped", lineno, image_path)
                dropped += 1
                continue
            if lm is not None:
                lm_resolved = Path(lm) if Path(lm).is_absolute() else root / lm
                if not lm_resolved.is_file():
                    logger.warning("index line %d: missing landmarks %s, dropped", lineno, lm)
                    dropped += 1
                    continue
            entries.append(IndexEntry(row["video_id"], frame_idx, image_path, _parse_label(row["label"]), lm))
    return entries, dropped


def _scan_dirs(root: Path) -> list[IndexEntry]:
    entries = []
    for sub, label in (("real", REAL), ("fake", FAKE)):
        d = root / sub
        if not d.is_dir():
            continue
        for p in sorted(d.iterdir()):
            if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file():
                entries.append(IndexEntry(p.stem, 0, str(p.relative_to(root)), label))
    return entries


def ingest_index(root_path, name: str | None = None) -> DatasetIndex:
    """Build a :class:`DatasetIndex` from ``root_path``.

    Reads ``index.csv`` if present, otherwise scans ``real/`` and ``fake/``
    subdirectories (one frame per file, ``video_id`` = filename stem). Rows
    whose image or landmark file is missing are dropped and counted in
    ``DatasetIndex.dropped``.
    """
    root = Path(root_path)
    csv_path = root / INDEX_FILENAME if root.is_dir() else root
    if csv_path.is_file():
        entries, dropped = _read_csv(csv_path)
        root = csv_path.parent
    elif root.is_dir():
        entries, dropped = _scan_dirs(root), 0
    else:
        raise EmptyDataset(f"{root_path} does not exist")
    if not entries:
        raise EmptyDataset(f"no usable frames under {root_path}")
    return DatasetIndex(entries, root=str(root), dropped=dropped, name=name or root.name)


def read_landmarks(path) -> np.ndarray:
    """Parse a landmark file: one ``x y`` pair per line, pixel units."""
    pts = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise MalformedIndex(f"{path}: expected 'x y', got {line.strip()!r}")
            pts.append((float(parts[0]), float(parts[1])))
    return np.asarray(pts, dtype=np.float64).reshape(-1, 2)


@dataclass
class FaceCrop:
    image: np.ndarray
    video_id: str = ""
    frame_idx: int = 0
    label: int = REAL


def face_box(landmarks, frame_height: int, frame_width: int, margin: float = DEFAULT_MARGIN):
    """Return ``(x0, y0, x1, y1)``: the landmark bounding box scaled by
    ``margin`` about its centre and clipped to the frame. ``None`` landmarks
    give the largest centred square."""
    if landmarks is None or len(landmarks) == 0:
        side = min(frame_height, frame_width)
        x0 = (frame_width - side) / 2.0
        y0 = (frame_height - side) / 2.0
        return x0, y0, x0 + side, y0 + side
    pts = np.asarray(landmarks, dtype=np.float64).reshape(-1, 2)
    xs, ys = pts[:, 0], pts[:, 1]
    if xs.min() < 0 or ys.min() < 0 or xs.max() > frame_width or ys.max() > frame_height:
        raise LandmarkOutOfBounds(f"landmarks outside {frame_width}x{frame_height} frame")
    cx, cy = (xs.min() + xs.max()) / 2.0, (ys.min() + ys.max()) / 2.0
    hx = (xs.max() - xs.min()) / 2.0 * margin
    hy = (ys.max() - ys.min()) / 2.0 * margin
    return (
        max(0.0, cx - hx),
        max(0.0, cy - hy),
        min(float(frame_width), cx + hx),
        min(float(frame_height), cy + hy),
    )


def crop_face(frame, landmarks=None, crop_size: int = 64, margin: float = DEFAULT_MARGIN) -> FaceCrop:
    """Crop the face region of ``frame`` and resample it to ``crop_size`` square.

    Coordinates are continuous with pixel ``i`` covering ``[i, i+1)``. A
    degenerate (zero-width) box is widened to one pixel.
    """
    img = as_image(frame)
    h, w = img.shape[:2]
    if h < 8 or w < 8:
        raise ShapeMismatch(f"frame must be at least 8x8, got {h}x{w}")
    x0, y0, x1, y1 = face_box(landmarks, h, w, margin)
    if x1 - x0 < 1.0:
        x0, x1 = min(x0, w - 1.0), min(x0, w - 1.0) + 1.0
    if y1 - y0 < 1.0:
        y0, y1 = min(y0, h - 1.0), min(y0, h - 1.0) + 1.0
    if (x0, y0, x1, y1) == (0.0, 0.0, w, h) and (h, w) == (crop_size, crop_size):
        return FaceCrop(img.copy())
    steps = (np.arange(crop_size) + 0.5) / crop_size
    ys = y0 + steps * (y1 - y0) - 0.5
    xs = x0 + steps * (x1 - x0) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = np.empty((crop_size, crop_size, 3))
    for c in range(3):
        out[..., c] = ndimage.map_coordinates(img[..., c], [yy, xx], order=1, mode="nearest")
    return FaceCrop(np.clip(out, 0.0, 1.0))


def load_crop(index: DatasetIndex, entry: IndexEntry, crop_size: int, margin: float = DEFAULT_MARGIN) -> FaceCrop:
    frame = load_png(index.resolve(entry.image_path))
    landmarks = read_landmarks(index.resolve(entry.landmarks_path)) if entry.landmarks_path else None
    crop = crop_face(frame, landmarks, crop_size, margin)
    crop.video_id, crop.frame_idx, crop.label = entry.video_id, entry.frame_idx, entry.label
    return crop


@dataclass
class FrameSpan:
    """The selected frames of one video; ``shortfall`` marks fewer than requested."""

    crops: list[FaceCrop] = field(default_factory=list)
    shortfall: bool = False

    def __len__(self) -> int:
        return len(self.crops)

    def __iter__(self):
        return iter(self.crops)

    def __getitem__(self, i):
        return self.crops[i]


def sample_frames(
    index: DatasetIndex,
    video_id: str,
    span: int = DEFAULT_SPAN,
    crop_size: int = 64,
    offset: int = 0,
) -> FrameSpan:
    """Load ``span`` consecutive frames of ``video_id`` (ordered by frame
    index, starting ``offset`` frames in) as face crops."""
    if span < 1:
        raise ValueError("span must be >= 1")
    frames = index.frames_of(video_id)[offset:]
    chosen = frames[:span]
    if not chosen:
        raise UnknownVideo(f"{video_id} has no frames after offset {offset}")
    return FrameSpan([load_crop(index, e, crop_size) for e in chosen], shortfall=len(chosen) < span)
