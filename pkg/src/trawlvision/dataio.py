"""Clip containers, manifests, preprocessing and split construction."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import cv2
import numpy as np

CLASSES = ("NF", "NR", "R")
CLASS_INDEX = {name: i for i, name in enumerate(CLASSES)}
N_VIEWS = 16
MIN_FRAMES = 8

# per-class (train, val, test) counts, one row per class in CLASSES order
REFERENCE_SPLIT_COUNTS = ((144, 36, 20), (154, 39, 21), (151, 38, 21))

MANIFEST_HEADER = ("clip_id", "label", "view_id", "capture_index", "frame_count", "path")

# fraction of frame height/width occupied by the imprinted timestamp
TIMESTAMP_FRACTION = (0.12, 0.30)


@dataclass
class VideoClip:
    clip_id: str
    frames: np.ndarray
    label: str
    view_id: int
    capture_index: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 3:
            raise ValueError(f"frames must be T x H x W, got shape {self.frames.shape}")
        if self.label not in CLASS_INDEX:
            raise ValueError(f"unknown label {self.label!r}")

    @property
    def frame_count(self) -> int:
        return int(self.frames.shape[0])

    @property
    def label_index(self) -> int:
        return CLASS_INDEX[self.label]

    def replace_frames(self, frames: np.ndarray, **meta) -> "VideoClip":
        return VideoClip(self.clip_id, frames, self.label, self.view_id,
                         self.capture_index, {**self.meta, **meta})


@dataclass(frozen=True)
class ManifestRow:
    clip_id: str
    label: str
    view_id: int
    capture_index: int
    frame_count: int
    path: str


class Manifest:
    """Clip table kept sorted by capture index."""

    def __init__(self, rows: Iterable[ManifestRow], root: str | Path | None = None):
        self.rows = sorted(rows, key=lambda r: r.capture_index)
        self.root = Path(root) if root is not None else None
        ids = [r.clip_id for r in self.rows]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate clip_id in manifest")
        idx = [r.capture_index for r in self.rows]
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate capture_index in manifest")
        self._by_id = {r.clip_id: r for r in self.rows}

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __getitem__(self, clip_id: str) -> ManifestRow:
        return self._by_id[clip_id]

    def __contains__(self, clip_id):
        return clip_id in self._by_id

    def class_totals(self) -> dict[str, int]:
        totals = {c: 0 for c in CLASSES}
        for r in self.rows:
            totals[r.label] += 1
        return totals

    def subset(self, labels: Sequence[str]) -> "Manifest":
        return Manifest([r for r in self.rows if r.label in labels], self.root)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(MANIFEST_HEADER)
            for r in self.rows:
                writer.writerow([r.clip_id, r.label, r.view_id, r.capture_index, r.frame_count, r.path])

    @classmethod
    def read_csv(cls, path: str | Path, root: str | Path | None = None) -> "Manifest":
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != MANIFEST_HEADER:
                raise ValueError(f"bad manifest header: {reader.fieldnames}")
            rows = [
                ManifestRow(d["clip_id"], d["label"], int(d["view_id"]), int(d["capture_index"]),
                            int(d["frame_count"]), d["path"])
                for d in reader
            ]
        for r in rows:
            if r.label not in CLASS_INDEX:
                raise ValueError(f"bad label {r.label!r} for clip {r.clip_id}")
        return cls(rows, root if root is not None else path.parent)


@dataclass
class SplitSpec:
    split_id: int
    train: list[str]
    val: list[str]
    test: list[str]

    def __post_init__(self):
        a, b, c = set(self.train), set(self.val), set(self.test)
        if a & b or a & c or b & c:
            raise ValueError(f"split {self.split_id}: subsets overlap")

    def subset(self, name: str) -> list[str]:
        if name not in ("train", "val", "test"):
            raise ValueError(f"unknown subset {name!r}")
        return getattr(self, name)

    def to_json(self) -> str:
        return json.dumps({"split_id": self.split_id, "train": self.train,
                           "val": self.val, "test": self.test}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SplitSpec":
        d = json.loads(text)
        return cls(int(d["split_id"]), list(d["train"]), list(d["val"]), list(d["test"]))


# ---------------------------------------------------------------------------
# frame-level preprocessing

def timestamp_box(height: int, width: int) -> tuple[int, int, int, int]:
    """(y0, y1, x0, x1) of the region holding the imprinted timestamp."""
    return 0, math.ceil(TIMESTAMP_FRACTION[0] * height), 0, math.ceil(TIMESTAMP_FRACTION[1] * width)


def crop_timestamp(frame: np.ndarray, crop_box: tuple[int, int, int, int] | None = None) -> np.ndarray:
    """Zero the timestamp region; the frame keeps its size.

    Works on a single frame or on a T x H x W stack.
    """
    frame = np.asarray(frame)
    h, w = frame.shape[-2:]
    y0, y1, x0, x1 = crop_box if crop_box is not None else timestamp_box(h, w)
    if not (0 <= y0 < y1 <= h and 0 <= x0 < x1 <= w):
        raise ValueError(f"crop box {(y0, y1, x0, x1)} outside frame {h}x{w}")
    out = frame.copy()
    out[..., y0:y1, x0:x1] = 0
    return out


def sample_indices(length: int, n: int) -> np.ndarray:
    if n < 1 or length < 1:
        raise ValueError("need n >= 1 and a non-empty clip")
    return (np.arange(n) * length) // n


def sample_frames_uniform(clip: VideoClip | np.ndarray, n: int) -> np.ndarray:
    """Pick n frames at floor(k*T/n), k = 0..n-1."""
    frames = clip.frames if isinstance(clip, VideoClip) else np.asarray(clip)
    return frames[sample_indices(frames.shape[0], n)]


def pad_clip(clip: VideoClip, target_len: int) -> VideoClip:
    t = clip.frame_count
    if target_len < t:
        raise ValueError(f"target_len {target_len} shorter than clip ({t} frames); truncate explicitly")
    n_pad = target_len - t
    pad = np.zeros((n_pad,) + clip.frames.shape[1:], dtype=clip.frames.dtype)
    return clip.replace_frames(np.concatenate([clip.frames, pad]), n_padding=n_pad)


def truncate_clip(clip: VideoClip, max_len: int) -> VideoClip:
    """Keep the first max_len frames."""
    if max_len < 1:
        raise ValueError("max_len must be positive")
    if clip.frame_count <= max_len:
        return clip
    return clip.replace_frames(clip.frames[:max_len], n_truncated=clip.frame_count - max_len)


def fit_length(clip: VideoClip, seq_len: int) -> VideoClip:
    """Truncate (keep-first) or zero-pad to exactly seq_len frames."""
    clip = truncate_clip(clip, seq_len)
    return pad_clip(clip, seq_len)


def horizontal_flip(frames: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(frames)[..., ::-1])


def resize_frames(frames: np.ndarray, size: int | tuple[int, int]) -> np.ndarray:
    if isinstance(size, int):
        size = (size, size)
    if frames.shape[-2:] == tuple(size):
        return frames
    h, w = size
    interp = cv2.INTER_AREA if h < frames.shape[-2] else cv2.INTER_LINEAR
    return np.stack([cv2.resize(f, (w, h), interpolation=interp) for f in frames])


# ---------------------------------------------------------------------------
# splits

def scaled_counts(class_totals: Sequence[int]) -> tuple[tuple[int, int, int], ...]:
    """Per-class (train, val, test) counts in the proportions of the reference split."""
    out = []
    for total, ref in zip(class_totals, REFERENCE_SPLIT_COUNTS):
        ref_total = sum(ref)
        val = round(total * ref[1] / ref_total)
        test = round(total * ref[2] / ref_total)
        out.append((total - val - test, val, test))
    return tuple(out)


def make_splits(manifest: Manifest, n_splits: int = 10,
                counts: Sequence[Sequence[int]] = REFERENCE_SPLIT_COUNTS, seed: int = 0) -> list[SplitSpec]:
    """Random stratified partitions with ids 0..n_splits.

    Split 0 is the tuning split; 1..n_splits are the evaluation splits.
    ``counts`` lists (train, val, test) per class in CLASSES order; classes with a
    zero row are left out entirely.
    """
    if len(counts) != len(CLASSES):
        raise ValueError(f"counts needs one row per class {CLASSES}")
    by_class = {c: [r.clip_id for r in manifest if r.label == c] for c in CLASSES}
    for c, row in zip(CLASSES, counts):
        if len(row) != 3 or min(row) < 0:
            raise ValueError(f"bad counts row for {c}: {row}")
        if sum(row) > len(by_class[c]):
            raise ValueError(f"class {c}: needs {sum(row)} clips, manifest has {len(by_class[c])}")
    splits = []
    for split_id in range(n_splits + 1):
        rng = np.random.default_rng([seed, split_id])
        parts = {"train": [], "val": [], "test": []}
        for c, (n_tr, n_va, n_te) in zip(CLASSES, counts):
            ids = rng.permutation(by_class[c])
            parts["train"] += list(ids[:n_tr])
            parts["val"] += list(ids[n_tr:n_tr + n_va])
            parts["test"] += list(ids[n_tr + n_va:n_tr + n_va + n_te])
        order = {r.clip_id: r.capture_index for r in manifest}
        splits.append(SplitSpec(split_id, *(sorted(map(str, parts[k]), key=order.__getitem__)
                                            for k in ("train", "val", "test"))))
    return splits


def write_splits(splits: Sequence[SplitSpec], directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in splits:
        p = directory / f"split_{s.split_id:02d}.json"
        p.write_text(s.to_json())
        paths.append(p)
    return paths


def read_split(path: str | Path) -> SplitSpec:
    return SplitSpec.from_json(Path(path).read_text())


# ---------------------------------------------------------------------------
# clip storage

def write_clip_frames(clip: VideoClip, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(clip.frames):
        cv2.imwrite(str(directory / f"frame_{i:04d}.png"), frame)


def read_clip_frames(directory: str | Path, frame_count: int | None = None) -> np.ndarray:
    directory = Path(directory)
    files = sorted(directory.glob("frame_*.png"))
    if frame_count is not None and len(files) != frame_count:
        raise ValueError(f"{directory}: expected {frame_count} frames, found {len(files)}")
    if not files:
        raise ValueError(f"{directory}: no frames")
    return np.stack([cv2.imread(str(f), cv2.IMREAD_GRAYSCALE) for f in files])


class ClipStore:
    """Lazy, caching reader of the clips listed in a manifest."""

    def __init__(self, manifest: Manifest, root: str | Path | None = None, cache: bool = True):
        self.manifest = manifest
        self.root = Path(root) if root is not None else manifest.root
        if self.root is None:
            raise ValueError("ClipStore needs a dataset root")
        self._cache: dict[str, VideoClip] | None = {} if cache else None

    def __len__(self):
        return len(self.manifest)

    def get(self, clip_id: str) -> VideoClip:
        if self._cache is not None and clip_id in self._cache:
            return self._cache[clip_id]
        row = self.manifest[clip_id]
        frames = read_clip_frames(self.root / row.path, row.frame_count)
        clip = VideoClip(row.clip_id, frames, row.label, row.view_id, row.capture_index)
        if self._cache is not None:
            self._cache[clip_id] = clip
        return clip

    def put(self, clip: VideoClip) -> None:
        if self._cache is not None:
            self._cache[clip.clip_id] = clip
