"""Synthetic trawl-camera clips with controllable labels and plantable biases.

A frame is a scrolling band-limited noise seabed, a view-specific set of bright
laser lines, an optional low-contrast fish, sensor noise and a 7-segment
timestamp block in the top-left corner.  Every clip is a pure function of its
:class:`SceneSpec`.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .dataio import (CLASSES, MIN_FRAMES, N_VIEWS, Manifest, ManifestRow, VideoClip,
                     timestamp_box, write_clip_frames)

DEFAULT_FISH_CONTRAST = 0.15
LASER_TO_FISH = 4.0
LASER_JITTER_PX = 3.0

# Laser layouts per camera view, as (x0, y0, x1, y1) in fractions of width/height.
VIEW_GEOMETRIES: dict[int, tuple[tuple[float, float, float, float], ...]] = {
    1: ((0.10, 1.00, 0.50, 0.30), (0.90, 1.00, 0.50, 0.30)),
    2: ((0.00, 0.90, 0.30, 0.25), (0.70, 1.00, 0.30, 0.25)),
    3: ((0.30, 1.00, 0.70, 0.25), (1.00, 0.85, 0.70, 0.25)),
    4: ((0.00, 0.40, 1.00, 0.45), (0.00, 0.70, 1.00, 0.75)),
    5: ((0.00, 0.20, 1.00, 0.90), (0.10, 0.55, 0.90, 0.55)),
    6: ((1.00, 0.20, 0.00, 0.90), (0.20, 0.35, 0.80, 0.30), (0.50, 1.00, 0.55, 0.60)),
    7: ((0.00, 0.95, 0.50, 0.60), (1.00, 0.95, 0.50, 0.60), (0.50, 0.60, 0.50, 0.20)),
    8: ((0.30, 0.20, 0.25, 1.00), (0.70, 0.20, 0.75, 1.00)),
    9: ((0.00, 0.30, 0.60, 1.00), (0.40, 0.15, 1.00, 0.60)),
    10: ((0.00, 0.60, 1.00, 0.30), (0.00, 0.85, 1.00, 0.60), (0.35, 0.20, 0.65, 0.20)),
    11: ((0.20, 0.60, 1.00, 0.30), (0.20, 0.60, 1.00, 0.95)),
    12: ((0.80, 0.60, 0.00, 0.30), (0.80, 0.60, 0.00, 0.95)),
    13: ((0.15, 0.20, 0.85, 0.85), (0.85, 0.20, 0.15, 0.85)),
    14: ((0.00, 0.50, 1.00, 0.50), (0.50, 0.20, 0.50, 0.38), (0.10, 0.90, 0.90, 0.90)),
    15: ((0.50, 0.15, 0.10, 0.75), (0.50, 0.15, 0.90, 0.75), (0.10, 0.75, 0.90, 0.75)),
    16: ((0.60, 0.15, 0.20, 1.00), (0.90, 0.15, 0.60, 1.00), (0.00, 0.45, 0.35, 0.40),
         (0.65, 0.70, 1.00, 0.65)),
}

# day of the fake timestamp, indexed by the class the timestamp "encodes"
TIMESTAMP_DAYS = (12, 15, 18)

_SEGMENTS = {  # 7-segment encoding: a b c d e f g
    0: "abcdef", 1: "bc", 2: "abdeg", 3: "abcdg", 4: "bcfg",
    5: "acdfg", 6: "acdefg", 7: "abc", 8: "abcdefg", 9: "abcdfg",
}


@dataclass
class LaserSegment:
    x0: float
    y0: float
    x1: float
    y1: float
    intensity: float


@dataclass
class FishSpec:
    start: tuple[float, float]          # (x, y) pixels
    size: float                         # body length in pixels
    contrast: float = DEFAULT_FISH_CONTRAST
    trajectory: str = "straight"        # "straight" or "turn-away"
    heading: float = 0.0                # radians, image coordinates
    speed: float = 1.5                  # pixels per frame
    turn_frame: int | None = None       # first frame after the reversal (turn-away only)


@dataclass
class SceneSpec:
    view_id: int
    class_label: str
    frame_count: int
    image_size: tuple[int, int] = (64, 64)
    laser_geometry: list[LaserSegment] = field(default_factory=list)
    background_drift: tuple[float, float] = (0.0, 0.5)
    fish: FishSpec | None = None
    timestamp_enabled: bool = True
    timestamp: tuple[int, int, int] = (12, 0, 0)   # day, hour, minute
    noise_sigma: float = 4.0
    rng_seed: int = 0
    laser_width: float = 0.9
    background_mean: float = 50.0
    background_std: float = 16.0

    def validate(self) -> None:
        h, w = self.image_size
        if h < 64 or w < 64:
            raise ValueError(f"image_size must be at least 64x64, got {self.image_size}")
        if not 1 <= self.view_id <= N_VIEWS:
            raise ValueError(f"view_id {self.view_id} outside [1, {N_VIEWS}]")
        if self.class_label not in CLASSES:
            raise ValueError(f"unknown class {self.class_label!r}")
        if self.frame_count < MIN_FRAMES:
            raise ValueError(f"frame_count {self.frame_count} < {MIN_FRAMES}")
        for seg in self.laser_geometry:
            if not 0 <= seg.intensity <= 255:
                raise ValueError(f"laser intensity {seg.intensity} outside [0, 255]")
        if (self.class_label == "NF") != (self.fish is None):
            raise ValueError("class NF must have no fish and NR/R must have one")
        if self.fish is not None:
            fx, fy = self.fish.start
            if not (0 <= fx < w and 0 <= fy < h):
                raise ValueError(f"fish start {self.fish.start} outside the {h}x{w} frame")
            if not 0 <= self.fish.contrast <= 1:
                raise ValueError("fish contrast must lie in [0, 1]")
            want = "turn-away" if self.class_label == "R" else "straight"
            if self.fish.trajectory != want:
                raise ValueError(f"class {self.class_label} requires a {want} trajectory")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        d = json.loads(text)
        d["image_size"] = tuple(d["image_size"])
        d["background_drift"] = tuple(d["background_drift"])
        d["timestamp"] = tuple(d["timestamp"])
        d["laser_geometry"] = [LaserSegment(**s) for s in d["laser_geometry"]]
        if d["fish"] is not None:
            d["fish"] = FishSpec(**{**d["fish"], "start": tuple(d["fish"]["start"])})
        return cls(**d)


@dataclass
class BiasConfig:
    """Planted correlations between nuisance factors and the class label.

    Each correlation is the probability that a clip's class equals the class
    designated by its group; 1/3 plants nothing for three balanced classes.
    """
    view_class_correlation: float = 1 / 3
    padding_class_correlation: float | None = None
    timestamp_class_correlation: float = 1 / 3
    class_length_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    short_class: str = "R"
    padding_reference: int = 40
    view_blocks: bool = True

    def validate(self) -> None:
        for name in ("view_class_correlation", "padding_class_correlation", "timestamp_class_correlation"):
            rho = getattr(self, name)
            if rho is not None and not 0.0 <= rho <= 1.0:
                raise ValueError(f"{name}={rho} outside [0, 1]")
        if self.short_class not in CLASSES:
            raise ValueError(f"unknown short_class {self.short_class!r}")
        if len(self.class_length_offset) != len(CLASSES):
            raise ValueError("class_length_offset needs one entry per class")
        if self.padding_class_correlation is not None and self.padding_reference <= MIN_FRAMES:
            raise ValueError(f"padding_reference {self.padding_reference} leaves no room for clips shorter "
                             f"than it (minimum clip length {MIN_FRAMES}): nothing gets padded")


# ---------------------------------------------------------------------------
# rendering

def laser_geometry_for_view(view_id: int, image_size=(64, 64), seed: int = 0,
                            intensity: float = LASER_TO_FISH * DEFAULT_FISH_CONTRAST * 255,
                            jitter: float = LASER_JITTER_PX) -> list[LaserSegment]:
    """Fixed layout of ``view_id`` with per-clip endpoint jitter drawn from ``seed``."""
    if view_id not in VIEW_GEOMETRIES:
        raise ValueError(f"view_id {view_id} outside [1, {N_VIEWS}]")
    h, w = image_size
    rng = np.random.default_rng([seed, 7919])
    segs = []
    for x0, y0, x1, y1 in VIEW_GEOMETRIES[view_id]:
        d = rng.uniform(-jitter, jitter, size=4)
        segs.append(LaserSegment(x0 * (w - 1) + d[0], y0 * (h - 1) + d[1],
                                 x1 * (w - 1) + d[2], y1 * (h - 1) + d[3], float(intensity)))
    return segs


def band_limited_noise(shape, rng: np.random.Generator, cutoff: float = 0.08) -> np.ndarray:
    """Periodic zero-mean unit-variance noise with a Gaussian spectral envelope."""
    h, w = shape
    white = rng.standard_normal(shape)
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    envelope = np.exp(-(fx ** 2 + fy ** 2) / (2 * cutoff ** 2))
    tex = np.real(np.fft.ifft2(np.fft.fft2(white) * envelope))
    tex -= tex.mean()
    return tex / (tex.std() + 1e-12)


def _background_texture(spec: SceneSpec) -> np.ndarray:
    rng = np.random.default_rng([spec.rng_seed, 101])
    h, w = spec.image_size
    tex = band_limited_noise((h, w), rng) + 0.4 * band_limited_noise((h, w), rng, cutoff=0.25)
    # a few fish-sized bright clumps ("objects easily mistaken for fish")
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        dy = (yy - cy + h / 2) % h - h / 2
        dx = (xx - cx + w / 2) % w - w / 2
        r = rng.uniform(1.5, 3.0)
        tex += rng.uniform(1.0, 2.0) * np.exp(-(dx ** 2 + dy ** 2) / (2 * r ** 2))
    return spec.background_mean + spec.background_std * tex


def _segment_distance(xx, yy, seg: LaserSegment) -> np.ndarray:
    px, py = seg.x1 - seg.x0, seg.y1 - seg.y0
    norm2 = px * px + py * py
    if norm2 == 0:
        return np.hypot(xx - seg.x0, yy - seg.y0)
    t = np.clip(((xx - seg.x0) * px + (yy - seg.y0) * py) / norm2, 0.0, 1.0)
    return np.hypot(xx - (seg.x0 + t * px), yy - (seg.y0 + t * py))


def render_lasers(spec: SceneSpec) -> np.ndarray:
    """Additive laser layer (float, gray levels)."""
    h, w = spec.image_size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    layer = np.zeros((h, w))
    for seg in spec.laser_geometry:
        d = _segment_distance(xx, yy, seg)
        layer = np.maximum(layer, seg.intensity * np.exp(-d ** 2 / (2 * spec.laser_width ** 2)))
    return layer


def fish_positions(fish: FishSpec, frame_count: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame (x, y) centres and headings; a turn-away fish reverses at ``turn_frame``."""
    v = fish.speed * np.array([math.cos(fish.heading), math.sin(fish.heading)])
    turn = fish.turn_frame if fish.trajectory == "turn-away" else None
    step = np.tile(v, (frame_count, 1))
    heading = np.full(frame_count, fish.heading)
    if turn is not None:
        step[turn:] = -v
        heading[turn:] = fish.heading + math.pi
    pos = np.array(fish.start, dtype=float) + np.vstack([np.zeros(2), np.cumsum(step[1:], axis=0)])
    return pos, heading


def _fish_profile(shape, centre, heading, size) -> np.ndarray:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xx - centre[0], yy - centre[1]
    c, s = math.cos(heading), math.sin(heading)
    along = dx * c + dy * s
    across = -dx * s + dy * c
    sa = max(size / 4.0, 0.7)
    sc = max(size / 10.0, 0.6)
    return np.exp(-0.5 * ((along / sa) ** 2 + (across / sc) ** 2))


def _digit_mask(digit: int, ch: int, cw: int) -> np.ndarray:
    gw = max(2, cw - 1)
    m = np.zeros((ch, cw), dtype=bool)
    top, mid, bot = 0, (ch - 1) // 2, ch - 1
    left, right = 0, gw - 1
    segs = _SEGMENTS[digit]
    if "a" in segs: m[top, left:right + 1] = True
    if "g" in segs: m[mid, left:right + 1] = True
    if "d" in segs: m[bot, left:right + 1] = True
    if "f" in segs: m[top:mid + 1, left] = True
    if "b" in segs: m[top:mid + 1, right] = True
    if "e" in segs: m[mid:bot + 1, left] = True
    if "c" in segs: m[mid:bot + 1, right] = True
    return m


def render_timestamp(frame: np.ndarray, value: tuple[int, int, int]) -> np.ndarray:
    """Stamp "DDHHMM" as white 7-segment glyphs on a black block, in place."""
    h, w = frame.shape
    y0, y1, x0, x1 = timestamp_box(h, w)
    frame[y0:y1, x0:x1] = 0
    day, hour, minute = value
    digits = [int(c) for c in f"{day % 100:02d}{hour % 24:02d}{minute % 60:02d}"]
    cw = (x1 - x0) // len(digits)
    ch = (y1 - y0) - 2
    for i, dg in enumerate(digits):
        m = _digit_mask(dg, ch, cw)
        frame[y0 + 1:y0 + 1 + ch, x0 + i * cw:x0 + (i + 1) * cw][m] = 220
    return frame


def generate_clip(spec: SceneSpec, clip_id: str = "clip", capture_index: int = 0) -> VideoClip:
    spec.validate()
    h, w = spec.image_size
    tex = _background_texture(spec)
    lasers = render_lasers(spec)
    noise_rng = np.random.default_rng([spec.rng_seed, 202])
    if spec.fish is not None:
        pos, heading = fish_positions(spec.fish, spec.frame_count)
    frames = np.empty((spec.frame_count, h, w), dtype=np.uint8)
    dx, dy = spec.background_drift
    for t in range(spec.frame_count):
        bg = ndimage.shift(tex, (t * dy, t * dx), order=1, mode="grid-wrap")
        img = bg + lasers
        if spec.fish is not None and spec.fish.contrast > 0:
            img = img + spec.fish.contrast * 255.0 * _fish_profile((h, w), pos[t], heading[t], spec.fish.size)
        img = img + spec.noise_sigma * noise_rng.standard_normal((h, w))
        frame = np.clip(np.rint(img), 0, 255).astype(np.uint8)
        if spec.timestamp_enabled:
            render_timestamp(frame, spec.timestamp)
        frames[t] = frame
    return VideoClip(clip_id, frames, spec.class_label, spec.view_id, capture_index)


def scene_masks(spec: SceneSpec, laser_threshold: float = 0.3,
                fish_threshold: float = 0.25) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth (laser, fish) boolean masks, each T x H x W."""
    h, w = spec.image_size
    lasers = render_lasers(spec)
    peak = max((s.intensity for s in spec.laser_geometry), default=0.0)
    laser = lasers > laser_threshold * peak if peak > 0 else np.zeros((h, w), bool)
    laser_masks = np.broadcast_to(laser, (spec.frame_count, h, w)).copy()
    fish_masks = np.zeros((spec.frame_count, h, w), dtype=bool)
    if spec.fish is not None and spec.fish.contrast > 0:
        pos, heading = fish_positions(spec.fish, spec.frame_count)
        for t in range(spec.frame_count):
            fish_masks[t] = _fish_profile((h, w), pos[t], heading[t], spec.fish.size) > fish_threshold
    return laser_masks, fish_masks


def laser_mask(spec: SceneSpec, threshold: float = 60.0) -> np.ndarray:
    """Pixels where the rendered laser layer alone exceeds ``threshold`` gray levels."""
    return render_lasers(spec) > threshold


# ---------------------------------------------------------------------------
# scene sampling

def make_scene_spec(view_id: int, class_label: str, frame_count: int, seed: int,
                    image_size=(64, 64), timestamp=(12, 0, 0), timestamp_enabled=True,
                    fish_contrast: float = DEFAULT_FISH_CONTRAST,
                    laser_to_fish: float = LASER_TO_FISH, noise_sigma: float = 4.0) -> SceneSpec:
    """Draw a random scene of the given view and class; fully determined by ``seed``."""
    rng = np.random.default_rng([seed, 31])
    h, w = image_size
    intensity = min(255.0, laser_to_fish * DEFAULT_FISH_CONTRAST * 255.0)
    drift_angle = rng.uniform(0, 2 * math.pi)
    drift = (float(0.6 * math.cos(drift_angle)), float(0.6 * math.sin(drift_angle)))
    fish = None
    if class_label != "NF":
        heading = float(rng.uniform(0, 2 * math.pi))
        speed = float(rng.uniform(1.0, 2.0))
        trajectory = "turn-away" if class_label == "R" else "straight"
        # start so that the straight-line path stays mostly in view
        cx, cy = w / 2, h / 2
        back = 0.5 * speed * frame_count * (0.5 if trajectory == "turn-away" else 1.0)
        sx = cx - back * math.cos(heading) + rng.uniform(-0.15, 0.15) * w
        sy = cy - back * math.sin(heading) + rng.uniform(-0.15, 0.15) * h
        sx = float(np.clip(sx, 2, w - 3))
        sy = float(np.clip(sy, 2, h - 3))
        turn = int(rng.integers(frame_count // 3, max(frame_count // 3 + 1, 2 * frame_count // 3)))
        fish = FishSpec((sx, sy), float(rng.uniform(0.1, 0.16) * w), fish_contrast, trajectory,
                        heading, speed, max(turn, 1) if trajectory == "turn-away" else None)
    return SceneSpec(
        view_id=view_id, class_label=class_label, frame_count=frame_count, image_size=tuple(image_size),
        laser_geometry=laser_geometry_for_view(view_id, image_size, seed, intensity),
        background_drift=drift, fish=fish, timestamp_enabled=timestamp_enabled,
        timestamp=tuple(int(v) for v in timestamp), noise_sigma=noise_sigma, rng_seed=seed,
    )


def _apportion(total: int, weights: Sequence[float]) -> np.ndarray:
    """Largest-remainder integer split of ``total`` proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    if total == 0 or w.sum() == 0:
        return np.zeros(len(w), dtype=int)
    raw = total * w / w.sum()
    out = np.floor(raw).astype(int)
    rem = total - out.sum()
    order = np.argsort(-(raw - out), kind="stable")
    out[order[:rem]] += 1
    return out


def view_majorities(seed: int) -> dict[int, str]:
    """Designated majority class of each camera view."""
    rng = np.random.default_rng([seed, 11])
    pattern = [CLASSES[i % len(CLASSES)] for i in range(N_VIEWS)]
    perm = rng.permutation(N_VIEWS)
    return {v + 1: pattern[perm[v]] for v in range(N_VIEWS)}


def assign_views(labels: Sequence[str], rho: float, seed: int) -> tuple[np.ndarray, dict[int, str]]:
    """View id per clip so that each view holds a ``rho`` share of its majority class."""
    rng = np.random.default_rng([seed, 13])
    majority = view_majorities(seed)
    labels = np.asarray(labels)
    counts = {c: int((labels == c).sum()) for c in CLASSES}
    groups = {c: [v for v in sorted(majority) if majority[v] == c] for c in CLASSES}
    # flows[src][dst]: clips of class src placed in views whose majority is dst
    flows = {c: {} for c in CLASSES}
    for c in CLASSES:
        own = int(round(rho * counts[c]))
        flows[c][c] = own
        others = [d for d in CLASSES if d != c]
        split = _apportion(counts[c] - own, [counts[d] for d in others])
        for d, n in zip(others, split):
            flows[c][d] = int(n)
    view_of = np.zeros(len(labels), dtype=int)
    perms = {c: rng.permutation(np.flatnonzero(labels == c)) for c in CLASSES}
    cursor = {c: 0 for c in CLASSES}
    group_weights = {d: rng.dirichlet(np.full(len(groups[d]), 6.0)) for d in CLASSES}
    for dst in CLASSES:
        views = groups[dst]
        for src in CLASSES:
            n = flows[src][dst]
            chunk = perms[src][cursor[src]:cursor[src] + n]
            cursor[src] += n
            per_view = _apportion(n, group_weights[dst])
            pos = 0
            for v, k in zip(views, per_view):
                view_of[chunk[pos:pos + k]] = v
                pos += k
    return view_of, majority


def _draw_length(rng, mean_extra: float, lo: int, hi: int, max_tries: int = 200) -> int:
    """Frame count ~ 8 + Gamma(2.2, mean_extra/2.2), restricted to [lo, hi]."""
    scale = max(mean_extra, 0.5) / 2.2
    for _ in range(max_tries):
        t = MIN_FRAMES + int(round(rng.gamma(2.2, scale)))
        if lo <= t <= hi:
            return t
    return int(rng.integers(lo, hi + 1))


def draw_frame_counts(labels: Sequence[str], bias: BiasConfig, seed: int,
                      base_mean: float = 30.0, max_frames: int = 80) -> np.ndarray:
    """Per-clip frame counts in [8, max_frames] honouring the length biases."""
    rng = np.random.default_rng([seed, 17])
    labels = list(labels)
    bias.validate()
    ref = bias.padding_reference
    rho = bias.padding_class_correlation
    prior = labels.count(bias.short_class) / max(len(labels), 1)
    out = np.zeros(len(labels), dtype=int)
    for i, c in enumerate(labels):
        extra = base_mean - MIN_FRAMES + bias.class_length_offset[CLASSES.index(c)]
        if rho is None:
            out[i] = _draw_length(rng, extra, MIN_FRAMES, max_frames)
            continue
        if c == bias.short_class:
            p_short = rho
        else:
            p_short = (1 - rho) * prior / (1 - prior) if prior < 1 else 0.0
        if rng.random() < min(p_short, 1.0):
            out[i] = _draw_length(rng, extra, MIN_FRAMES, ref - 1)
        else:
            out[i] = _draw_length(rng, extra, ref, max_frames)
    return out


def draw_timestamps(labels: Sequence[str], rho: float, seed: int) -> list[tuple[int, int, int]]:
    """Fake (day, hour, minute); day and minute-tens encode a class that equals the label w.p. rho."""
    rng = np.random.default_rng([seed, 19])
    out = []
    for c in labels:
        k = CLASSES.index(c)
        if rng.random() >= rho:
            k = int(rng.choice([j for j in range(len(CLASSES)) if j != k]))
        out.append((TIMESTAMP_DAYS[k], int(rng.integers(0, 24)), 20 * k + int(rng.integers(0, 20))))
    return out


def generate_dataset(out_dir: str | Path, n_per_class: Sequence[int] = (200, 214, 210),
                     bias: BiasConfig | None = None, seed: int = 0, image_size=(64, 64),
                     timestamp_enabled: bool = True, write_masks: bool = False,
                     fish_contrast: float = DEFAULT_FISH_CONTRAST) -> Manifest:
    """Render a labelled dataset under ``out_dir`` and return its manifest.

    Layout: ``clips/<id>/frame_%04d.png`` plus ``scene.json`` per clip and
    ``manifest.csv`` at the top level.
    """
    bias = bias or BiasConfig()
    bias.validate()
    if len(n_per_class) != len(CLASSES):
        raise ValueError(f"n_per_class needs one count per class {CLASSES}")
    if any(n < 0 for n in n_per_class) or sum(n_per_class) == 0:
        raise ValueError("class counts must be non-negative and not all zero")
    out_dir = Path(out_dir)
    (out_dir / "clips").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([seed, 3])
    labels = [c for c, n in zip(CLASSES, n_per_class) for _ in range(n)]
    labels = [labels[i] for i in rng.permutation(len(labels))]
    views, _ = assign_views(labels, bias.view_class_correlation, seed)
    lengths = draw_frame_counts(labels, bias, seed)
    stamps = draw_timestamps(labels, bias.timestamp_class_correlation, seed)

    # capture order: contiguous blocks per view, visited in random order
    if bias.view_blocks:
        view_order = {v: i for i, v in enumerate(rng.permutation(np.arange(1, N_VIEWS + 1)))}
        jitter = rng.random(len(labels))
        order = sorted(range(len(labels)), key=lambda i: (view_order[views[i]], jitter[i]))
    else:
        order = list(rng.permutation(len(labels)))

    rows = []
    for cap, i in enumerate(order):
        clip_id = f"c{cap:05d}"
        spec = make_scene_spec(int(views[i]), labels[i], int(lengths[i]), seed=seed * 100003 + cap,
                               image_size=image_size, timestamp=stamps[i],
                               timestamp_enabled=timestamp_enabled, fish_contrast=fish_contrast)
        clip = generate_clip(spec, clip_id, cap)
        rel = Path("clips") / clip_id
        write_clip_frames(clip, out_dir / rel)
        (out_dir / rel / "scene.json").write_text(spec.to_json())
        if write_masks:
            lm, fm = scene_masks(spec)
            np.savez_compressed(out_dir / rel / "masks.npz", laser=lm, fish=fm)
        rows.append(ManifestRow(clip_id, labels[i], int(views[i]), cap, int(lengths[i]), rel.as_posix()))
    manifest = Manifest(rows, out_dir)
    manifest.write_csv(out_dir / "manifest.csv")
    return manifest


def read_scene_spec(dataset_root: str | Path, clip_id: str) -> SceneSpec:
    return SceneSpec.from_json((Path(dataset_root) / "clips" / clip_id / "scene.json").read_text())
