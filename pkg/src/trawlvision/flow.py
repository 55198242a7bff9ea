"""Dense optical flow and the 14-channel temporal-stream input."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .dataio import VideoClip, sample_indices

FLOW_MAGIC = b"TVFL"
MAGNITUDE_CLIP = 8.0  # px/frame mapped to 255


@dataclass(frozen=True)
class FlowParams:
    levels: int = 3
    scale: float = 0.5
    window: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.1


def dense_flow(frame_a: np.ndarray, frame_b: np.ndarray, params: FlowParams = FlowParams()) -> np.ndarray:
    """H x W x 2 displacement (dx, dy) taking ``frame_a`` to ``frame_b``.

    Coarse-to-fine polynomial-expansion estimate (OpenCV's Farnebäck solver).
    """
    a = np.asarray(frame_a)
    b = np.asarray(frame_b)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"frames must be equal-size 2-D images, got {a.shape} and {b.shape}")
    a = a.astype(np.uint8, copy=False)
    b = b.astype(np.uint8, copy=False)
    flow = cv2.calcOpticalFlowFarneback(a, b, None, params.scale, params.levels, params.window,
                                        params.iterations, params.poly_n, params.poly_sigma, 0)
    return np.nan_to_num(flow, nan=0.0, posinf=0.0, neginf=0.0)


def flow_magnitude(flow: np.ndarray, rescale: bool = True) -> np.ndarray:
    """Per-pixel Euclidean norm; with ``rescale`` mapped to uint8 with 8 px/frame -> 255."""
    mag = np.hypot(flow[..., 0], flow[..., 1])
    if not rescale:
        return mag
    return np.rint(np.clip(mag / MAGNITUDE_CLIP, 0.0, 1.0) * 255.0).astype(np.uint8)


def pair_indices(length: int, n_pairs: int = 7) -> np.ndarray:
    """First-frame index of each sampled adjacent pair."""
    return sample_indices(length - 1, n_pairs)


def temporal_stack(clip: VideoClip | np.ndarray, n_pairs: int = 7,
                   params: FlowParams = FlowParams()) -> np.ndarray:
    """Interleaved [gray_0, |flow_0|, gray_1, |flow_1|, ...] uint8 stack of 2*n_pairs channels."""
    frames = clip.frames if isinstance(clip, VideoClip) else np.asarray(clip)
    if frames.shape[0] < n_pairs + 1:
        raise ValueError(f"temporal stack needs at least {n_pairs + 1} frames, clip has {frames.shape[0]}")
    out = np.empty((2 * n_pairs,) + frames.shape[1:], dtype=np.uint8)
    for k, i in enumerate(pair_indices(frames.shape[0], n_pairs)):
        out[2 * k] = frames[i]
        out[2 * k + 1] = flow_magnitude(dense_flow(frames[i], frames[i + 1], params))
    return out


def write_flow(path: str | Path, flow: np.ndarray) -> None:
    """Raw little-endian float32 dump behind a 16-byte header (magic, H, W, channels)."""
    h, w, c = flow.shape
    with open(path, "wb") as fh:
        fh.write(FLOW_MAGIC + struct.pack("<III", h, w, c))
        fh.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def read_flow(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != FLOW_MAGIC:
        raise ValueError(f"{path}: not a flow cache file")
    h, w, c = struct.unpack("<III", data[4:16])
    arr = np.frombuffer(data, dtype="<f4", offset=16)
    if arr.size != h * w * c:
        raise ValueError(f"{path}: truncated flow payload")
    return arr.reshape(h, w, c).astype(np.float32)
