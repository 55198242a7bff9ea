"""Clip -> model-input tensors, shared by training, evaluation and explanation."""
from __future__ import annotations

import numpy as np
import torch

from ..dataio import VideoClip, crop_timestamp, fit_length, horizontal_flip, resize_frames, sample_frames_uniform
from ..flow import temporal_stack
from .config import ModelConfig


def preprocess_frames(clip: VideoClip, config: ModelConfig, flip: bool = False) -> VideoClip:
    """Timestamp crop, resize, optional pad/truncate to ``seq_len`` and flip."""
    frames = clip.frames
    if config.crop_timestamp:
        frames = crop_timestamp(frames)
    frames = resize_frames(frames, config.image_size)
    out = clip.replace_frames(frames)
    if config.seq_len is not None:
        out = fit_length(out, config.seq_len)
    if flip:
        out = out.replace_frames(horizontal_flip(out.frames))
    return out


def spatial_input(clip: VideoClip, config: ModelConfig, flip: bool = False) -> torch.Tensor:
    frames = sample_frames_uniform(preprocess_frames(clip, config, flip), config.frames_per_video)
    return torch.from_numpy(frames.astype(np.float32) / 255.0)


def temporal_input(clip: VideoClip, config: ModelConfig, flip: bool = False) -> torch.Tensor:
    stack = temporal_stack(preprocess_frames(clip, config, flip), config.n_pairs)
    return torch.from_numpy(stack.astype(np.float32) / 255.0)


def clip_input(clip: VideoClip, config: ModelConfig, flip: bool = False):
    """Model input for one clip; a (spatial, temporal) pair for the two-stream model."""
    arch = config.architecture
    if arch == "temporal":
        return temporal_input(clip, config, flip)
    if arch == "two_stream":
        return spatial_input(clip, config, flip), temporal_input(clip, config, flip)
    return spatial_input(clip, config, flip)


def padding_mask(clip: VideoClip, config: ModelConfig) -> np.ndarray:
    """Which of the sampled frames are zero padding."""
    length = config.seq_len if config.seq_len is not None else clip.frame_count
    idx = (np.arange(config.frames_per_video) * length) // config.frames_per_video
    return idx >= min(clip.frame_count, length)
