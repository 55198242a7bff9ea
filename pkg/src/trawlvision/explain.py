"""Grad-CAM maps for the convolutional models and token-level Grad-CAM for the video transformer."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np
import torch
import torch.nn.functional as F
from matplotlib import colormaps
from torch import nn


@dataclass
class ActivationMap:
    values: np.ndarray          # H x W in [0, 1]
    target_class: int
    layer_name: str
    source: str = ""
    raw_mass: float = 0.0       # sum of the upsampled map before max-normalisation
    zero_gradient: bool = False

    @property
    def shape(self):
        return self.values.shape


def _normalise(cam: torch.Tensor) -> torch.Tensor:
    peak = cam.flatten(1).amax(dim=1).clamp_min(0)
    out = torch.zeros_like(cam)
    nz = peak > 0
    out[nz] = cam[nz] / peak[nz].view(-1, 1, 1)
    return out


def _capture(model: nn.Module, layer: str, run):
    """Run ``run()`` while recording the output of submodule ``layer``."""
    module = model.get_submodule(layer)
    store = {}

    def hook(_m, _inp, out):
        store["act"] = out

    handle = module.register_forward_hook(hook)
    try:
        result = run()
    finally:
        handle.remove()
    if "act" not in store:
        raise ValueError(f"layer {layer!r} was not used in the forward pass")
    return result, store["act"]


def _class_score(model, inputs, target_class):
    out = model(*inputs) if isinstance(inputs, tuple) else model(inputs)
    if out.dim() != 2 or out.shape[0] != 1:
        raise ValueError("explanations are computed for a single clip (batch of one)")
    return out[0, target_class]


def _maps_from(cam: torch.Tensor, size, target_class, layer, source, zero) -> list[ActivationMap]:
    up = F.interpolate(cam.unsqueeze(1), size=size, mode="bilinear", align_corners=False).squeeze(1)
    up = up.clamp_min(0)
    masses = up.flatten(1).sum(1)
    norm = _normalise(up)
    return [ActivationMap(norm[i].detach().cpu().numpy().astype(np.float64), target_class, layer,
                          f"{source}[{i}]" if source else str(i), float(masses[i]), zero)
            for i in range(norm.shape[0])]


def gradcam(model: nn.Module, inputs, target_class: int, layer: str | None = None,
            source: str = "") -> list[ActivationMap]:
    """Grad-CAM of ``target_class`` at ``layer`` (default: the model's final conv block).

    One map per feature-map batch entry at that layer: one per frame for the
    per-frame models, one per clip for the temporal stream.
    """
    layer = layer or getattr(model, "cam_layer", None)
    if layer is None:
        raise ValueError("no layer given and the model has no default cam_layer")
    model.eval()
    x = inputs if isinstance(inputs, tuple) else (inputs,)
    size = x[0].shape[-2:]
    with torch.enable_grad():
        score, act = _capture(model, layer, lambda: _class_score(model, inputs, target_class))
        if not isinstance(act, torch.Tensor) or act.dim() != 4:
            raise ValueError(f"layer {layer!r} does not produce spatial feature maps")
        (grad,) = torch.autograd.grad(score, act, allow_unused=True)
    if grad is None:
        grad = torch.zeros_like(act)
    zero = bool((grad == 0).all())
    weights = grad.mean(dim=(2, 3), keepdim=True)
    cam = F.relu((weights * act).sum(dim=1))
    return _maps_from(cam.detach(), size, target_class, layer, source, zero)


def transformer_map(model: nn.Module, inputs: torch.Tensor, target_class: int,
                    average: bool = False, source: str = "") -> list[ActivationMap]:
    """Token Grad-CAM on the last block's pre-spatial-attention norm, one map per frame.

    The class token is dropped; patch tokens are reshaped to the patch grid and
    upsampled to the frame size.  With ``average`` a single clip-level map
    (mean of the per-frame maps before normalisation) is returned instead.
    """
    config = getattr(model, "config", None)
    if config is None or not hasattr(model, "n_patches"):
        raise ValueError("transformer_map needs a patch-grid transformer")
    model.eval()
    b, t, h, w = inputs.shape
    n, g = model.n_patches, config.grid
    layer = model.cam_layer
    with torch.enable_grad():
        score, act = _capture(model, layer, lambda: _class_score(model, inputs, target_class))
        (grad,) = torch.autograd.grad(score, act, allow_unused=True)
    if grad is None:
        grad = torch.zeros_like(act)
    d = act.shape[-1]
    if act.shape[0] == b * t:      # divided attention: (T, 1 + N, D)
        a, gr = act[:, 1:], grad[:, 1:]
    else:                          # joint attention: (1, 1 + T*N, D)
        a, gr = act[:, 1:].reshape(t, n, d), grad[:, 1:].reshape(t, n, d)
    weights = gr.mean(dim=1, keepdim=True)
    cam = F.relu((weights * a).sum(dim=-1)).reshape(t, g, g).detach()
    if average:
        cam = cam.mean(dim=0, keepdim=True)
    return _maps_from(cam, (h, w), target_class, layer, source, bool((grad == 0).all()))


def region_mass(values: np.ndarray, mask: np.ndarray) -> float:
    """Share of the map's total mass inside ``mask`` (0 for an all-zero map)."""
    values = np.asarray(getattr(values, "values", values), dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if values.shape != mask.shape:
        raise ValueError(f"map {values.shape} and mask {mask.shape} differ in shape")
    total = values.sum()
    if total <= 0:
        return 0.0
    return float(values[mask].sum() / total)


def overlay(values: np.ndarray, frame: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """RGB uint8 blend of the jet-coloured map over the gray frame."""
    values = np.asarray(getattr(values, "values", values), dtype=np.float64)
    frame = np.asarray(frame)
    if values.shape != frame.shape[:2]:
        raise ValueError(f"map {values.shape} and frame {frame.shape} differ in size")
    heat = colormaps["jet"](np.clip(values, 0, 1))[..., :3] * 255.0
    base = frame[..., None].repeat(3, axis=-1) if frame.ndim == 2 else frame[..., :3]
    return np.clip(alpha * heat + (1 - alpha) * base, 0, 255).astype(np.uint8)


def save_map(amap: ActivationMap, path: str | Path) -> None:
    """8-bit PNG plus a ``.npy`` float sidecar."""
    path = Path(path)
    cv2.imwrite(str(path.with_suffix(".png")), np.rint(amap.values * 255).astype(np.uint8))
    np.save(path.with_suffix(".npy"), amap.values.astype(np.float32))


def save_overlay(rgb: np.ndarray, path: str | Path) -> None:
    cv2.imwrite(str(path), cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR))


def stack_masses(maps: Sequence[ActivationMap]) -> np.ndarray:
    return np.array([m.raw_mass for m in maps])
