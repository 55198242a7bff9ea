"""Binary checkpoints: named little-endian float32 arrays plus a JSON config sidecar.

Layout of the ``.bin`` file::

    b"TVCK" | u32 version | u32 n_entries
    per entry: u16 name_len | name (utf-8) | u8 ndim | u32 dims[ndim] | f32 data
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .config import ModelConfig
from .networks import build_model

MAGIC = b"TVCK"
VERSION = 1


def save_state(state: dict[str, torch.Tensor], path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(state)))
        for name, t in state.items():
            arr = t.detach().cpu().numpy()
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_state(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint")
    version, n = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    out = {}
    for _ in range(n):
        (ln,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + ln].decode()
        pos += ln
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        out[name] = np.frombuffer(data, "<f4", size, pos).reshape(shape).copy()
        pos += 4 * size
    return out


def save_checkpoint(model: nn.Module, config: ModelConfig, path: str | Path, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_state(model.state_dict(), path)
    sidecar = {"config": config.to_dict(), "meta": meta or {}}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True))
    return path


def load_checkpoint(path: str | Path) -> tuple[nn.Module, ModelConfig, dict]:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    config = ModelConfig.from_dict(sidecar["config"])
    model = build_model(config)
    arrays = load_state(path)
    own = model.state_dict()
    if set(arrays) != set(own):
        missing = sorted(set(own) - set(arrays))[:3]
        raise ValueError(f"{path}: parameter names do not match config (e.g. missing {missing})")
    state = {}
    for k, ref in own.items():
        if tuple(arrays[k].shape) != tuple(ref.shape):
            raise ValueError(f"{path}: {k} has shape {arrays[k].shape}, expected {tuple(ref.shape)}")
        state[k] = torch.from_numpy(arrays[k]).to(ref.dtype)
    model.load_state_dict(state)
    model.eval()
    return model, config, sidecar.get("meta", {})
