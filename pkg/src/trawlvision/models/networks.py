"""Two-stream CNN, CNN-transformer hybrid and divided space-time attention transformer.

All video models take float tensors shaped (B, T, H, W) of grayscale frames in
[0, 1] (the temporal stream takes its (B, 2*n_pairs, H, W) stack instead) and
return (B, n_classes) logits.
"""
from __future__ import annotations

import torch
from torch import nn

from .backbone import ResNet
from .config import ModelConfig


def _check_frames(x: torch.Tensor, expected: int, name: str) -> None:
    if x.dim() != 4:
        raise ValueError(f"{name} expects (B, T, H, W) input, got shape {tuple(x.shape)}")
    if x.shape[1] != expected:
        raise ValueError(f"{name} expects {expected} frames per video, got {x.shape[1]}")


class SpatialCNN(nn.Module):
    """Per-frame backbone + linear head; clip logits are the mean of frame logits."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.backbone = ResNet(1, config.widths, config.blocks, config.stem, config.strides)
        self.fc = nn.Linear(self.backbone.out_channels, config.n_classes)

    @property
    def cam_layer(self) -> str:
        return f"backbone.{self.backbone.last_block_name}"

    def frame_logits(self, x):
        _check_frames(x, self.config.frames_per_video, "spatial stream")
        b, t, h, w = x.shape
        feats = self.backbone(x.reshape(b * t, 1, h, w))
        return self.fc(feats.mean(dim=(2, 3))).reshape(b, t, -1)

    def forward(self, x):
        return self.frame_logits(x).mean(dim=1)


class TemporalCNN(nn.Module):
    """Backbone over the interleaved gray/flow-magnitude stack."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.backbone = ResNet(config.in_channels, config.widths, config.blocks, config.stem, config.strides)
        self.fc = nn.Linear(self.backbone.out_channels, config.n_classes)

    @property
    def cam_layer(self) -> str:
        return f"backbone.{self.backbone.last_block_name}"

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.config.in_channels:
            raise ValueError(f"temporal stream expects (B, {self.config.in_channels}, H, W), got {tuple(x.shape)}")
        return self.fc(self.backbone(x).mean(dim=(2, 3)))


def fuse_two_stream(spatial_logits, temporal_logits):
    """Mean of the two streams' softmax outputs."""
    s = torch.as_tensor(spatial_logits)
    t = torch.as_tensor(temporal_logits)
    if s.shape != t.shape:
        raise ValueError(f"stream outputs differ in shape: {tuple(s.shape)} vs {tuple(t.shape)}")
    return 0.5 * (torch.softmax(s, dim=-1) + torch.softmax(t, dim=-1))


class TwoStream(nn.Module):
    """Independently trained spatial and temporal streams fused at the score level."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.spatial = SpatialCNN(config.with_(architecture="spatial"))
        self.temporal = TemporalCNN(config.with_(architecture="temporal"))

    def forward(self, spatial_x, temporal_x):
        """Fused class probabilities (not logits)."""
        return fuse_two_stream(self.spatial(spatial_x), self.temporal(temporal_x))


class HybridTransformer(nn.Module):
    """Backbone tokens -> self-attention encoder -> max-pool over tokens -> dropout -> linear."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.backbone = ResNet(1, config.widths, config.blocks, config.stem, config.strides)
        d = config.hybrid_embed
        self.proj = nn.Linear(self.backbone.out_channels, d)
        n_tokens = config.frames_per_video
        if config.token_mode == "cell":
            n_tokens *= self._feature_cells(config)
        self.pos_embed = nn.Parameter(torch.zeros(1, n_tokens, d))
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        layer = nn.TransformerEncoderLayer(d, config.encoder_heads, dim_feedforward=2 * d,
                                           dropout=config.dropout_rate, batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, config.encoder_layers, enable_nested_tensor=False)
        self.pool = nn.AdaptiveMaxPool1d(1)
        self.dropout = nn.Dropout(config.dropout_rate)
        self.fc = nn.Linear(d, config.n_classes)

    def _feature_cells(self, config):
        with torch.no_grad():
            probe = self.backbone(torch.zeros(1, 1, config.image_size, config.image_size))
        return probe.shape[-2] * probe.shape[-1]

    @property
    def cam_layer(self) -> str:
        return f"backbone.{self.backbone.last_block_name}"

    def tokens(self, x):
        _check_frames(x, self.config.frames_per_video, "hybrid")
        b, t, h, w = x.shape
        feats = self.backbone(x.reshape(b * t, 1, h, w))
        if self.config.token_mode == "frame":
            tok = feats.mean(dim=(2, 3)).reshape(b, t, -1)
        else:
            tok = feats.flatten(2).transpose(1, 2).reshape(b, -1, feats.shape[1])
        return self.proj(tok) + self.pos_embed

    def forward(self, x):
        z = self.encoder(self.tokens(x))
        z = self.pool(z.transpose(1, 2)).squeeze(-1)
        return self.fc(self.dropout(z))


class Attention(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        n, l, d = x.shape
        qkv = self.qkv(x).reshape(n, l, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = torch.softmax((q @ k.transpose(-2, -1)) * self.scale, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(n, l, d)
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, dim, hidden):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class SpaceTimeBlock(nn.Module):
    """Pre-norm block: temporal attention, then spatial attention, then MLP.

    In "divided" mode the temporal sub-layer attends across frames at a fixed
    patch position (skipped for a single frame, which has no temporal
    neighbours) and the spatial sub-layer attends within each frame, with the
    class token replicated per frame and averaged back.  "joint" mode runs one
    attention over all tokens of all frames with the spatial weights.
    """

    def __init__(self, dim, heads, mlp_ratio=4.0, mode="divided"):
        super().__init__()
        self.mode = mode
        self.temporal_norm1 = nn.LayerNorm(dim)
        self.temporal_attn = Attention(dim, heads)
        self.temporal_fc = nn.Linear(dim, dim)
        nn.init.zeros_(self.temporal_fc.weight)
        nn.init.zeros_(self.temporal_fc.bias)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, cls, x):
        # cls: (B, 1, D); x: (B, T, N, D)
        b, t, n, d = x.shape
        if self.mode == "divided":
            if t > 1:
                xt = x.permute(0, 2, 1, 3).reshape(b * n, t, d)
                res = self.temporal_fc(self.temporal_attn(self.temporal_norm1(xt)))
                x = x + res.reshape(b, n, t, d).permute(0, 2, 1, 3)
            s = torch.cat([cls.unsqueeze(1).expand(b, t, 1, d), x], dim=2).reshape(b * t, 1 + n, d)
            out = self.attn(self.norm1(s)).reshape(b, t, 1 + n, d)
            cls = cls + out[:, :, 0].mean(dim=1, keepdim=True)
            x = x + out[:, :, 1:]
        else:
            s = torch.cat([cls, x.reshape(b, t * n, d)], dim=1)
            out = self.attn(self.norm1(s))
            cls = cls + out[:, :1]
            x = x + out[:, 1:].reshape(b, t, n, d)
        z = torch.cat([cls, x.reshape(b, t * n, d)], dim=1)
        z = z + self.mlp(self.norm2(z))
        return z[:, :1], z[:, 1:].reshape(b, t, n, d)


class TimeSformer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.embed_dim
        self.patch_embed = nn.Conv2d(1, d, config.patch_size, config.patch_size)
        self.n_patches = config.grid ** 2
        self.cls_token = nn.Parameter(torch.zeros(1, 1, d))
        self.pos_embed = nn.Parameter(torch.zeros(1, 1 + self.n_patches, d))
        self.time_embed = nn.Parameter(torch.zeros(1, config.frames_per_video, d))
        for p in (self.cls_token, self.pos_embed, self.time_embed):
            nn.init.trunc_normal_(p, std=0.02)
        self.blocks = nn.ModuleList(
            SpaceTimeBlock(d, config.heads, config.mlp_ratio, config.attention) for _ in range(config.depth))
        self.norm = nn.LayerNorm(d)
        self.head = nn.Linear(d, config.n_classes)

    @property
    def cam_layer(self) -> str:
        return f"blocks.{len(self.blocks) - 1}.norm1"

    def patch_tokens(self, x):
        """(B, T, N, D) patch embeddings before positional encoding."""
        _check_frames(x, self.config.frames_per_video, "timesformer")
        b, t, h, w = x.shape
        if h != self.config.image_size or w != self.config.image_size:
            raise ValueError(f"timesformer expects {self.config.image_size}px frames, got {h}x{w}")
        p = self.patch_embed(x.reshape(b * t, 1, h, w))
        return p.flatten(2).transpose(1, 2).reshape(b, t, self.n_patches, -1)

    def forward(self, x):
        tok = self.patch_tokens(x)
        b = tok.shape[0]
        tok = tok + self.pos_embed[:, 1:].unsqueeze(1) + self.time_embed.unsqueeze(2)
        cls = (self.cls_token + self.pos_embed[:, :1]).expand(b, 1, -1)
        for blk in self.blocks:
            cls, tok = blk(cls, tok)
        return self.head(self.norm(cls[:, 0]))


_BUILDERS = {
    "spatial": SpatialCNN,
    "temporal": TemporalCNN,
    "two_stream": TwoStream,
    "hybrid": HybridTransformer,
    "timesformer": TimeSformer,
}


def build_model(config: ModelConfig) -> nn.Module:
    return _BUILDERS[config.architecture](config)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def parameter_shapes(model: nn.Module) -> dict[str, tuple[int, ...]]:
    return {k: tuple(v.shape) for k, v in model.state_dict().items()}
