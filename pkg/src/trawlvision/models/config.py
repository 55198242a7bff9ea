from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

ARCHITECTURES = ("spatial", "temporal", "two_stream", "hybrid", "timesformer")

DEFAULT_FRAMES = {"spatial": 8, "temporal": 8, "two_stream": 8, "hybrid": 12, "timesformer": 8}


@dataclass
class ModelConfig:
    """Everything needed to rebuild a model and its input pipeline.

    ``widths``/``blocks``/``strides`` describe the residual backbone per stage; ``stem`` is
    "desk" (3x3 stride-2 conv) or "imagenet" (7x7 stride-2 conv + max-pool).
    ``seq_len`` pads/truncates clips before frame sampling (None keeps them as is).
    """
    architecture: str
    widths: tuple[int, ...] = (16, 32, 64, 128)
    blocks: tuple[int, ...] = (1, 1, 1, 1)
    strides: tuple[int, ...] = (1, 2, 2, 2)
    stem: str = "desk"
    image_size: int = 64
    frames_per_video: int = 0
    n_pairs: int = 7
    patch_size: int = 16
    embed_dim: int = 64
    depth: int = 2
    heads: int = 4
    mlp_ratio: float = 4.0
    attention: str = "divided"
    encoder_layers: int = 5
    encoder_heads: int = 5
    hybrid_embed: int = 80
    token_mode: str = "frame"
    dropout_rate: float = 0.1
    n_classes: int = 3
    crop_timestamp: bool = True
    seq_len: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.widths = tuple(self.widths)
        self.blocks = tuple(self.blocks)
        self.strides = tuple(self.strides)
        if not self.frames_per_video:
            self.frames_per_video = DEFAULT_FRAMES.get(self.architecture, 8)
        self.validate()

    def validate(self) -> None:
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}; choose from {ARCHITECTURES}")
        if not self.widths or not len(self.widths) == len(self.blocks) == len(self.strides):
            raise ValueError("widths, blocks and strides must be non-empty and of equal length")
        if self.stem not in ("desk", "imagenet"):
            raise ValueError(f"unknown stem {self.stem!r}")
        if self.frames_per_video < 1 or self.n_classes < 2:
            raise ValueError("frames_per_video must be >= 1 and n_classes >= 2")
        if self.architecture == "timesformer":
            if self.image_size % self.patch_size:
                raise ValueError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
            if self.embed_dim % self.heads:
                raise ValueError(f"heads {self.heads} must divide embed_dim {self.embed_dim}")
            if self.attention not in ("divided", "joint"):
                raise ValueError(f"unknown attention mode {self.attention!r}")
        if self.architecture == "hybrid":
            if self.hybrid_embed % self.encoder_heads:
                raise ValueError(f"encoder_heads {self.encoder_heads} must divide hybrid_embed {self.hybrid_embed}")
            if self.token_mode not in ("frame", "cell"):
                raise ValueError(f"unknown token_mode {self.token_mode!r}")
        if self.seq_len is not None and self.seq_len < 1:
            raise ValueError("seq_len must be positive")

    @property
    def in_channels(self) -> int:
        return 2 * self.n_pairs if self.architecture == "temporal" else 1

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    def with_(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


def desk_config(architecture: str, **overrides) -> ModelConfig:
    """Reduced-width preset: 4 stages x 1 block, widths 16/32/64/128, 64 px frames."""
    return ModelConfig(architecture=architecture, **overrides)


def reference_config(architecture: str, **overrides) -> ModelConfig:
    """18-layer residual backbone and base-size video transformer at the reference image sizes."""
    base = dict(widths=(64, 128, 256, 512), blocks=(2, 2, 2, 2), stem="imagenet", image_size=300,
                hybrid_embed=520)
    if architecture == "timesformer":
        base.update(image_size=224, embed_dim=768, depth=12, heads=12)
    base.update(overrides)
    return ModelConfig(architecture=architecture, **base)
