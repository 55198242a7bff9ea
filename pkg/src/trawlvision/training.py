"""Supervised training with early stopping and step-down learning-rate scheduling."""
from __future__ import annotations

import configparser
import copy
import csv
import io
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .dataio import CLASSES, CLASS_INDEX, ClipStore, SplitSpec
from .models import ModelConfig, TwoStream, build_model, clip_input

log = logging.getLogger(__name__)

FLIP_DEFAULT = {"spatial": True, "timesformer": True, "temporal": False, "hybrid": False}
SCHEDULER_DEFAULT = {"spatial": True, "temporal": True, "timesformer": False, "hybrid": False}

# learning rate, epochs, batch size, image size, frames per video
REFERENCE_HYPERPARAMS = {
    "spatial": (1e-4, 200, 4, 300, 8),
    "temporal": (1e-4, 200, 4, 300, 7),
    "hybrid": (1e-6, 100, 4, 300, 12),
    "timesformer": (1e-6, 100, 3, 224, 8),
}


@dataclass
class Hyperparams:
    learning_rate: float = 1e-3
    epochs: int = 40
    batch_size: int = 4
    image_size: int = 64
    frames_per_video: int = 0
    scheduler_patience: int = 10
    scheduler_factor: float = 0.1
    early_stop_patience: int = 25
    augment_flip: bool | None = None
    use_scheduler: bool | None = None
    grad_clip: float | None = 5.0
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.scheduler_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0 < self.scheduler_factor < 1:
            raise ValueError("scheduler_factor must lie in (0, 1)")

    def flip_for(self, arch: str) -> bool:
        return FLIP_DEFAULT[arch] if self.augment_flip is None else self.augment_flip

    def scheduler_for(self, arch: str) -> bool:
        return SCHEDULER_DEFAULT[arch] if self.use_scheduler is None else self.use_scheduler

    # flat INI file, one [hyperparams] section
    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["hyperparams"] = {k: "none" if v is None else str(v) for k, v in asdict(self).items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, base: "Hyperparams | None" = None) -> "Hyperparams":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        section = cp["hyperparams"] if cp.has_section("hyperparams") else cp[cp.default_section]
        kw = asdict(base) if base is not None else {}
        types = {f.name: f.type for f in fields(cls)}
        for key, raw in section.items():
            if key not in types:
                raise ValueError(f"unknown hyperparameter {key!r}")
            kw[key] = _parse_value(raw, str(types[key]))
        return cls(**kw)


def _parse_value(raw: str, type_name: str):
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    if "bool" in type_name:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if "float" in type_name:
        return float(raw)
    if "int" in type_name:
        return int(raw)
    return raw


def reference_hyperparams(arch: str, **overrides) -> Hyperparams:
    """Reference-scale settings for one architecture (two_stream uses the spatial row)."""
    key = "spatial" if arch == "two_stream" else arch
    lr, epochs, batch, size, frames = REFERENCE_HYPERPARAMS[key]
    return Hyperparams(learning_rate=lr, epochs=epochs, batch_size=batch, image_size=size,
                       frames_per_video=frames, **overrides)


def desk_hyperparams(arch: str, **overrides) -> Hyperparams:
    """Laptop-scale settings; larger learning rate than the reference as nothing is pretrained."""
    kw = dict(learning_rate=1e-3, epochs=40, batch_size=4, image_size=64, early_stop_patience=10)
    kw.update(overrides)
    return Hyperparams(**kw)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_acc", "lr"])
        for i in range(len(self.train_loss)):
            w.writerow([i, repr(self.train_loss[i]), repr(self.val_loss[i]), repr(self.val_acc[i]), repr(self.lr[i])])
        return buf.getvalue()


class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without improvement."""

    def __init__(self, optimizer: torch.optim.Optimizer, patience: int = 10, factor: float = 0.1):
        self.optimizer = optimizer
        self.patience = patience
        self.factor = factor
        self.best = float("inf")
        self.bad_epochs = 0
        self.n_fired = 0

    @property
    def lr(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    def step(self, val_loss: float) -> bool:
        if val_loss < self.best:
            self.best = val_loss
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            for g in self.optimizer.param_groups:
                g["lr"] *= self.factor
            self.bad_epochs = 0
            self.n_fired += 1
            return True
        return False


class InputBuilder:
    """Per-clip model inputs with a cache of the unflipped tensors."""

    def __init__(self, store: ClipStore, config: ModelConfig):
        self.store = store
        self.config = config
        self._cache: dict[str, object] = {}

    def get(self, clip_id: str, flip: bool = False):
        if clip_id not in self._cache:
            self._cache[clip_id] = clip_input(self.store.get(clip_id), self.config)
        x = self._cache[clip_id]
        return torch.flip(x, dims=(-1,)) if flip else x

    def batch(self, clip_ids: Sequence[str], flips: Sequence[bool] | None = None):
        flips = flips if flips is not None else [False] * len(clip_ids)
        return torch.stack([self.get(c, f) for c, f in zip(clip_ids, flips)])

    def labels(self, clip_ids: Sequence[str]) -> torch.Tensor:
        return torch.tensor([CLASS_INDEX[self.store.manifest[c].label] for c in clip_ids])


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def _mean_loss(model, builder: InputBuilder, clip_ids, batch_size=16) -> tuple[float, float]:
    model.eval()
    total, correct = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(clip_ids), batch_size):
            ids = clip_ids[i:i + batch_size]
            logits = model(builder.batch(ids))
            y = builder.labels(ids)
            total += F.cross_entropy(logits, y, reduction="sum").item()
            correct += int((logits.argmax(1) == y).sum())
    return total / len(clip_ids), correct / len(clip_ids)


def fit(model: nn.Module, arch: str, builder: InputBuilder, train_ids: Sequence[str],
        val_ids: Sequence[str], hyper: Hyperparams) -> TrainHistory:
    """Optimise ``model`` in place; on return it holds the minimum-validation-loss weights."""
    if not train_ids:
        raise ValueError("empty training set")
    train_ids = list(train_ids)
    val_ids = list(val_ids)
    opt = torch.optim.Adam(model.parameters(), lr=hyper.learning_rate, weight_decay=hyper.weight_decay)
    sched = PlateauScheduler(opt, hyper.scheduler_patience, hyper.scheduler_factor) if hyper.scheduler_for(arch) else None
    flip = hyper.flip_for(arch)
    hist = TrainHistory()
    best_loss, best_state = float("inf"), copy.deepcopy(model.state_dict())
    for epoch in range(hyper.epochs):
        rng = np.random.default_rng([hyper.seed, epoch])
        order = rng.permutation(len(train_ids))
        flips = rng.random(len(train_ids)) < 0.5 if flip else np.zeros(len(train_ids), bool)
        model.train()
        running, seen = 0.0, 0
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            ids = [train_ids[i] for i in idx]
            x = builder.batch(ids, [bool(flips[i]) for i in idx])
            y = builder.labels(ids)
            loss = F.cross_entropy(model(x), y)
            if not torch.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}, batch {start // hyper.batch_size}")
            opt.zero_grad()
            loss.backward()
            if hyper.grad_clip:
                nn.utils.clip_grad_norm_(model.parameters(), hyper.grad_clip)
            opt.step()
            running += loss.item() * len(ids)
            seen += len(ids)
        train_loss = running / seen
        if val_ids:
            val_loss, val_acc = _mean_loss(model, builder, val_ids)
        else:
            val_loss, val_acc = train_loss, float("nan")
        hist.train_loss.append(train_loss)
        hist.val_loss.append(val_loss)
        hist.val_acc.append(val_acc)
        hist.lr.append(opt.param_groups[0]["lr"])
        log.debug("%s epoch %d train %.4f val %.4f acc %.3f", arch, epoch, train_loss, val_loss, val_acc)
        if val_loss < best_loss:
            best_loss, hist.best_epoch = val_loss, epoch
            best_state = copy.deepcopy(model.state_dict())
        if sched is not None:
            sched.step(val_loss)
        if epoch - hist.best_epoch > hyper.early_stop_patience:
            break
    model.load_state_dict(best_state)
    model.eval()
    return hist


def _stream_config(config: ModelConfig, hyper: Hyperparams) -> ModelConfig:
    kw = {"image_size": hyper.image_size}
    if hyper.frames_per_video:
        if config.architecture == "temporal":
            kw["n_pairs"] = hyper.frames_per_video
        else:
            kw["frames_per_video"] = hyper.frames_per_video
    return config.with_(**kw)


def train(config: ModelConfig, split: SplitSpec, hyper: Hyperparams, store: ClipStore,
          backbone_init: dict | None = None):
    """Train ``config`` on ``split``; returns (model, history).

    For the two-stream model the streams are trained separately (spatial with
    seed, temporal with seed + 1) and ``history`` maps stream name to history.
    """
    if not split.train:
        raise ValueError(f"split {split.split_id}: empty training set")
    if config.architecture == "two_stream":
        config = config.with_(image_size=hyper.image_size)
        model = TwoStream(config)
        histories = {}
        for offset, name in enumerate(("spatial", "temporal")):
            sub_cfg = config.with_(architecture=name)
            sub_hyper = replace(hyper, seed=hyper.seed + offset,
                                frames_per_video=0 if name == "temporal" else hyper.frames_per_video)
            sub, hist = train(sub_cfg, split, sub_hyper, store, backbone_init)
            getattr(model, name).load_state_dict(sub.state_dict())
            histories[name] = hist
        model.eval()
        return model, histories
    config = _stream_config(config, hyper)
    seed_everything(hyper.seed)
    model = build_model(config)
    if backbone_init is not None and hasattr(model, "backbone"):
        own = model.backbone.state_dict()
        model.backbone.load_state_dict({k: v for k, v in backbone_init.items() if k in own and v.shape == own[k].shape},
                                       strict=False)
    builder = InputBuilder(store, config)
    hist = fit(model, config.architecture, builder, split.train, split.val, hyper)
    return model, hist


@dataclass
class Prediction:
    clip_id: str
    label: str
    predicted: str
    probs: tuple[float, ...]
    scores: tuple[float, ...]
    capture_index: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def predict(model: nn.Module, config: ModelConfig, store: ClipStore, clip_ids: Sequence[str],
            batch_size: int = 16) -> list[Prediction]:
    """Per-clip predictions in capture order.

    For the two-stream model ``scores`` holds the log of the fused
    probabilities, so softmax(scores) == probs for every architecture.
    """
    missing = [c for c in clip_ids if c not in store.manifest]
    if missing:
        raise ValueError(f"clips not in the dataset: {missing[:3]}")
    ids = sorted(clip_ids, key=lambda c: store.manifest[c].capture_index)
    model.eval()
    out = []
    with torch.no_grad():
        if config.architecture == "two_stream":
            sb = InputBuilder(store, config.with_(architecture="spatial"))
            tb = InputBuilder(store, config.with_(architecture="temporal"))
        else:
            b = InputBuilder(store, config)
        for i in range(0, len(ids), batch_size):
            chunk = ids[i:i + batch_size]
            try:
                if config.architecture == "two_stream":
                    probs = model(sb.batch(chunk), tb.batch(chunk)).double()
                    scores = torch.log(probs)
                else:
                    scores = model(b.batch(chunk)).double()
                    probs = torch.softmax(scores, dim=1)
            except ValueError as exc:
                raise ValueError(f"clip preprocessing does not match the model: {exc}") from exc
            for cid, s, p in zip(chunk, scores, probs):
                row = store.manifest[cid]
                out.append(Prediction(cid, row.label, CLASSES[int(p.argmax())],
                                      tuple(float(v) for v in p), tuple(float(v) for v in s), row.capture_index))
    return out


def evaluate_split(model: nn.Module, config: ModelConfig, store: ClipStore, split: SplitSpec,
                   subset: str = "test") -> list[Prediction]:
    return predict(model, config, store, split.subset(subset))


def predictions_to_json(preds: Sequence[Prediction]) -> list[dict]:
    return [p.to_dict() for p in preds]


def predictions_from_json(rows: Sequence[dict]) -> list[Prediction]:
    return [Prediction(r["clip_id"], r["label"], r["predicted"], tuple(r["probs"]), tuple(r["scores"]),
                       int(r.get("capture_index", 0))) for r in rows]


def pretrain_backbone(config: ModelConfig, n_images: int = 256, epochs: int = 5, seed: int = 0,
                      lr: float = 1e-3) -> dict:
    """Fit the backbone on single frames labelled by camera view (a small stand-in for ImageNet).

    Returns the backbone state dict, usable as ``backbone_init`` in :func:`train`.
    """
    from .dataio import crop_timestamp, resize_frames
    from .models.backbone import ResNet
    from .scenegen import generate_clip, make_scene_spec

    rng = np.random.default_rng([seed, 5])
    views = rng.integers(1, 17, size=n_images)
    labels = rng.choice(CLASSES, size=n_images)
    frames = []
    for i in range(n_images):
        spec = make_scene_spec(int(views[i]), str(labels[i]), 8, seed=10_000_000 + seed * 1000 + i,
                               image_size=(max(64, config.image_size),) * 2)
        f = crop_timestamp(generate_clip(spec).frames[:1])
        frames.append(resize_frames(f, config.image_size)[0])
    x = torch.from_numpy(np.stack(frames).astype(np.float32)[:, None] / 255.0)
    y = torch.from_numpy(views - 1)
    seed_everything(seed)
    net = ResNet(config.in_channels if config.architecture == "temporal" else 1, config.widths, config.blocks, config.stem, config.strides)
    if config.architecture == "temporal":
        x = x.repeat(1, config.in_channels, 1, 1)
    head = nn.Linear(net.out_channels, 16)
    opt = torch.optim.Adam(list(net.parameters()) + list(head.parameters()), lr=lr)
    for epoch in range(epochs):
        order = np.random.default_rng([seed, epoch]).permutation(n_images)
        net.train()
        for s in range(0, n_images, 32):
            idx = torch.from_numpy(order[s:s + 32])
            loss = F.cross_entropy(head(net(x[idx]).mean(dim=(2, 3))), y[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
    return {k: v.detach().clone() for k, v in net.state_dict().items()}
