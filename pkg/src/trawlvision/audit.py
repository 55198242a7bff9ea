"""Dataset-bias audit: per-view confusion, adjacency PP curves, padding and timestamp probes."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataio import (CLASSES, CLASS_INDEX, N_VIEWS, ClipStore, Manifest, make_splits, sample_indices,
                     scaled_counts, timestamp_box)
from .explain import gradcam, region_mass
from .metrics import ConfusionMatrix, confusion
from .models import desk_config, padding_mask, spatial_input
from .scenegen import BiasConfig, generate_dataset
from .training import Prediction, desk_hyperparams, predict, train

log = logging.getLogger(__name__)

# Detection thresholds, fixed from pilot runs on the synthetic generator.
VIEW_MODAL_MIN = 12              # views (of 16) whose modal prediction is the view majority
PADDING_PP_BIASED = 0.99         # mean PP(short class) on padded clips, correlated lengths
PADDING_PP_CONTROL = 0.9         # ... upper bound in the uncorrelated control
TIMESTAMP_MASS_FACTOR = 3.0      # uncropped box mass / box area fraction
TIMESTAMP_CROPPED_MAX = 0.01     # "no attention" on the zeroed box


# ---------------------------------------------------------------------------
# per-view confusion and majority agreement
def view_distributions(manifest: Manifest) -> dict[int, dict[str, int]]:
    """Class counts per camera view over the whole dataset."""
    out = {v: {c: 0 for c in CLASSES} for v in range(1, N_VIEWS + 1)}
    for r in manifest:
        if r.view_id is None or r.view_id not in out:
            raise ValueError(f"clip {r.clip_id}: missing or invalid view_id {r.view_id!r}")
        out[r.view_id][r.label] += 1
    return out


def view_majority(distributions: Mapping[int, Mapping[str, int]]) -> dict[int, str | None]:
    """Most frequent class per view (ties go to the earlier class; None for an empty view)."""
    out = {}
    for v, d in distributions.items():
        counts = [d[c] for c in CLASSES]
        out[v] = CLASSES[int(np.argmax(counts))] if sum(counts) else None
    return out


def per_view_confusion(preds: Sequence[Prediction], manifest: Manifest
                       ) -> tuple[dict[int, ConfusionMatrix], dict[int, dict[str, int]]]:
    mats = {v: ConfusionMatrix() for v in range(1, N_VIEWS + 1)}
    for p in preds:
        if p.clip_id not in manifest:
            raise ValueError(f"prediction for unknown clip {p.clip_id}")
        v = manifest[p.clip_id].view_id
        if v not in mats:
            raise ValueError(f"clip {p.clip_id}: missing or invalid view_id {v!r}")
        mats[v].counts[CLASS_INDEX[p.label], CLASS_INDEX[p.predicted]] += 1
    return mats, view_distributions(manifest)


def views_matching_majority(mats: Mapping[int, ConfusionMatrix], majority: Mapping[int, str | None]) -> int:
    return sum(1 for v, m in mats.items() if m.total and m.modal_prediction() == majority[v])


def majority_agreement(majority: Mapping[int, str | None], preds: Sequence[Prediction],
                       manifest: Manifest) -> float:
    """Fraction of predictions equal to their clip's view-majority class."""
    if not preds:
        return 0.0
    return float(np.mean([p.predicted == majority[manifest[p.clip_id].view_id] for p in preds]))


def majority_agreement_baseline(majority: Mapping[int, str | None], preds: Sequence[Prediction],
                                manifest: Manifest, n_permutations: int = 1000, seed: int = 0
                                ) -> tuple[float, float]:
    """Agreement expected from a model with the same confusion matrix but no view knowledge.

    Predictions are shuffled within each true class, which keeps per-class
    accuracy fixed and breaks any link to the view.  Returns the mean agreement
    over permutations and the one-sided p-value of the observed agreement.
    """
    if not preds:
        return 0.0, 1.0
    rng = np.random.default_rng(seed)
    maj = np.array([str(majority[manifest[p.clip_id].view_id]) for p in preds])
    predicted = np.array([p.predicted for p in preds])
    groups = [np.flatnonzero(np.array([p.label for p in preds]) == c) for c in CLASSES]
    observed = float(np.mean(predicted == maj))
    sims = np.empty(n_permutations)
    for k in range(n_permutations):
        perm = predicted.copy()
        for g in groups:
            perm[g] = predicted[rng.permutation(g)]
        sims[k] = np.mean(perm == maj)
    p_value = float((1 + np.sum(sims >= observed)) / (1 + n_permutations))
    return float(sims.mean()), p_value


# ---------------------------------------------------------------------------
# adjacency curves
@dataclass
class CurvePoint:
    clip_id: str
    capture_index: int
    view_id: int
    pp: float
    n_splits: int


def adjacency_pp_curve(all_split_preds: Mapping[int, Sequence[Prediction]], manifest: Manifest,
                       use_predicted: bool = False) -> tuple[dict[str, list[CurvePoint]], int]:
    """Per-class curves of split-averaged PP in capture order, plus the number of omitted clips.

    PP is the probability of the clip's true class, or of the predicted class
    with ``use_predicted``.
    """
    if not all_split_preds:
        raise ValueError("no split predictions")
    acc: dict[str, list[float]] = {}
    for preds in all_split_preds.values():
        for p in preds:
            k = CLASS_INDEX[p.predicted if use_predicted else p.label]
            acc.setdefault(p.clip_id, []).append(p.probs[k])
    curves = {c: [] for c in CLASSES}
    omitted = 0
    for r in manifest:
        if r.clip_id not in acc:
            omitted += 1
            continue
        vals = acc[r.clip_id]
        curves[r.label].append(CurvePoint(r.clip_id, r.capture_index, r.view_id, float(np.mean(vals)), len(vals)))
    return curves, omitted


def adjacency_contrast(curves: Mapping[str, Sequence[CurvePoint]]) -> tuple[float, float]:
    """Mean |PP step| between neighbours on each curve: (same view, across a view boundary)."""
    within, across = [], []
    for pts in curves.values():
        for a, b in zip(pts, pts[1:]):
            (within if a.view_id == b.view_id else across).append(abs(a.pp - b.pp))
    return (float(np.mean(within)) if within else float("nan"),
            float(np.mean(across)) if across else float("nan"))


# ---------------------------------------------------------------------------
# view recovery for unlabelled footage
class NearestCentroidViews:
    """Assigns camera views by nearest centroid of bright-pixel (laser) occupancy maps."""

    def __init__(self, threshold: float = 120.0, size: int = 16):
        self.threshold = threshold
        self.size = size
        self.centroids: np.ndarray | None = None
        self.views: np.ndarray | None = None

    def features(self, frames: np.ndarray) -> np.ndarray:
        import cv2
        frames = np.asarray(frames, dtype=np.float32)
        if frames.ndim == 2:
            frames = frames[None]
        occ = (frames > self.threshold).mean(axis=0).astype(np.float32)
        return cv2.resize(occ, (self.size, self.size), interpolation=cv2.INTER_AREA).ravel()

    def fit(self, clips: Sequence[np.ndarray], view_ids: Sequence[int]) -> "NearestCentroidViews":
        feats = np.stack([self.features(f) for f in clips])
        view_ids = np.asarray(view_ids)
        self.views = np.unique(view_ids)
        self.centroids = np.stack([feats[view_ids == v].mean(axis=0) for v in self.views])
        return self

    def predict(self, clips: Sequence[np.ndarray]) -> np.ndarray:
        if self.centroids is None:
            raise ValueError("classifier is not fitted")
        feats = np.stack([self.features(f) for f in clips])
        d = ((feats[:, None, :] - self.centroids[None]) ** 2).sum(-1)
        return self.views[d.argmin(axis=1)]


# ---------------------------------------------------------------------------
# view-bias audit over all evaluation splits
def view_audit(all_split_preds: Mapping[int, Sequence[Prediction]], manifest: Manifest,
               use_predicted: bool = False, n_permutations: int = 1000, seed: int = 0) -> dict:
    """Audit report (JSON-ready) from validation predictions of several splits."""
    pooled = [p for s in sorted(all_split_preds) for p in all_split_preds[s]]
    mats, dists = per_view_confusion(pooled, manifest)
    majority = view_majority(dists)
    glob = confusion(pooled)
    curves, omitted = adjacency_pp_curve(all_split_preds, manifest, use_predicted)
    within, across = adjacency_contrast(curves)
    agree = majority_agreement(majority, pooled, manifest)
    base, p_value = majority_agreement_baseline(majority, pooled, manifest, n_permutations, seed)
    matching = views_matching_majority(mats, majority)
    return {
        "per_view": {str(v): {"confusion": mats[v].to_list(), "distribution": dists[v], "majority": majority[v],
                              "modal_prediction": mats[v].modal_prediction(), "n_predictions": mats[v].total}
                     for v in mats},
        "global_confusion": glob.to_list(),
        "accuracy": glob.accuracy(),
        "views_matching_majority": matching,
        "adjacency_pp": "predicted" if use_predicted else "true",
        "adjacency_curves": {c: [asdict(p) for p in pts] for c, pts in curves.items()},
        "adjacency_omitted": omitted,
        "adjacency_contrast": {"within_view": within, "across_views": across},
        "majority_agreement": agree,
        "majority_agreement_baseline": base,
        "majority_agreement_p_value": p_value,
        "view_bias_detected": bool(matching >= VIEW_MODAL_MIN and agree > base),
    }


# ---------------------------------------------------------------------------
# padding probe
@dataclass
class PaddingProbeConfig:
    out_dir: str
    correlated: bool = True
    n_per_class: int = 100                   # R and NR clips each
    seq_lens: tuple[int, ...] = (16, 40)     # the last one is the reference setting
    short_offset: float = -10.0              # mean length offset of R when correlated
    epochs: int = 30
    image_size: int = 64
    data_seed: int = 0
    train_seed: int = 0


def _padding_reference(seq_len: int, frames: int) -> int:
    """Shortest clip length whose sampled frames contain no padding at ``seq_len``."""
    return int(sample_indices(seq_len, frames).max()) + 1


def padding_probe(config: PaddingProbeConfig) -> dict:
    """R-vs-NR probe of zero-padding leakage.

    In the correlated setting every R clip is short enough that its sampled
    frames include padding at the reference sequence length and no NR clip is;
    the control draws lengths independently of the class.
    """
    frames = desk_config("spatial").frames_per_video
    ref_len = config.seq_lens[-1]
    ref = _padding_reference(ref_len, frames)
    if config.correlated:
        bias = BiasConfig(padding_class_correlation=1.0, class_length_offset=(0.0, 0.0, config.short_offset),
                          short_class="R", padding_reference=ref)
    else:
        bias = BiasConfig()
    n = config.n_per_class
    manifest = generate_dataset(config.out_dir, (0, n, n), bias, seed=config.data_seed,
                                image_size=(config.image_size,) * 2, timestamp_enabled=False)
    if not any(r.frame_count < ref for r in manifest):
        raise ValueError(f"no clip is shorter than {ref} frames: nothing gets padded")
    store = ClipStore(manifest)
    split = make_splits(manifest, n_splits=0, counts=scaled_counts([0, n, n]), seed=config.data_seed)[0]
    held_out = split.val + split.test
    hyper = desk_hyperparams("spatial", epochs=config.epochs, image_size=config.image_size,
                             seed=config.train_seed, early_stop_patience=config.epochs)
    report = {"correlated": config.correlated, "padding_reference": ref, "settings": {}}
    model = None
    for seq_len in config.seq_lens:
        cfg = desk_config("spatial", seq_len=seq_len, image_size=config.image_size)
        model, _ = train(cfg, split, hyper, store)
        preds = predict(model, model.config, store, held_out)
        padded = [p for p in preds if padding_mask(store.get(p.clip_id), model.config).any()]
        per_class = {}
        for c in ("NR", "R"):
            cp = [p for p in preds if p.label == c]
            per_class[c] = float(np.mean([p.predicted == c for p in cp])) if cp else float("nan")
        report["settings"][str(seq_len)] = {
            "accuracy": float(np.mean([p.predicted == p.label for p in preds])),
            "class_accuracy": per_class,
            "n_padded": len(padded),
            "padded_by_class": {c: sum(p.label == c for p in padded) for c in ("NR", "R")},
            "mean_pp_padded": {c: float(np.mean([p.probs[CLASS_INDEX[c]] for p in padded])) if padded
                               else float("nan") for c in ("NR", "R")},
        }
        log.info("padding probe seq_len=%d: %s", seq_len, report["settings"][str(seq_len)])
    base = report["settings"][str(config.seq_lens[0])]
    for s in config.seq_lens:
        cur = report["settings"][str(s)]
        cur["accuracy_delta"] = cur["accuracy"] - base["accuracy"]
    report["mean_pp_short_padded"] = report["settings"][str(ref_len)]["mean_pp_padded"]["R"]
    report["frame_cam"] = _padding_cam(model, store, held_out)
    return report


def _padding_cam(model, store: ClipStore, clip_ids: Sequence[str]) -> dict:
    """Grad-CAM (class R) of the first held-out clip with padding: padded-frame mass share vs. uniform."""
    for cid in clip_ids:
        clip = store.get(cid)
        mask = padding_mask(clip, model.config)
        if not mask.any():
            continue
        maps = gradcam(model, spatial_input(clip, model.config)[None], CLASS_INDEX["R"], source=cid)
        raw = np.array([m.raw_mass for m in maps])
        total = raw.sum()
        share = float(raw[mask].sum() / total) if total > 0 else 0.0
        return {"clip_id": cid, "n_padding_frames": int(mask.sum()), "n_frames": int(mask.size),
                "padding_mass_share": share, "uniform_share": float(mask.mean()),
                "frame_masses": raw.tolist()}
    return {}


# ---------------------------------------------------------------------------
# timestamp probe
@dataclass
class TimestampProbeConfig:
    out_dir: str
    rho_ts: float = 0.95
    n_per_class: int = 60
    epochs: int = 12
    image_size: int = 64
    timestamp_enabled: bool = True
    data_seed: int = 2
    train_seed: int = 0


def timestamp_probe(config: TimestampProbeConfig) -> dict:
    """Train on uncropped and on timestamp-cropped frames; compare accuracy and box attention.

    ``region_mass`` is averaged over every frame map of the held-out clips for
    the predicted class (all-zero maps are skipped and counted).
    """
    if not config.timestamp_enabled:
        raise ValueError("timestamp probe needs footage with an imprinted timestamp")
    n = config.n_per_class
    manifest = generate_dataset(config.out_dir, (n, n, n), BiasConfig(timestamp_class_correlation=config.rho_ts),
                                seed=config.data_seed, image_size=(config.image_size,) * 2, timestamp_enabled=True)
    store = ClipStore(manifest)
    split = make_splits(manifest, n_splits=0, counts=scaled_counts([n, n, n]), seed=config.data_seed)[0]
    held_out = split.val + split.test
    y0, y1, x0, x1 = timestamp_box(config.image_size, config.image_size)
    box = np.zeros((config.image_size, config.image_size), dtype=bool)
    box[y0:y1, x0:x1] = True
    hyper = desk_hyperparams("spatial", epochs=config.epochs, image_size=config.image_size,
                             seed=config.train_seed, early_stop_patience=config.epochs)
    report = {"rho_ts": config.rho_ts, "box_area_fraction": float(box.mean())}
    for name, crop in (("uncropped", False), ("cropped", True)):
        cfg = desk_config("spatial", crop_timestamp=crop, image_size=config.image_size)
        model, _ = train(cfg, split, hyper, store)
        preds = predict(model, model.config, store, held_out)
        masses, zero = [], 0
        for p in preds:
            x = spatial_input(store.get(p.clip_id), model.config)[None]
            for m in gradcam(model, x, CLASS_INDEX[p.predicted], source=p.clip_id):
                if m.raw_mass > 0:
                    masses.append(region_mass(m.values, box))
                else:
                    zero += 1
        report[name] = {"accuracy": float(np.mean([p.predicted == p.label for p in preds])),
                        "region_mass": float(np.mean(masses)) if masses else 0.0,
                        "n_maps": len(masses), "n_zero_maps": zero}
        log.info("timestamp probe %s: %s", name, report[name])
    report["mass_ratio"] = report["uncropped"]["region_mass"] / report["box_area_fraction"]
    report["leak_detected"] = bool(report["mass_ratio"] >= TIMESTAMP_MASS_FACTOR)
    return report


# ---------------------------------------------------------------------------
# end-to-end view-bias experiment
@dataclass
class ViewBiasConfig:
    out_dir: str
    rho_view: float = 0.9
    n_per_class: tuple[int, int, int] = (200, 214, 210)
    n_splits: int = 10
    architecture: str = "two_stream"
    image_size: int = 32
    epochs: int = 10
    data_seed: int = 1
    split_seed: int = 0
    train_seed: int = 0
    extra: dict = field(default_factory=dict)


def view_bias_experiment(config: ViewBiasConfig) -> tuple[dict, dict[int, list[Prediction]]]:
    """Generate a view-biased dataset, train on every evaluation split and audit the validation predictions."""
    out = Path(config.out_dir)
    manifest = generate_dataset(out / "data", config.n_per_class,
                                BiasConfig(view_class_correlation=config.rho_view), seed=config.data_seed)
    store = ClipStore(manifest)
    counts = scaled_counts(config.n_per_class)
    splits = make_splits(manifest, n_splits=config.n_splits, counts=counts, seed=config.split_seed)
    hyper = desk_hyperparams(config.architecture, epochs=config.epochs, image_size=config.image_size,
                             seed=config.train_seed, early_stop_patience=config.epochs)
    cfg = desk_config(config.architecture, image_size=config.image_size)
    per_split = {}
    for split in splits[1:]:
        model, _ = train(cfg, split, hyper, store)
        per_split[split.split_id] = predict(model, model.config, store, split.val)
        log.info("split %d trained", split.split_id)
    return view_audit(per_split, manifest), per_split
