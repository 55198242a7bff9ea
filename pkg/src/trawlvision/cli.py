"""Command-line entry point: ``python -m trawlvision <command> ...``.

Commands: gen, split, train, eval, explain, audit, report.  Every command
copies the configuration it ran with into its output directory.  Errors are
reported on stderr as a single ``error: <module>: <message>`` line.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("trawlvision")


# ---------------------------------------------------------------------------
# helpers
def _write_json(obj, path: Path) -> None:
    from .metrics import dump_json
    path.parent.mkdir(parents=True, exist_ok=True)
    dump_json(obj, path)


def _record_run(out: Path, args: argparse.Namespace, **extra) -> None:
    """run.json: the parsed arguments plus anything the command resolved from them."""
    d = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    d.update(extra)
    d["version"] = __version__
    _write_json(d, out / "run.json")


def _read_ini(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path:
        if not Path(path).is_file():
            raise FileNotFoundError(f"config file {path} not found")
        cp.read(path)
    return cp


def _section_overrides(cp: configparser.ConfigParser, section: str, cls) -> dict:
    """Typed values from one INI section for the fields of dataclass ``cls``."""
    from .training import _parse_value
    if not cp.has_section(section):
        return {}
    types = {f.name: str(f.type) for f in dataclasses.fields(cls)}
    out = {}
    for key, raw in cp[section].items():
        if key not in types:
            raise ValueError(f"[{section}] unknown key {key!r}")
        t = types[key]
        if "tuple" in t:
            out[key] = tuple(int(x) if x.strip().lstrip("-").isdigit() else float(x) for x in raw.split(","))
        else:
            out[key] = _parse_value(raw, t)
    return out


def _load_dataset(path: str):
    from .dataio import ClipStore, Manifest
    root = Path(path)
    if not (root / "manifest.csv").is_file():
        raise FileNotFoundError(f"{root}: no manifest.csv (run `gen` first)")
    manifest = Manifest.read_csv(root / "manifest.csv", root)
    return manifest, ClipStore(manifest)


def _load_split(splits_dir: str, split_id: int):
    from .dataio import read_split
    path = Path(splits_dir) / f"split_{split_id:02d}.json"
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found (run `split` first)")
    return read_split(path)


# ---------------------------------------------------------------------------
# commands
def cmd_gen(args) -> None:
    from .dataio import REFERENCE_SPLIT_COUNTS
    from .scenegen import BiasConfig, generate_dataset
    cp = _read_ini(args.config)
    bias_kw = _section_overrides(cp, "bias", BiasConfig)
    for flag, key in (("rho_view", "view_class_correlation"), ("rho_ts", "timestamp_class_correlation"),
                      ("rho_pad", "padding_class_correlation"), ("length_offset", "class_length_offset")):
        if getattr(args, flag) is not None:
            bias_kw[key] = tuple(getattr(args, flag)) if flag == "length_offset" else getattr(args, flag)
    bias = BiasConfig(**bias_kw)
    if args.n_per_class is not None:
        counts = tuple(args.n_per_class)
    elif args.preset == "paper-counts" or args.strict_paper:
        counts = tuple(sum(r) for r in REFERENCE_SPLIT_COUNTS)
    else:
        counts = (40, 40, 40)
    out = Path(args.out)
    manifest = generate_dataset(out, counts, bias, seed=args.seed, image_size=(args.image_size,) * 2,
                                timestamp_enabled=not args.no_timestamp, write_masks=args.masks)
    _write_json({"bias": dataclasses.asdict(bias), "n_per_class": list(counts), "seed": args.seed,
                 "image_size": args.image_size, "timestamp_enabled": not args.no_timestamp},
                out / "generation.json")
    _record_run(out, args)
    print(f"{len(manifest)} clips written to {out}")


def cmd_split(args) -> None:
    from .dataio import scaled_counts, write_splits, make_splits
    manifest, _ = _load_dataset(args.data)
    totals = manifest.class_totals()
    counts = scaled_counts([totals[c] for c in ("NF", "NR", "R")])
    splits = make_splits(manifest, n_splits=args.n_splits, counts=counts, seed=args.seed)
    out = Path(args.out)
    write_splits(splits, out)
    _record_run(out, args, counts=[list(c) for c in counts])
    print(f"{len(splits)} splits written to {out}")


def _resolve_training(args):
    from .models import desk_config, reference_config
    from .models.config import ModelConfig
    from .training import Hyperparams, desk_hyperparams, reference_hyperparams
    cp = _read_ini(args.config)
    strict = args.strict_paper
    preset = "table3" if strict else args.preset
    if preset == "table3":
        hyper = reference_hyperparams(args.arch, seed=args.seed)
        if strict:
            hyper = dataclasses.replace(hyper, grad_clip=None, early_stop_patience=hyper.epochs)
    else:
        hyper = desk_hyperparams(args.arch, seed=args.seed)
    if cp.has_section("hyperparams"):
        hyper = Hyperparams(**{**dataclasses.asdict(hyper), **_section_overrides(cp, "hyperparams", Hyperparams)})
    flag_map = {"lr": "learning_rate", "epochs": "epochs", "batch_size": "batch_size",
                "image_size": "image_size", "frames": "frames_per_video"}
    over = {k: getattr(args, f) for f, k in flag_map.items() if getattr(args, f) is not None}
    if over:
        hyper = dataclasses.replace(hyper, **over)
    model_kw = _section_overrides(cp, "model", ModelConfig)
    model_kw.pop("architecture", None)
    if args.seq_len is not None:
        model_kw["seq_len"] = args.seq_len
    if args.no_crop:
        model_kw["crop_timestamp"] = False
    scale = "paper" if strict else args.scale
    config = (reference_config if scale == "paper" else desk_config)(args.arch, **model_kw)
    return config, hyper


def cmd_train(args) -> None:
    from .models import save_checkpoint
    from .training import pretrain_backbone, train
    manifest, store = _load_dataset(args.data)
    split = _load_split(args.splits, args.split)
    config, hyper = _resolve_training(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "hyperparams.ini").write_text(hyper.to_ini())
    init = pretrain_backbone(config.with_(image_size=hyper.image_size), seed=args.seed) if args.pretrain else None
    model, hist = train(config, split, hyper, store, backbone_init=init)
    histories = hist if isinstance(hist, dict) else {"": hist}
    for name, h in histories.items():
        (out / (f"history_{name}.csv" if name else "history.csv")).write_text(h.to_csv())
    meta = {"split_id": split.split_id, "seed": args.seed,
            "best_epoch": {k or config.architecture: h.best_epoch for k, h in histories.items()}}
    save_checkpoint(model, model.config, out / "checkpoint.bin", meta)
    (out / "model_config.json").write_text(model.config.to_json())
    _record_run(out, args)
    print(f"checkpoint written to {out / 'checkpoint.bin'}")


def cmd_eval(args) -> None:
    from .metrics import confusion, f1_score
    from .models import load_checkpoint
    from .training import predict, predictions_to_json
    manifest, store = _load_dataset(args.data)
    split = _load_split(args.splits, args.split)
    model, config, meta = load_checkpoint(args.checkpoint)
    preds = predict(model, config, store, split.subset(args.subset))
    cm = confusion(preds)
    f1 = f1_score(cm.binary("NF"))
    report = {"split_id": split.split_id, "subset": args.subset, "checkpoint": str(args.checkpoint),
              "architecture": config.architecture, "accuracy": cm.accuracy(), "f1_nf": f1.value,
              "f1_degenerate": f1.degenerate, "confusion": cm.to_list(),
              "predictions": predictions_to_json(preds)}
    out = Path(args.out)
    _write_json(report, out)
    print(f"accuracy {cm.accuracy():.4f}  F1(NF) {f1.value:.4f} -> {out}")


def cmd_explain(args) -> None:
    import cv2
    import torch
    from .dataio import CLASS_INDEX, CLASSES
    from .explain import gradcam, overlay, region_mass, save_map, save_overlay, transformer_map
    from .models import clip_input, load_checkpoint, preprocess_frames
    from .dataio import sample_indices
    from .scenegen import read_scene_spec, scene_masks
    manifest, store = _load_dataset(args.data)
    model, config, _ = load_checkpoint(args.checkpoint)
    if args.clip not in manifest:
        raise KeyError(f"clip {args.clip!r} is not in the dataset")
    clip = store.get(args.clip)
    x = clip_input(clip, config)
    batch = tuple(t[None] for t in x) if isinstance(x, tuple) else x[None]
    with torch.no_grad():
        out = model(*batch) if isinstance(batch, tuple) else model(batch)
    predicted = CLASSES[int(out.argmax())]
    target = predicted if args.target == "predicted" else args.target
    k = CLASS_INDEX[target]
    if config.architecture == "timesformer":
        maps = transformer_map(model, batch, k, average=args.average, source=args.clip)
    elif config.architecture == "two_stream":
        maps = gradcam(model.spatial, batch[0], k, source="spatial") + \
            gradcam(model.temporal, batch[1], k, source="temporal")
    else:
        maps = gradcam(model, batch, k, source=args.clip)
    frames = preprocess_frames(clip, config).frames
    idx = sample_indices(frames.shape[0], config.frames_per_video)
    masks = None
    spec_path = Path(args.data) / manifest[args.clip].path / "scene.json"
    if spec_path.is_file():
        spec = read_scene_spec(args.data, args.clip)
        masks = scene_masks(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"clip_id": args.clip, "label": clip.label, "predicted": predicted, "target": target,
               "architecture": config.architecture, "maps": []}
    for i, m in enumerate(maps):
        t = int(idx[min(i, len(idx) - 1)]) if len(maps) > 1 else int(idx[0])
        t = min(t, frames.shape[0] - 1)
        name = f"map_{i:02d}"
        save_map(m, out / name)
        save_overlay(overlay(m.values, frames[t]), out / f"overlay_{i:02d}.png")
        entry = {"file": name, "source": m.source, "frame": t, "layer": m.layer_name,
                 "raw_mass": m.raw_mass, "zero_gradient": m.zero_gradient}
        if masks is not None and t < masks[0].shape[0]:
            size = m.values.shape[::-1]
            for label, mk in zip(("laser", "fish"), masks):
                small = cv2.resize(mk[t].astype(np.uint8), size, interpolation=cv2.INTER_NEAREST).astype(bool)
                entry[f"{label}_mass"] = region_mass(m.values, small)
        summary["maps"].append(entry)
    _write_json(summary, out / "explain.json")
    _record_run(out, args)
    print(f"{len(maps)} maps written to {out}")


def cmd_audit(args) -> None:
    from .audit import (PaddingProbeConfig, TimestampProbeConfig, padding_probe, timestamp_probe,
                        view_audit)
    from .training import predictions_from_json
    out = Path(args.out)
    report = {}
    if args.predictions:
        manifest, _ = _load_dataset(args.data)
        per_split = {}
        for path in args.predictions:
            d = json.loads(Path(path).read_text())
            if d["split_id"] in per_split:
                raise ValueError(f"split {d['split_id']} given twice")
            per_split[d["split_id"]] = predictions_from_json(d["predictions"])
        report.update(view_audit(per_split, manifest, use_predicted=args.predicted_pp, seed=args.seed))
    elif not (args.padding_probe or args.timestamp_probe):
        raise ValueError("nothing to audit: pass --predictions and/or a probe flag")
    probe_dir = out.parent / (out.stem + "_probes")
    if args.padding_probe:
        report["padding_probe"] = {
            name: padding_probe(PaddingProbeConfig(str(probe_dir / f"padding_{name}"), correlated=corr,
                                                   epochs=args.probe_epochs, data_seed=args.seed,
                                                   train_seed=args.seed))
            for name, corr in (("correlated", True), ("control", False))}
    if args.timestamp_probe:
        report["timestamp_probe"] = timestamp_probe(TimestampProbeConfig(
            str(probe_dir / "timestamp"), rho_ts=args.rho_ts, epochs=args.probe_epochs,
            data_seed=args.seed, train_seed=args.seed))
    _write_json(report, out)
    _record_run(out.parent, args)
    print(f"audit report written to {out}")


def cmd_report(args) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from .dataio import CLASSES
    audit = json.loads(Path(args.audit).read_text())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "adjacency_curves" in audit:
        fig, axes = plt.subplots(len(CLASSES), 1, figsize=(8, 6), sharey=True)
        for ax, c in zip(axes, CLASSES):
            pts = audit["adjacency_curves"][c]
            ax.plot(range(len(pts)), [p["pp"] for p in pts], lw=1)
            views = [p["view_id"] for p in pts]
            for i in range(1, len(views)):
                if views[i] != views[i - 1]:
                    ax.axvline(i - 0.5, color="0.8", lw=0.5)
            ax.set_ylabel(f"PP ({c})")
            ax.set_ylim(0, 1)
        axes[-1].set_xlabel("clip (capture order)")
        fig.tight_layout()
        fig.savefig(out / "adjacency_curves.png", dpi=100)
        plt.close(fig)
        written.append("adjacency_curves.png")
    if "per_view" in audit:
        views = sorted(audit["per_view"], key=int)
        dist = np.array([[audit["per_view"][v]["distribution"][c] for c in CLASSES] for v in views])
        fig, ax = plt.subplots(figsize=(8, 3))
        bottom = np.zeros(len(views))
        for j, c in enumerate(CLASSES):
            ax.bar(views, dist[:, j], bottom=bottom, label=c)
            bottom += dist[:, j]
        ax.set_xlabel("camera view")
        ax.set_ylabel("clips")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "view_distributions.png", dpi=100)
        plt.close(fig)
        fig, axes = plt.subplots(4, 4, figsize=(9, 9))
        for ax, v in zip(axes.ravel(), views):
            m = np.array(audit["per_view"][v]["confusion"])
            ax.imshow(m, cmap="Blues")
            for (i, j), n in np.ndenumerate(m):
                ax.text(j, i, str(n), ha="center", va="center", fontsize=7)
            ax.set_title(f"view {v} ({audit['per_view'][v]['majority']})", fontsize=8)
            ax.set_xticks(range(len(CLASSES)), CLASSES, fontsize=6)
            ax.set_yticks(range(len(CLASSES)), CLASSES, fontsize=6)
        fig.tight_layout()
        fig.savefig(out / "view_confusion.png", dpi=100)
        plt.close(fig)
        written += ["view_distributions.png", "view_confusion.png"]
    if "timestamp_probe" in audit:
        tp = audit["timestamp_probe"]
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.bar(["uncropped", "cropped"], [tp["uncropped"]["region_mass"], tp["cropped"]["region_mass"]])
        ax.axhline(tp["box_area_fraction"], color="k", ls="--", lw=1)
        ax.set_ylabel("Grad-CAM mass on timestamp box")
        fig.tight_layout()
        fig.savefig(out / "timestamp_probe.png", dpi=100)
        plt.close(fig)
        written.append("timestamp_probe.png")
    if not written:
        raise ValueError(f"{args.audit}: no audit sections to plot")
    _record_run(out, args, figures=written)
    print(f"{len(written)} figures written to {out}")


# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trawlvision", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0, help="seed for every stochastic step")
        sp.add_argument("--config", help="INI file ([bias], [hyperparams], [model] sections); flags win")
        sp.add_argument("--strict-paper", action="store_true",
                        help="reference counts and hyperparameters, full-size models, no gradient clipping")

    g = sub.add_parser("gen", help="render a synthetic dataset")
    common(g)
    g.add_argument("--out", required=True)
    g.add_argument("--preset", choices=["paper-counts", "small"], default="small")
    g.add_argument("--n-per-class", type=int, nargs=3, metavar=("NF", "NR", "R"))
    g.add_argument("--rho-view", type=float)
    g.add_argument("--rho-ts", type=float)
    g.add_argument("--rho-pad", type=float)
    g.add_argument("--length-offset", type=float, nargs=3, metavar=("NF", "NR", "R"))
    g.add_argument("--image-size", type=int, default=64)
    g.add_argument("--no-timestamp", action="store_true")
    g.add_argument("--masks", action="store_true", help="also store ground-truth laser/fish masks")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("split", help="write stratified train/val/test splits")
    common(s)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--n-splits", type=int, default=10, help="evaluation splits (plus tuning split 0)")
    s.set_defaults(func=cmd_split)

    t = sub.add_parser("train", help="train one model on one split")
    common(t)
    t.add_argument("--data", required=True)
    t.add_argument("--splits", required=True)
    t.add_argument("--split", type=int, required=True)
    t.add_argument("--arch", required=True, choices=["spatial", "temporal", "two_stream", "hybrid", "timesformer"])
    t.add_argument("--out", required=True)
    t.add_argument("--preset", choices=["desk", "table3"], default="desk")
    t.add_argument("--scale", choices=["desk", "paper"], default="desk")
    t.add_argument("--lr", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--image-size", type=int)
    t.add_argument("--frames", type=int)
    t.add_argument("--seq-len", type=int, help="pad/truncate clips to this length before sampling")
    t.add_argument("--no-crop", action="store_true", help="keep the timestamp region")
    t.add_argument("--pretrain", action="store_true", help="initialise the backbone on synthetic stills")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="predict a split subset and write metrics JSON")
    common(e)
    e.add_argument("--data", required=True)
    e.add_argument("--splits", required=True)
    e.add_argument("--split", type=int, required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--subset", choices=["train", "val", "test"], default="test")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("explain", help="Grad-CAM maps and overlays for one clip")
    common(x)
    x.add_argument("--data", required=True)
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--clip", required=True)
    x.add_argument("--target", choices=["predicted", "NF", "NR", "R"], default="predicted")
    x.add_argument("--average", action="store_true", help="one clip-level transformer map")
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_explain)

    a = sub.add_parser("audit", help="per-view / adjacency audit and leakage probes")
    common(a)
    a.add_argument("--data")
    a.add_argument("--predictions", nargs="+", help="eval JSON files of different splits (val subset)")
    a.add_argument("--predicted-pp", action="store_true", help="adjacency curves use predicted-class PP")
    a.add_argument("--padding-probe", action="store_true")
    a.add_argument("--timestamp-probe", action="store_true")
    a.add_argument("--rho-ts", type=float, default=0.95)
    a.add_argument("--probe-epochs", type=int, default=15)
    a.add_argument("--out", required=True, help="audit JSON path")
    a.set_defaults(func=cmd_audit)

    r = sub.add_parser("report", help="render figures from an audit JSON")
    common(r)
    r.add_argument("--audit", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def _error_module(exc: BaseException) -> str:
    """Deepest package module in the traceback, e.g. ``dataio``."""
    name = "cli"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        mod = frame.f_globals.get("__name__", "")
        if mod.startswith("trawlvision."):
            name = mod.split(".", 1)[1]
    return name


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "audit" and args.predictions and not args.data:
        parser.error("audit --predictions needs --data")
    try:
        args.func(args)
    except (ValueError, KeyError, FileNotFoundError, FloatingPointError, OSError) as exc:
        msg = str(exc.args[0]) if isinstance(exc, KeyError) and exc.args else str(exc)
        print(f"error: {_error_module(exc)}: {' '.join(msg.split())}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
