"""The eleven acceptance criteria, each at its stated tolerance and runtime budget.

A one-line PASS/FAIL verdict per criterion is printed in the terminal summary.
"""
import json
import os

import numpy as np
import pytest
import torch

from test_explain import Probe, _x
from test_flow import interior, texture
from test_metrics import TWO_STREAM_ACC, TWO_STREAM_F1
from test_models import max_rel_grad_error, rand, seeded
from trawlvision.audit import (PaddingProbeConfig, TimestampProbeConfig, ViewBiasConfig, padding_probe,
                               timestamp_probe, view_bias_experiment)
from trawlvision.cli import main
from trawlvision.dataio import ClipStore, SplitSpec
from trawlvision.explain import gradcam
from trawlvision.flow import dense_flow
from trawlvision.metrics import BinaryCounts, cross_split_summary, f1_score, softmax
from trawlvision.models import build_model, desk_config
from trawlvision.scenegen import BiasConfig, generate_dataset
from trawlvision.training import desk_hyperparams, predict, train


def test_criterion_01_metrics_oracle(verdict):
    with verdict(1, "metrics oracle", 1) as v:
        acc, f1 = cross_split_summary(TWO_STREAM_ACC).format(), cross_split_summary(TWO_STREAM_F1).format()
        v.detail = f"accuracy {acc}, F1 {f1}"
        assert (acc, f1) == ("63.39 ± 4.45", "73.62 ± 3.91")


def test_criterion_02_softmax_f1(verdict):
    with verdict(2, "softmax / F1 properties", 1) as v:
        rng = np.random.default_rng(0)
        for _ in range(500):
            x = rng.normal(0, 20, 3)
            p = softmax(x)
            np.testing.assert_allclose(softmax(x + rng.uniform(-100, 100)), p, atol=1e-12)
            assert abs(p.sum() - 1) < 1e-12 and p.argmax() == x.argmax()
        cases = [f1_score(BinaryCounts(*c)).value for c in ((20, 0, 0), (0, 5, 5), (8, 2, 2))]
        v.detail = f"F1 cases {cases}"
        assert cases[0] == 1.0 and cases[1] == 0.0 and abs(cases[2] - 0.8) < 1e-15


def test_criterion_03_flow(verdict):
    with verdict(3, "flow accuracy", 60) as v:
        worst, worst_anti = 0.0, 0.0
        for shift in (1, 2, 3):
            for axis in (0, 1):
                a = texture(seed=shift)
                b = np.roll(a, shift, axis=axis)
                f = interior(dense_flow(a, b))
                want = (shift, 0) if axis == 1 else (0, shift)
                worst = max(worst, *(abs(np.median(f[..., k]) - want[k]) for k in (0, 1)))
                worst_anti = max(worst_anti, float(np.median(np.abs(f + interior(dense_flow(b, a))))))
        v.detail = f"median error {worst:.3f} px, anti-symmetry {worst_anti:.3f} px"
        assert worst < 0.25 and worst_anti < 0.5


def test_criterion_04_gradient_checks(verdict):
    with verdict(4, "finite-difference gradients", 300) as v:
        cases = {"spatial": (1, 8, 32, 32), "temporal": (1, 14, 32, 32), "hybrid": (1, 12, 32, 32),
                 "timesformer": (1, 8, 32, 32)}
        errors = {}
        for arch, shape in cases.items():
            model = seeded(desk_config(arch, image_size=32, dropout_rate=0.0))
            errors[arch] = max(max_rel_grad_error(model, rand(*shape, seed=t), t) for t in range(3))
        v.detail = ", ".join(f"{k} {e:.1e}" for k, e in errors.items())
        assert max(errors.values()) < 1e-3


def test_criterion_05_transformer_structure(verdict):
    with verdict(5, "transformer structure", 10) as v:
        big = seeded(desk_config("timesformer", image_size=224, embed_dim=32, depth=1, heads=4, frames_per_video=1))
        div = seeded(desk_config("timesformer", image_size=64, frames_per_video=1))
        joint = build_model(desk_config("timesformer", image_size=64, frames_per_video=1, attention="joint")).eval()
        joint.load_state_dict(div.state_dict())
        x = rand(3, 1, 64, 64)
        with torch.no_grad():
            equal = torch.equal(div(x), joint(x))
        v.detail = f"{big.n_patches} tokens at 224/16, T=1 logits equal: {equal}"
        assert big.n_patches == 196 and equal


def test_criterion_06_gradcam_oracle(verdict):
    with verdict(6, "Grad-CAM oracle", 10) as v:
        m = Probe().eval()
        err = 0.0
        for target in (0, 1):
            x = _x(target)
            with torch.no_grad():
                a = torch.relu(m.feat(x))[0, target].numpy()
            (amap,) = gradcam(m, x, target)
            err = max(err, float(np.abs(amap.values - a / a.max()).max()))
        (zero,) = gradcam(m, _x(), 2)
        v.detail = f"max deviation {err:.1e}, zero-gradient map max {zero.values.max()}"
        assert err < 1e-6 and not zero.values.any()


def test_criterion_07_overfit(verdict, tmp_path):
    with verdict(7, "10-clip overfit", 900) as v:
        manifest = generate_dataset(tmp_path, (4, 3, 3), BiasConfig(), seed=11)
        store = ClipStore(manifest)
        ids = [r.clip_id for r in manifest]
        split = SplitSpec(split_id=0, train=ids, val=[], test=[])
        accs = {}
        for arch in ("two_stream", "hybrid", "timesformer"):
            hyper = desk_hyperparams(arch, epochs=60, early_stop_patience=60, augment_flip=False)
            model, _ = train(desk_config(arch), split, hyper, store)
            preds = predict(model, model.config, store, ids)
            accs[arch] = sum(p.predicted == p.label for p in preds) / len(ids)
        v.detail = ", ".join(f"{k} {a:.0%}" for k, a in accs.items())
        assert all(a == 1.0 for a in accs.values())


def test_criterion_08_view_bias(verdict, tmp_path):
    with verdict(8, "planted view bias", 3600) as v:
        report, _ = view_bias_experiment(ViewBiasConfig(str(tmp_path)))
        v.detail = (f"{report['views_matching_majority']}/16 views modal = majority; agreement "
                    f"{report['majority_agreement']:.3f} vs baseline {report['majority_agreement_baseline']:.3f}")
        assert report["views_matching_majority"] >= 12
        assert report["majority_agreement"] > report["majority_agreement_baseline"]


def test_criterion_09_padding_leak(verdict, tmp_path):
    with verdict(9, "padding leakage", 1800) as v:
        pp = {name: padding_probe(PaddingProbeConfig(str(tmp_path / name), correlated=corr))["mean_pp_short_padded"]
              for name, corr in (("correlated", True), ("control", False))}
        v.detail = f"mean PP(R) on padded clips: correlated {pp['correlated']:.4f}, control {pp['control']:.4f}"
        assert pp["correlated"] > 0.99 and pp["control"] < 0.9


def test_criterion_10_timestamp_leak(verdict, tmp_path):
    with verdict(10, "timestamp leakage", 1800) as v:
        r = timestamp_probe(TimestampProbeConfig(str(tmp_path)))
        v.detail = (f"uncropped mass {r['uncropped']['region_mass']:.4f} = {r['mass_ratio']:.2f}x area "
                    f"{r['box_area_fraction']:.4f}; cropped mass {r['cropped']['region_mass']:.4f}")
        assert r["mass_ratio"] >= 3.0
        assert r["cropped"]["region_mass"] <= 0.01


def _pipeline(root):
    steps = [
        ["gen", "--out", "data", "--n-per-class", "8", "8", "8", "--rho-view", "0.9", "--seed", "4"],
        ["split", "--data", "data", "--out", "splits", "--n-splits", "2", "--seed", "4"],
        ["train", "--data", "data", "--splits", "splits", "--split", "1", "--arch", "two_stream",
         "--out", "model", "--epochs", "2", "--seed", "4"],
        ["eval", "--data", "data", "--splits", "splits", "--split", "1", "--checkpoint", "model/checkpoint.bin",
         "--subset", "val", "--out", "eval_1.json"],
        ["eval", "--data", "data", "--splits", "splits", "--split", "2", "--checkpoint", "model/checkpoint.bin",
         "--subset", "val", "--out", "eval_2.json"],
        ["audit", "--data", "data", "--predictions", "eval_1.json", "eval_2.json", "--out", "audit/audit.json",
         "--seed", "4"],
    ]
    cwd = os.getcwd()
    os.chdir(root)
    try:
        for argv in steps:
            assert main(argv) == 0, argv
    finally:
        os.chdir(cwd)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*.json"))}


def test_criterion_11_determinism(verdict, tmp_path):
    (tmp_path / "a").mkdir()
    first = _pipeline(tmp_path / "a")
    (tmp_path / "b").mkdir()
    with verdict(11, "determinism", 600) as v:
        second = _pipeline(tmp_path / "b")
        differing = sorted(k for k in first.keys() | second.keys() if first.get(k) != second.get(k))
        v.detail = f"{len(first)} JSON files compared, {len(differing)} differ {differing[:3]}"
        assert not differing and "audit/audit.json" in first
