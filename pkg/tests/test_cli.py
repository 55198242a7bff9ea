import json

import numpy as np
import pytest

from trawlvision.cli import _resolve_training, build_parser, main
from trawlvision.dataio import REFERENCE_SPLIT_COUNTS


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data, splits, ckpt = root / "data", root / "splits", root / "spatial"
    assert main(["gen", "--out", str(data), "--n-per-class", "8", "8", "8", "--image-size", "64",
                 "--rho-view", "0.9", "--masks", "--seed", "3"]) == 0
    assert main(["split", "--data", str(data), "--out", str(splits), "--n-splits", "2", "--seed", "3"]) == 0
    assert main(["train", "--data", str(data), "--splits", str(splits), "--split", "1", "--arch", "spatial",
                 "--out", str(ckpt), "--epochs", "2", "--batch-size", "4"]) == 0
    evals = []
    for s in (1, 2):
        evals.append(root / f"eval_{s}.json")
        assert main(["eval", "--data", str(data), "--splits", str(splits), "--split", str(s),
                     "--checkpoint", str(ckpt / "checkpoint.bin"), "--subset", "val",
                     "--out", str(evals[-1])]) == 0
    return root, data, splits, ckpt, evals


def test_gen_and_split_outputs(pipeline):
    root, data, splits, _, _ = pipeline
    gen = json.loads((data / "generation.json").read_text())
    assert gen["n_per_class"] == [8, 8, 8] and gen["bias"]["view_class_correlation"] == 0.9
    assert (data / "run.json").is_file() and (data / "manifest.csv").is_file()
    assert sorted(p.name for p in splits.glob("split_*.json")) == ["split_00.json", "split_01.json",
                                                                  "split_02.json"]


def test_train_writes_config_and_history(pipeline):
    _, _, _, ckpt, _ = pipeline
    for name in ("hyperparams.ini", "history.csv", "checkpoint.bin", "model_config.json", "run.json"):
        assert (ckpt / name).is_file(), name
    assert "epochs = 2" in (ckpt / "hyperparams.ini").read_text()


def test_eval_probabilities(pipeline):
    d = json.loads(pipeline[4][0].read_text())
    assert d["subset"] == "val" and 0.0 <= d["accuracy"] <= 1.0
    assert d["predictions"]
    for p in d["predictions"]:
        assert abs(sum(p["probs"]) - 1.0) < 1e-6
    assert int(np.sum(d["confusion"])) == len(d["predictions"])


def test_audit_report_explain(pipeline):
    root, data, _, ckpt, evals = pipeline
    audit = root / "audit" / "audit.json"
    assert main(["audit", "--data", str(data), "--predictions", *map(str, evals), "--out", str(audit)]) == 0
    rep = json.loads(audit.read_text())
    assert len(rep["per_view"]) == 16 and "majority_agreement_baseline" in rep
    figs = root / "figs"
    assert main(["report", "--audit", str(audit), "--out", str(figs)]) == 0
    assert {"adjacency_curves.png", "view_distributions.png", "view_confusion.png"} <= \
        {p.name for p in figs.iterdir()}
    clip = (data / "manifest.csv").read_text().splitlines()[1].split(",")[0]
    ex = root / "explain"
    assert main(["explain", "--data", str(data), "--checkpoint", str(ckpt / "checkpoint.bin"),
                 "--clip", clip, "--out", str(ex)]) == 0
    summary = json.loads((ex / "explain.json").read_text())
    assert len(summary["maps"]) == 8
    assert all("laser_mass" in m for m in summary["maps"])
    assert (ex / "overlay_00.png").is_file()


def test_duplicate_split_rejected(pipeline, capsys):
    root, data, _, _, evals = pipeline
    assert main(["audit", "--data", str(data), "--predictions", str(evals[0]), str(evals[0]),
                 "--out", str(root / "dup.json")]) == 1
    err = capsys.readouterr().err.strip()
    assert err.count("\n") == 0 and err.startswith("error: ") and "given twice" in err


def test_missing_dataset_single_line_error(tmp_path, capsys):
    assert main(["split", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "s")]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "manifest.csv" in err[0]


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as e:
        main(["gen", "--out", "x", "--bogus"])
    assert e.value.code == 2


def test_reference_preset_resolution():
    args = build_parser().parse_args(["train", "--data", "d", "--splits", "s", "--split", "1",
                                      "--arch", "spatial", "--out", "o", "--preset", "table3"])
    _, hyper = _resolve_training(args)
    assert (hyper.learning_rate, hyper.epochs, hyper.batch_size) == (1e-4, 200, 4)
    args = build_parser().parse_args(["train", "--data", "d", "--splits", "s", "--split", "1",
                                      "--arch", "timesformer", "--out", "o", "--strict-paper"])
    config, hyper = _resolve_training(args)
    assert hyper.grad_clip is None and hyper.early_stop_patience == hyper.epochs
    assert config.embed_dim == 768 and config.image_size == 224


def test_config_file_overrides(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[hyperparams]\nlearning_rate = 0.005\n[model]\ndepth = 3\n")
    args = build_parser().parse_args(["train", "--data", "d", "--splits", "s", "--split", "1",
                                      "--arch", "timesformer", "--out", "o", "--config", str(ini),
                                      "--epochs", "7"])
    config, hyper = _resolve_training(args)
    assert hyper.learning_rate == 0.005 and hyper.epochs == 7 and config.depth == 3
    ini.write_text("[model]\nwidht = 3\n")
    with pytest.raises(ValueError, match="unknown key"):
        _resolve_training(args)


def test_reference_counts_total():
    assert sum(sum(r) for r in REFERENCE_SPLIT_COUNTS) == 624
