import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trawlvision.metrics import (BinaryCounts, ConfusionMatrix, accuracy, confusion, cross_split_summary,
                                 f1_score, metrics_report, softmax)
from trawlvision.training import Prediction

logits = st.lists(st.floats(-50, 50), min_size=3, max_size=3)


def _pred(label, predicted):
    return Prediction("c", label, predicted, (1 / 3,) * 3, (0.0,) * 3)


def test_softmax_examples():
    np.testing.assert_allclose(softmax([0, 0, 0]), [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(softmax([math.log(2), 0, 0]), [0.5, 0.25, 0.25], atol=1e-15)
    p = softmax([1000.0, 0.0, 0.0])
    assert np.all(np.isfinite(p)) and p[0] == 1.0 and p[1] < 1e-300


def test_softmax_rejects_non_finite():
    with pytest.raises(ValueError):
        softmax([np.inf, 0, 0])


@given(logits, st.floats(-100, 100))
def test_softmax_shift_invariance(x, c):
    np.testing.assert_allclose(softmax(np.array(x) + c), softmax(x), atol=1e-12)


@given(logits)
def test_softmax_normalised_and_argmax(x):
    p = softmax(x)
    assert abs(p.sum() - 1) < 1e-9 and np.all(p >= 0)
    top = sorted(x)
    if top[-1] - top[-2] > 1e-9:        # ties within float resolution have no defined argmax
        assert p.argmax() == int(np.argmax(x))


def test_f1_examples():
    assert f1_score(BinaryCounts(20, 0, 0)).value == 1.0
    assert f1_score(BinaryCounts(0, 5, 5)).value == 0.0
    assert f1_score(BinaryCounts(8, 2, 2)).value == pytest.approx(0.8, abs=1e-15)
    r = f1_score(BinaryCounts(0, 0, 0, 7))
    assert r.value == 0.0 and r.degenerate


counts = st.integers(0, 50)


@given(counts, counts, counts)
def test_f1_symmetric_and_monotone(tp, fp, fn):
    a = f1_score(BinaryCounts(tp, fp, fn)).value
    assert a == f1_score(BinaryCounts(tp, fn, fp)).value
    assert f1_score(BinaryCounts(tp, fp + 1, fn)).value <= a
    assert f1_score(BinaryCounts(tp, fp, fn + 1)).value <= a
    assert 0 <= a <= 1


def test_confusion_and_accuracy():
    preds = [_pred("NF", "NF"), _pred("NR", "R"), _pred("R", "R"), _pred("R", "NF")]
    cm = confusion(preds)
    assert cm.to_list() == [[1, 0, 0], [0, 0, 1], [1, 0, 1]]
    assert accuracy(preds) == 0.5
    assert cm.binary("NF") == BinaryCounts(1, 1, 0, 2)
    with pytest.raises(ValueError):
        confusion([])


@given(st.lists(st.tuples(st.sampled_from("NF NR R".split()), st.sampled_from("NF NR R".split())), min_size=1))
def test_accuracy_is_trace_over_total(pairs):
    cm = ConfusionMatrix.from_labels(*zip(*pairs))
    assert cm.accuracy() == pytest.approx(np.trace(cm.counts) / len(pairs))
    b = cm.binary("NF")
    assert b.n == cm.total


def test_all_correct_is_diagonal():
    cm = confusion([_pred(c, c) for c in ("NF", "NR", "R", "R")])
    assert np.count_nonzero(cm.counts - np.diag(np.diag(cm.counts))) == 0
    assert cm.accuracy() == 1.0


TWO_STREAM_ACC = (67.74, 64.52, 61.29, 59.68, 59.68, 62.90, 70.97, 66.13, 54.84, 66.13)
TWO_STREAM_F1 = (78.26, 78.26, 70.59, 70.83, 73.08, 71.43, 80.85, 71.70, 68.00, 73.17)


def test_cross_split_summary_reference_rows():
    assert cross_split_summary(TWO_STREAM_ACC).format() == "63.39 ± 4.45"
    assert cross_split_summary(TWO_STREAM_F1).format() == "73.62 ± 3.91"


def test_cross_split_summary_population_std_oracle():
    # independent oracle: statistics.pstdev
    import statistics
    s = cross_split_summary(TWO_STREAM_ACC)
    assert s.std == pytest.approx(statistics.pstdev(TWO_STREAM_ACC), rel=1e-12)
    assert s.mean == pytest.approx(statistics.fmean(TWO_STREAM_ACC), rel=1e-12)


def test_cross_split_summary_edge_cases():
    assert cross_split_summary([0.5] * 10).format(100) == "50.00 ± 0.00"
    with pytest.raises(ValueError):
        cross_split_summary([0.5])


def test_metrics_report_structure():
    per_split = {1: [_pred("NF", "NF"), _pred("R", "R")], 2: [_pred("NF", "R"), _pred("R", "R")]}
    rep = metrics_report(per_split)
    assert rep["splits"]["1"]["accuracy"] == 1.0
    assert rep["splits"]["2"]["f1_nf"] == 0.0
    assert rep["confusion_total"] == [[1, 0, 1], [0, 0, 0], [0, 0, 2]]
    assert rep["summary"]["accuracy_mean"] == 0.75
