import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from torch import nn

from trawlvision.dataio import make_splits, scaled_counts
from trawlvision.models import desk_config
from trawlvision.training import (REFERENCE_HYPERPARAMS, Hyperparams, InputBuilder, PlateauScheduler, desk_hyperparams, fit,
                                  predict, predictions_from_json, predictions_to_json, reference_hyperparams, train)


def _opt(lr=1e-4):
    return torch.optim.SGD([nn.Parameter(torch.zeros(1))], lr=lr)


def test_scheduler_example():
    opt = _opt(1e-4)
    s = PlateauScheduler(opt, patience=10, factor=0.1)
    s.step(1.0)
    lrs = []
    for k in range(10):
        s.step(1.1 + 0.1 * k)
        lrs.append(opt.param_groups[0]["lr"])
    assert lrs[:9] == [1e-4] * 9
    assert lrs[9] == pytest.approx(1e-5, rel=1e-12)


@given(st.lists(st.floats(0, 10), min_size=1, max_size=80), st.integers(1, 15))
def test_scheduler_bounds(losses, patience):
    opt = _opt(1.0)
    s = PlateauScheduler(opt, patience=patience)
    prev = 1.0
    for v in losses:
        s.step(v)
        assert opt.param_groups[0]["lr"] <= prev
        prev = opt.param_groups[0]["lr"]
    assert s.n_fired <= len(losses) // patience


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        Hyperparams(learning_rate=0)
    with pytest.raises(ValueError):
        Hyperparams(scheduler_patience=0)


def test_reference_presets():
    h = reference_hyperparams("spatial")
    assert (h.learning_rate, h.epochs, h.batch_size, h.image_size, h.frames_per_video) == (1e-4, 200, 4, 300, 8)
    h = reference_hyperparams("timesformer")
    assert (h.learning_rate, h.epochs, h.batch_size, h.image_size) == (1e-6, 100, 3, 224)
    assert REFERENCE_HYPERPARAMS["hybrid"] == (1e-6, 100, 4, 300, 12)
    assert REFERENCE_HYPERPARAMS["temporal"][4] == 7
    assert reference_hyperparams("two_stream").learning_rate == 1e-4


def test_augmentation_and_scheduler_defaults():
    h = Hyperparams()
    assert [h.flip_for(a) for a in ("spatial", "timesformer", "temporal", "hybrid")] == [True, True, False, False]
    assert [h.scheduler_for(a) for a in ("spatial", "temporal", "hybrid", "timesformer")] == [True, True, False, False]


def test_ini_roundtrip():
    h = desk_hyperparams("spatial", seed=7, grad_clip=None, augment_flip=False)
    text = h.to_ini()
    assert text.startswith("[hyperparams]")
    assert Hyperparams.from_ini(text) == h
    with pytest.raises(ValueError, match="unknown"):
        Hyperparams.from_ini("[hyperparams]\nlr = 3\n")


def test_convex_probe_loss_decreases():
    torch.manual_seed(0)
    x, y = torch.randn(32, 5), torch.randint(0, 3, (32,))
    lin = nn.Linear(5, 3)
    opt = torch.optim.SGD(lin.parameters(), lr=0.05)
    losses = []
    for _ in range(50):
        loss = nn.functional.cross_entropy(lin(x), y)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
    assert all(b < a for a, b in zip(losses, losses[1:]))


@pytest.fixture(scope="module")
def tiny_split(tiny_dataset):
    manifest, store = tiny_dataset
    return make_splits(manifest, n_splits=1, counts=scaled_counts([8, 8, 8]), seed=0)[1]


def _hyper(**kw):
    return desk_hyperparams("spatial", **{"epochs": 3, "image_size": 32, **kw})


def test_training_deterministic_and_min_val_loss(tiny_dataset, tiny_split):
    _, store = tiny_dataset
    cfg = desk_config("spatial", image_size=32)
    m1, h1 = train(cfg, tiny_split, _hyper(seed=3), store)
    m2, h2 = train(cfg, tiny_split, _hyper(seed=3), store)
    for k, v in m1.state_dict().items():
        assert torch.equal(v, m2.state_dict()[k]), k
    assert h1.val_loss == h2.val_loss
    assert h1.best_epoch == int(np.argmin(h1.val_loss))
    assert len(h1.lr) == len(h1.train_loss) == 3
    assert h1.to_csv().splitlines()[0] == "epoch,train_loss,val_loss,val_acc,lr"


def test_two_stream_trains_both_streams(tiny_dataset, tiny_split):
    _, store = tiny_dataset
    model, hist = train(desk_config("two_stream"), tiny_split, desk_hyperparams("two_stream", epochs=1,
                                                                                image_size=32), store)
    assert set(hist) == {"spatial", "temporal"}
    assert model.config.image_size == 32
    preds = predict(model, model.config, store, tiny_split.val)
    for p in preds:
        assert abs(sum(p.probs) - 1) < 1e-6
        np.testing.assert_allclose(np.exp(p.scores), p.probs, rtol=1e-9)


def test_predictions_contract(tiny_dataset, tiny_split):
    manifest, store = tiny_dataset
    cfg = desk_config("spatial", image_size=32)
    model, _ = train(cfg, tiny_split, _hyper(epochs=1), store)
    ids = list(reversed(tiny_split.test))
    a = predict(model, model.config, store, ids)
    b = predict(model, model.config, store, ids)
    assert sorted(p.clip_id for p in a) == sorted(ids)
    assert [p.capture_index for p in a] == sorted(manifest[c].capture_index for c in ids)
    assert all(abs(sum(p.probs) - 1) < 1e-6 for p in a)
    assert [p.probs for p in a] == [p.probs for p in b]
    assert predictions_from_json(predictions_to_json(a)) == a
    with pytest.raises(ValueError, match="not in the dataset"):
        predict(model, model.config, store, ["nope"])


def test_preprocessing_mismatch_rejected(tiny_dataset, tiny_split):
    _, store = tiny_dataset
    cfg = desk_config("timesformer", image_size=32)
    model, _ = train(cfg, tiny_split, desk_hyperparams("timesformer", epochs=1, image_size=32), store)
    with pytest.raises(ValueError, match="preprocessing"):
        predict(model, model.config.with_(image_size=64), store, tiny_split.val[:1])


def test_empty_training_set_rejected(tiny_dataset, tiny_split):
    _, store = tiny_dataset
    from trawlvision.dataio import SplitSpec
    with pytest.raises(ValueError, match="empty"):
        train(desk_config("spatial"), SplitSpec(9, [], tiny_split.val, []), _hyper(), store)


class _NaNModel(nn.Module):
    def __init__(self):
        super().__init__()
        self.w = nn.Parameter(torch.zeros(1))

    def forward(self, x):
        return torch.full((x.shape[0], 3), float("nan")) * self.w


def test_non_finite_loss_aborts(tiny_dataset, tiny_split):
    _, store = tiny_dataset
    builder = InputBuilder(store, desk_config("spatial", image_size=32))
    with pytest.raises(FloatingPointError, match="epoch 0"):
        fit(_NaNModel(), "spatial", builder, tiny_split.train, tiny_split.val, _hyper())
