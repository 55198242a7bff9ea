import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trawlvision.flow import (FlowParams, dense_flow, flow_magnitude, pair_indices, read_flow, temporal_stack,
                              write_flow)
from trawlvision.scenegen import band_limited_noise

MARGIN = FlowParams().window


def texture(size=96, seed=0):
    t = band_limited_noise((size, size), np.random.default_rng(seed), cutoff=0.12)
    return np.clip(128 + 40 * t, 0, 255).astype(np.uint8)


def interior(f):
    return f[MARGIN:-MARGIN, MARGIN:-MARGIN]


def test_identical_frames_give_zero_flow():
    a = texture()
    assert np.median(np.hypot(*np.moveaxis(dense_flow(a, a), -1, 0))) < 0.1


@pytest.mark.parametrize("shift", [1, 2, 3])
@pytest.mark.parametrize("axis", [0, 1])
def test_integer_shift_recovered(shift, axis):
    a = texture(seed=shift)
    b = np.roll(a, shift, axis=axis)        # axis 1 -> +x, axis 0 -> +y
    f = interior(dense_flow(a, b))
    want = (shift, 0) if axis == 1 else (0, shift)
    assert abs(np.median(f[..., 0]) - want[0]) < 0.25
    assert abs(np.median(f[..., 1]) - want[1]) < 0.25
    back = interior(dense_flow(b, a))
    assert np.median(np.abs(f + back)) < 0.5


def test_textureless_frames_finite():
    a = np.full((64, 64), 77, np.uint8)
    assert np.isfinite(dense_flow(a, a)).all()


def test_size_mismatch_rejected():
    with pytest.raises(ValueError):
        dense_flow(np.zeros((64, 64), np.uint8), np.zeros((64, 60), np.uint8))


def test_magnitude_examples():
    assert not flow_magnitude(np.zeros((4, 4, 2))).any()
    f = np.zeros((4, 4, 2))
    f[..., 0], f[..., 1] = 3, 4
    np.testing.assert_allclose(flow_magnitude(f, rescale=False), 5.0)
    assert (flow_magnitude(f) == round(5 / 8 * 255)).all()
    f[..., 0] = 100
    assert (flow_magnitude(f) == 255).all()


@given(st.floats(-20, 20), st.floats(-20, 20))
def test_magnitude_rotation_invariant(a, b):
    f1 = np.full((2, 2, 2), 0.0)
    f1[..., 0], f1[..., 1] = a, b
    f2 = np.stack([np.full((2, 2), -b), np.full((2, 2), a)], axis=-1)
    np.testing.assert_array_equal(flow_magnitude(f1), flow_magnitude(f2))


def test_temporal_stack_static_clip():
    frames = np.repeat(texture(64)[None], 10, axis=0)
    s = temporal_stack(frames)
    assert s.shape == (14, 64, 64) and s.dtype == np.uint8
    for k in range(7):
        np.testing.assert_array_equal(s[2 * k], frames[0])
        assert np.median(s[2 * k + 1]) <= 1


def test_temporal_stack_channels_and_determinism():
    rng = np.random.default_rng(1)
    frames = np.stack([np.roll(texture(64, 2), i, axis=1) for i in range(12)])
    frames = np.clip(frames.astype(int) + rng.integers(-2, 3, frames.shape), 0, 255).astype(np.uint8)
    a, b = temporal_stack(frames), temporal_stack(frames)
    assert a.shape[0] == 14
    np.testing.assert_array_equal(a, b)
    assert pair_indices(12, 7).tolist() == [0, 1, 3, 4, 6, 7, 9]


def test_temporal_stack_too_short():
    with pytest.raises(ValueError, match="at least 8"):
        temporal_stack(np.zeros((7, 64, 64), np.uint8))


def test_flow_file_roundtrip(tmp_path):
    f = np.random.default_rng(0).standard_normal((5, 6, 2)).astype(np.float32)
    write_flow(tmp_path / "f.bin", f)
    raw = (tmp_path / "f.bin").read_bytes()
    assert raw[:4] == b"TVFL" and len(raw) == 16 + f.size * 4
    np.testing.assert_array_equal(read_flow(tmp_path / "f.bin"), f)
