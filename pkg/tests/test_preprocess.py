import numpy as np
import pytest

from paac.envs.preprocess import (
    area_downscale, frame_stack_push, frame_stack_reset, overlap_weights, preprocess_frame_pair,
)
from paac.errors import ConfigError
from oracles import naive_preprocess_pair


def const_frame(v):
    return np.full((210, 160, 3), v, dtype=np.uint8)


def test_zero_frames():
    out = preprocess_frame_pair(const_frame(0), const_frame(0))
    assert out.shape == (84, 84, 1) and out.dtype == np.uint8 and not out.any()


def test_constant_frames_survive():
    out = preprocess_frame_pair(const_frame(10), const_frame(200))
    assert np.all(out == 200)


def test_overlap_weights_partition_source():
    for src in (210, 160):
        w = overlap_weights(src, 84)
        assert np.all(w.sum(axis=1) == src)
        assert np.all(w.sum(axis=0) == 84)


def test_random_pairs_match_naive_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        f1 = rng.integers(0, 256, (210, 160, 3), dtype=np.uint8)
        f2 = rng.integers(0, 256, (210, 160, 3), dtype=np.uint8)
        assert np.array_equal(preprocess_frame_pair(f1, f2), naive_preprocess_pair(f1, f2))


def test_rounding_half_up():
    gray = np.zeros((2, 1), dtype=np.int64)
    gray[0, 0] = 1  # average 0.5 -> rounds to 1
    assert area_downscale(gray, 1, 1)[0, 0] == 1


@pytest.mark.parametrize("shape", [(210, 160), (160, 210, 3), (210, 160, 4)])
def test_wrong_dimensions(shape):
    bad = np.zeros(shape, dtype=np.uint8)
    with pytest.raises(ConfigError):
        preprocess_frame_pair(bad, const_frame(0))


def test_wrong_dtype():
    with pytest.raises(ConfigError):
        preprocess_frame_pair(const_frame(0).astype(np.float32), const_frame(0))


def test_frame_stack():
    a, b, c, d, f = (np.full((84, 84, 1), i, np.uint8) for i in range(5))
    assert frame_stack_push((a, b, c, d), f) == (b, c, d, f)
    assert frame_stack_reset(f) == (f, f, f, f)
    s = frame_stack_reset(a)
    for x in (a, b, c, d):
        s = frame_stack_push(s, x)
    assert s == (a, b, c, d)
    with pytest.raises(ConfigError):
        frame_stack_push((a, b), f)
