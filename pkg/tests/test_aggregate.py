import numpy as np
import pytest

from orsim import imaging
from orsim.aggregate import (WindowSpec, acf_pool, region_convolve,
                             window_vector, window_vector_length,
                             POST_SMOOTH_RADIUS)
from orsim.channels_spatial import ChannelStack


def make_stack(c=3, h=16, w=16, seed=0, groups=None):
    rng = np.random.default_rng(seed)
    data = rng.random((c, h, w))
    names = [f"ch{i}" for i in range(c)]
    if groups is None:
        groups = ["color", "gm", "f2"][:c]
    return ChannelStack(data, names, groups)


def test_window_spec_validation():
    with pytest.raises(ValueError):
        WindowSpec(30, 32, 4)
    with pytest.raises(ValueError):
        WindowSpec(32, 32, 4, object_width=40)
    spec = WindowSpec(32, 24, 4)
    assert spec.cell_width == 8
    assert spec.cell_height == 6
    assert spec.obj_w == 32 and spec.obj_h == 24


def test_window_spec_object_extent():
    spec = WindowSpec(32, 32, 4, 20, 16)
    assert spec.obj_w == 20 and spec.obj_h == 16


def test_region_convolve_touches_only_spatial_groups():
    stack = make_stack(groups=["color", "gm", "f2"])
    out = region_convolve(stack, 2)
    assert not np.allclose(out.data[0], stack.data[0])
    assert not np.allclose(out.data[1], stack.data[1])
    assert np.array_equal(out.data[2], stack.data[2])
    assert out.names == stack.names
    assert out.groups == stack.groups


def test_region_convolve_matches_tri_smooth():
    stack = make_stack(c=1, groups=["gm"])
    out = region_convolve(stack, 3)
    assert np.allclose(out.data[0], imaging.tri_smooth(stack.data[0], 3))


def test_region_convolve_rejects_bad_radius():
    with pytest.raises(ValueError):
        region_convolve(make_stack(), 0)


def test_acf_pool_block_means():
    # hand oracle: 4x4 plane, shrink 2, known block means before smoothing
    data = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
    stack = ChannelStack(data, ["a"], ["gm"])
    pooled = acf_pool(stack, 2)
    expect = np.array([[2.5, 4.5], [10.5, 12.5]])
    expect = imaging.smooth(expect, POST_SMOOTH_RADIUS)
    assert pooled.shrink == 2
    assert np.allclose(pooled.stack.data[0], expect)


def test_acf_pool_trims_partial_blocks():
    stack = make_stack(c=1, h=9, w=10, groups=["gm"])
    pooled = acf_pool(stack, 4)
    assert pooled.stack.data.shape == (1, 2, 2)


def test_acf_pool_rejects_bad_shrink():
    with pytest.raises(ValueError):
        acf_pool(make_stack(), 3)


def test_window_vector_layout():
    # channel-major then row-major flattening, against explicit indexing
    stack = make_stack(c=2, h=8, w=8, groups=["color", "gm"])
    pooled = acf_pool(stack, 2)
    window = WindowSpec(4, 6, 2)
    vec = window_vector(pooled, window, (1, 0))
    data = pooled.stack.data
    expect = data[:, 0:3, 1:3].reshape(-1)
    assert np.array_equal(vec, expect)
    assert len(vec) == window_vector_length(window, 2)


def test_window_vector_bounds():
    stack = make_stack(c=1, h=8, w=8, groups=["gm"])
    pooled = acf_pool(stack, 2)
    window = WindowSpec(8, 8, 2)
    with pytest.raises(ValueError):
        window_vector(pooled, window, (1, 0))
    with pytest.raises(ValueError):
        window_vector(pooled, WindowSpec(8, 8, 4), (0, 0))
