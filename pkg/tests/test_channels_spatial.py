import numpy as np
import pytest

from orsim import imaging
from orsim.channels_spatial import (ChannelStack, color_channels,
                                    gradient_magnitude, NORM_EPS, NORM_RADIUS,
                                    PRE_SMOOTH_RADIUS)


def test_stack_validation():
    data = np.zeros((2, 4, 4))
    with pytest.raises(ValueError):
        ChannelStack(data, ["a"], ["g"])
    with pytest.raises(ValueError):
        ChannelStack(data, ["a", "a"], ["g", "g"])
    stack = ChannelStack(data, ["a", "b"], ["g", "g"])
    assert stack.n_channels == 2
    assert stack.height == 4 and stack.width == 4


def test_stack_concat():
    a = ChannelStack(np.zeros((1, 3, 3)), ["a"], ["g1"])
    b = ChannelStack(np.ones((2, 3, 3)), ["b", "c"], ["g2", "g2"])
    out = a.concat(b)
    assert out.names == ["a", "b", "c"]
    assert out.groups == ["g1", "g2", "g2"]
    assert out.data.shape == (3, 3, 3)
    with pytest.raises(ValueError):
        a.concat(ChannelStack(np.zeros((1, 2, 2)), ["d"], ["g"]))


def test_color_channels_luv_names_and_planes():
    rng = np.random.default_rng(0)
    img = rng.random((5, 6, 3))
    stack = color_channels(img, "luv")
    assert stack.names == ["color:L", "color:U", "color:V"]
    assert stack.groups == ["color"] * 3
    expect = imaging.rgb_to_luv(img)
    assert np.allclose(stack.data, np.moveaxis(expect, -1, 0))


def test_color_channels_rgb_is_identity():
    rng = np.random.default_rng(1)
    img = rng.random((4, 4, 3))
    stack = color_channels(img, "rgb")
    assert np.allclose(stack.data[0], img[..., 0])


def test_gradient_magnitude_shape_and_group():
    img = np.random.default_rng(2).random((12, 10, 3))
    stack = gradient_magnitude(img)
    assert stack.data.shape == (1, 12, 10)
    assert stack.names == ["gm"]
    assert stack.groups == ["gm"]
    assert np.all(stack.data >= 0)


def test_gradient_magnitude_matches_direct_formula():
    rng = np.random.default_rng(3)
    img = rng.random((16, 16, 3))
    pre = imaging.smooth(img, PRE_SMOOTH_RADIUS)
    mag = None
    for c in range(3):
        dx, dy = imaging.gradients(pre[..., c])
        m = np.hypot(dx, dy)
        mag = m if mag is None else np.maximum(mag, m)
    expect = mag / (imaging.tri_smooth(mag, NORM_RADIUS) + NORM_EPS)
    out = gradient_magnitude(img)
    assert np.allclose(out.data[0], expect)


def test_gradient_magnitude_gain_invariance():
    # the local normalization cancels a global contrast gain almost exactly
    rng = np.random.default_rng(4)
    img = 0.2 + 0.1 * rng.random((24, 24))
    a = gradient_magnitude(img).data[0]
    b = gradient_magnitude(img * 2.0).data[0]
    interior = (slice(6, -6), slice(6, -6))
    rel = np.abs(a[interior] - b[interior]) / (np.abs(a[interior]) + 1e-9)
    # the eps term in the divisor keeps the cancellation approximate on
    # low-contrast noise
    assert np.median(rel) < 0.3


def test_gradient_magnitude_flat_image_is_zero():
    out = gradient_magnitude(np.full((8, 8), 0.5))
    assert np.allclose(out.data, 0.0)
