"""Region aggregation: triangular smoothing, block pooling, window vectors."""

from dataclasses import dataclass

import numpy as np

from . import imaging
from .channels_spatial import ChannelStack

__all__ = ["WindowSpec", "AggregatedStack", "region_convolve", "acf_pool",
           "window_vector", "window_vector_length"]

SHRINK_CHOICES = (2, 4, 8)
POST_SMOOTH_RADIUS = 1

# groups that receive the spatial triangular kernel; harmonic channels are
# already aggregated over annuli by their kernels
_SPATIAL_GROUPS = ("color", "gm")


@dataclass(frozen=True)
class WindowSpec:
    """Model window in pixels; dims must be divisible by the shrink factor.

    object_width/object_height give the nominal object extent centered in
    the window (detections are reported at that size); zero means the full
    window.
    """

    width: int
    height: int
    shrink: int = 4
    object_width: int = 0
    object_height: int = 0

    def __post_init__(self):
        if self.width % self.shrink or self.height % self.shrink:
            raise ValueError("window dims must be divisible by shrink")
        if (self.object_width < 0 or self.object_width > self.width
                or self.object_height < 0
                or self.object_height > self.height):
            raise ValueError("object extent must fit inside the window")

    @property
    def obj_w(self):
        return self.object_width if self.object_width else self.width

    @property
    def obj_h(self):
        return self.object_height if self.object_height else self.height

    @property
    def cell_width(self):
        return self.width // self.shrink

    @property
    def cell_height(self):
        return self.height // self.shrink


@dataclass
class AggregatedStack:
    """ChannelStack pooled to (H // shrink) x (W // shrink) cells."""

    shrink: int
    stack: ChannelStack


def region_convolve(stack, radius):
    """Triangular smoothing of the spatial channel groups.

    Channels in the color / gradient-magnitude groups are convolved with an
    isotropic triangular kernel of the given pixel radius; harmonic channels
    pass through untouched. Channel order is preserved.
    """
    if radius < 1:
        raise ValueError("kernel radius must be >= 1")
    data = stack.data.copy()
    for i, group in enumerate(stack.groups):
        if group in _SPATIAL_GROUPS:
            data[i] = imaging.tri_smooth(stack.data[i], radius)
    return ChannelStack(data, list(stack.names), list(stack.groups))


def acf_pool(stack, shrink):
    """Non-overlapping block means per channel, then radius-1 post-smoothing."""
    if shrink not in SHRINK_CHOICES:
        raise ValueError(f"shrink must be one of {SHRINK_CHOICES}")
    c, h, w = stack.data.shape
    hc, wc = h // shrink, w // shrink
    if hc < 1 or wc < 1:
        raise ValueError("image smaller than one pooling block")
    trimmed = stack.data[:, :hc * shrink, :wc * shrink]
    pooled = trimmed.reshape(c, hc, shrink, wc, shrink).mean(axis=(2, 4))
    for i in range(c):
        pooled[i] = imaging.smooth(pooled[i], POST_SMOOTH_RADIUS)
    return AggregatedStack(shrink, ChannelStack(pooled, list(stack.names),
                                                list(stack.groups)))


def window_vector_length(window, n_channels):
    return window.cell_width * window.cell_height * n_channels


def window_vector(agg, window, origin):
    """Flatten the window at cell-coordinate origin (x, y), channel-major
    then row-major."""
    if agg.shrink != window.shrink:
        raise ValueError("window and stack use different shrink factors")
    ox, oy = origin
    wc, hc = window.cell_width, window.cell_height
    data = agg.stack.data
    if ox < 0 or oy < 0 or oy + hc > data.shape[1] or ox + wc > data.shape[2]:
        raise ValueError("window out of bounds")
    return data[:, oy:oy + hc, ox:ox + wc].reshape(-1).copy()
