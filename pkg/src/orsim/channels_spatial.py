"""Spatial channels: color planes and the normalized gradient-magnitude channel."""

from dataclasses import dataclass, field

import numpy as np

from . import imaging

__all__ = ["ChannelStack", "color_channels", "gradient_magnitude"]

# local-normalization constants for the gradient magnitude channel
NORM_EPS = 0.005
NORM_RADIUS = 5
PRE_SMOOTH_RADIUS = 1

_COLOR_COMPONENTS = {
    "rgb": ("R", "G", "B"),
    "luv": ("L", "U", "V"),
    "hsv": ("H", "S", "V"),
}


@dataclass
class ChannelStack:
    """Planar multi-channel raster: data has shape (C, H, W)."""

    data: np.ndarray
    names: list = field(default_factory=list)
    groups: list = field(default_factory=list)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError("channel data must have shape (C, H, W)")
        if len(self.names) != self.data.shape[0]:
            raise ValueError("one name per channel required")
        if len(self.groups) != len(self.names):
            raise ValueError("one group label per channel required")
        if len(set(self.names)) != len(self.names):
            raise ValueError("channel names must be unique")

    @property
    def n_channels(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    def concat(self, other):
        if other.data.shape[1:] != self.data.shape[1:]:
            raise ValueError("stacks must share spatial dims")
        return ChannelStack(
            np.concatenate([self.data, other.data], axis=0),
            self.names + other.names,
            self.groups + other.groups,
        )


def color_channels(img, space):
    """Split the color-converted image into one plane per component."""
    conv = imaging.to_color_space(img, space)
    names = [f"color:{c}" for c in _COLOR_COMPONENTS[space.lower()]]
    data = np.moveaxis(conv, -1, 0)
    return ChannelStack(data, names, ["color"] * 3)


def gradient_magnitude(img):
    """Locally normalized gradient magnitude, one channel.

    Per pixel the raw magnitude is the max over color planes of
    sqrt(dx^2 + dy^2); it is then divided by a triangular smoothing of
    itself plus a small constant, which cancels local gain.
    """
    img = np.asarray(img, dtype=np.float64)
    img = imaging.smooth(img, PRE_SMOOTH_RADIUS)
    if img.ndim == 2:
        planes = [img]
    else:
        planes = [img[..., c] for c in range(img.shape[2])]
    mag = None
    for plane in planes:
        dx, dy = imaging.gradients(plane)
        m = np.hypot(dx, dy)
        mag = m if mag is None else np.maximum(mag, m)
    local = imaging.tri_smooth(mag, NORM_RADIUS)
    norm = mag / (local + NORM_EPS)
    return ChannelStack(norm[None, :, :], ["gm"], ["gm"])
