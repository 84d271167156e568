"""End-to-end channel pipeline: image -> full channel stack -> pooled cells."""

from dataclasses import dataclass, replace

import numpy as np

from . import aggregate, channels_frequency, channels_spatial, imaging
from .aggregate import WindowSpec
from .channels_frequency import FrequencyFeatureConfig

__all__ = ["FeatureConfig", "ChannelComputer", "compute_channels",
           "compute_aggregated", "channel_names", "channel_groups"]


@dataclass(frozen=True)
class FeatureConfig:
    """All tunables of the channel computation."""

    color_space: str = "luv"
    m: int = 4
    sigma: int = 6
    families: tuple = channels_frequency.FAMILIES
    shrink: int = 4
    smooth_radius: int = 1
    k1_radius_cells: int = 2

    def __post_init__(self):
        if self.color_space not in imaging.COLOR_SPACES:
            raise ValueError(f"unknown color space {self.color_space!r}")
        if self.shrink not in aggregate.SHRINK_CHOICES:
            raise ValueError("bad shrink")
        object.__setattr__(self, "families", tuple(self.families))

    @property
    def frequency(self):
        return FrequencyFeatureConfig(m=self.m, sigma=self.sigma,
                                      families=self.families)

    @property
    def k1_radius(self):
        return self.k1_radius_cells * self.shrink


def channel_names(cfg):
    comps = {"rgb": "RGB", "luv": "LUV", "hsv": "HSV"}[cfg.color_space]
    names = [f"color:{c}" for c in comps] + ["gm"]
    names += [name for name, _ in
              channels_frequency.frequency_channel_layout(cfg.frequency)]
    return names


def channel_groups(cfg):
    groups = ["color"] * 3 + ["gm"]
    for name, _ in channels_frequency.frequency_channel_layout(cfg.frequency):
        groups.append(name.split(":", 1)[0])
    return groups


class ChannelComputer:
    """Caches harmonic kernels and per-shape FFT plans across images."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.kernels = channels_frequency.build_kernels(cfg.frequency)
        self._responders = {}

    def _responder(self, shape):
        if shape not in self._responders:
            if len(self._responders) >= 16:
                self._responders.pop(next(iter(self._responders)))
            self._responders[shape] = channels_frequency.HarmonicResponder(
                self.kernels, shape)
        return self._responders[shape]

    def channels(self, img):
        """Full-resolution channel stack for one image."""
        cfg = self.cfg
        img = np.asarray(img, dtype=np.float64)
        if img.ndim == 2:
            img = np.repeat(img[:, :, None], 3, axis=2)
        pre = imaging.smooth(img, cfg.smooth_radius)

        stack = channels_spatial.color_channels(pre, cfg.color_space)
        stack = stack.concat(channels_spatial.gradient_magnitude(img))

        d = channels_frequency.complex_gradient(pre)
        fks = channels_frequency.fourier_orders(d, cfg.m)
        freq = channels_frequency.invariant_features(
            fks, self.kernels, cfg.frequency,
            responder=self._responder(d.shape))
        return stack.concat(freq)

    def aggregated(self, img):
        """Pooled cell representation used by the classifier."""
        stack = self.channels(img)
        stack = aggregate.region_convolve(stack, self.cfg.k1_radius)
        return aggregate.acf_pool(stack, self.cfg.shrink)


def compute_channels(img, cfg):
    return ChannelComputer(cfg).channels(img)


def compute_aggregated(img, cfg):
    return ChannelComputer(cfg).aggregated(img)
