"""Fast feature pyramid: power-law channel scaling and octave anchoring.

Channel statistics of natural images follow a power law under resampling:
with s the downsampling factor (s = 2 meaning half size), the mean channel
magnitude obeys mu_s ~ mu_1 * s^(-lambda) with a per-channel-group exponent
lambda. Levels at integer octaves are computed exactly; intermediate levels
are approximated by resampling the nearest exact anchor and rescaling each
channel group by (s / s_anchor)^(-lambda).
"""

from dataclasses import dataclass, field

import numpy as np

from . import aggregate, imaging
from .aggregate import AggregatedStack
from .channels_spatial import ChannelStack
from .features import ChannelComputer

__all__ = ["LambdaTable", "PyramidLevel", "CalibrationError",
           "calibrate_lambda", "build_pyramid", "CHANNEL_GROUPS"]

CHANNEL_GROUPS = ("color", "gm", "f1", "f2", "f3")


class CalibrationError(RuntimeError):
    pass


@dataclass
class LambdaTable:
    """Per-channel-group power-law exponents with fit diagnostics."""

    lambdas: dict
    r2: dict = field(default_factory=dict)

    def factor(self, group, ratio):
        """Channel gain for a downsampling ratio (> 1 shrinks the image)."""
        return ratio ** (-self.lambdas[group])

    @classmethod
    def zeros(cls):
        return cls({g: 0.0 for g in CHANNEL_GROUPS},
                   {g: 1.0 for g in CHANNEL_GROUPS})


@dataclass
class PyramidLevel:
    """One pyramid level; scale <= 1 is the resample factor vs the original."""

    scale: float
    agg: AggregatedStack
    approximated: bool
    anchor_scale: float


def _group_means(stack):
    sums = {g: 0.0 for g in CHANNEL_GROUPS}
    counts = {g: 0 for g in CHANNEL_GROUPS}
    for i, g in enumerate(stack.groups):
        sums[g] += float(np.mean(np.abs(stack.data[i])))
        counts[g] += 1
    return {g: sums[g] / counts[g] for g in CHANNEL_GROUPS if counts[g]}


def calibrate_lambda(images, scales, cfg):
    """Fit the per-group exponents on a calibration corpus.

    `scales` are downsampling factors >= 1 (1 = original size) and must
    span at least one octave; at least 8 images and 3 scales are required.
    lambda is the least-squares slope of -log(mu_s / mu_1) against log(s),
    fitted through the origin.
    """
    scales = sorted(float(s) for s in scales)
    if len(images) < 8:
        raise ValueError("need at least 8 calibration images")
    if len(scales) < 3 or scales[0] != 1.0 or scales[-1] < 2.0:
        raise ValueError("need >= 3 scales starting at 1, spanning an octave")
    computer = ChannelComputer(cfg)

    ratios = {g: [] for g in CHANNEL_GROUPS}  # per scale: mean of mu_s/mu_1
    per_scale = []
    for s in scales:
        per_image = []
        for img in images:
            im_s = imaging.resample(np.asarray(img, dtype=np.float64), 1.0 / s)
            per_image.append(_group_means(computer.channels(im_s)))
        per_scale.append(per_image)
    base = per_scale[0]

    lambdas, r2 = {}, {}
    logs = np.log(np.asarray(scales[1:]))
    for g in CHANNEL_GROUPS:
        ys = []
        for si in range(1, len(scales)):
            vals = []
            for mu_s, mu_1 in zip(per_scale[si], base):
                if mu_1[g] > 0:
                    vals.append(mu_s[g] / mu_1[g])
            if not vals:
                raise CalibrationError(f"degenerate calibration for group {g!r}")
            ys.append(-np.log(np.mean(vals)))
        ys = np.asarray(ys)
        denom = float(np.dot(logs, logs))
        lam = float(np.dot(logs, ys) / denom)
        pred = lam * logs
        ss_res = float(np.sum((ys - pred) ** 2))
        # uncentered R^2 (the conventional statistic for a fit through the
        # origin), with a 1% measurement-noise floor on the total variation:
        # groups whose statistics barely move under resampling would
        # otherwise report a noise-dominated ratio even though the fitted
        # law predicts their channel ratios almost exactly
        ss_tot = max(float(np.sum(ys ** 2)), len(ys) * 1e-4)
        lambdas[g] = lam
        r2[g] = 1.0 - ss_res / ss_tot
    return LambdaTable(lambdas, r2)


def _resample_stack(stack, out_shape):
    c = stack.data.shape[0]
    out = np.empty((c, out_shape[0], out_shape[1]))
    for i in range(c):
        out[i] = imaging.resample(stack.data[i], out_shape=out_shape)
    return ChannelStack(out, list(stack.names), list(stack.groups))


def build_pyramid(img, table, n_per_oct, n_octaves, window, cfg,
                  computer=None, approximate=True):
    """Aggregated channel stacks at scales 2^(-i / n_per_oct).

    Levels at integer octaves are computed exactly from resampled images;
    with `approximate` enabled the rest are derived from the nearest exact
    anchor above via the power law. The list stops when the model window no
    longer fits or after n_octaves octaves; an oversized window yields an
    empty list.
    """
    if n_per_oct < 1:
        raise ValueError("n_per_oct must be >= 1")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if computer is None:
        computer = ChannelComputer(cfg)
    shrink = cfg.shrink

    levels = []
    anchors = {}
    for i in range(n_octaves * n_per_oct + 1):
        s = 2.0 ** (-i / n_per_oct)
        lh, lw = int(round(h * s)), int(round(w * s))
        if lh < window.height or lw < window.width:
            break
        is_anchor = (i % n_per_oct == 0) or not approximate
        if is_anchor:
            level_img = imaging.resample(img, out_shape=(lh, lw))
            agg = computer.aggregated(level_img)
            levels.append(PyramidLevel(s, agg, False, s))
            if i % n_per_oct == 0:
                anchors[i // n_per_oct] = levels[-1]
        else:
            anchor = anchors[i // n_per_oct]
            ratio = anchor.scale / s  # downsampling factor vs the anchor
            out_cells = (lh // shrink, lw // shrink)
            stack = _resample_stack(anchor.agg.stack, out_cells)
            for ci, g in enumerate(stack.groups):
                stack.data[ci] *= table.factor(g, ratio)
            levels.append(PyramidLevel(
                s, AggregatedStack(shrink, stack), True, anchor.scale))
    return levels
