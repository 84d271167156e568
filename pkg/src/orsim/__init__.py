"""Rotation-invariant channel features and a boosted sliding-window detector.

The pipeline: spatial color/gradient channels plus circular-harmonic
frequency channels, pooled into aggregated cell grids, scaled across a fast
power-law feature pyramid, classified by a soft-cascade of boosted depth-3
decision trees, and scored with standard PR/AP metrics.
"""

from .aggregate import AggregatedStack, WindowSpec, acf_pool, region_convolve, window_vector
from .boosting import (BoostedModel, positive_crops, positive_window_vectors,
                       score_window, train_adaboost, train_detector)
from .channels_frequency import (FrequencyFeatureConfig, HarmonicKernel,
                                 build_kernels, complex_gradient,
                                 fourier_orders, invariant_features)
from .channels_spatial import ChannelStack, color_channels, gradient_magnitude
from .detector import Detection, detect, nms, two_step_nms
from .evalkit import (AnnotatedBox, PRCurve, SynthSpec, evaluate,
                      kfold_split, load_annotations, match_detections,
                      mirror_augment, pr_metrics, synth_corpus,
                      texture_corpus)
from .features import ChannelComputer, FeatureConfig, channel_names, compute_channels
from .imaging import gradients, load_image, resample, smooth, to_color_space
from .model_io import load_model, save_model
from .pyramid import LambdaTable, PyramidLevel, build_pyramid, calibrate_lambda

__version__ = "0.1.0"
