"""Train a small detector on synthetic imagery and measure AP.

This is a scaled-down version of the full pipeline so it finishes in a
minute or two: a short boosting schedule, a small corpus, one pyramid
octave. Expect AP in the 0.6-0.9 range depending on the draw; the
acceptance suite runs the full-size version.

Run:  python3 demos/train_and_detect.py
"""

import time

import numpy as np

from orsim import detector
from orsim.aggregate import WindowSpec
from orsim.boosting import (positive_crops, positive_window_vectors,
                            train_detector)
from orsim.evalkit import SynthSpec, evaluate, synth_corpus
from orsim.features import ChannelComputer, FeatureConfig


def main():
    t0 = time.perf_counter()
    cfg = FeatureConfig(sigma=3, m=2)
    window = WindowSpec(24, 24, shrink=4, object_width=16, object_height=16)
    pad = 16
    spec = SynthSpec(image_size=72, object_length=16.0, object_width=8.0,
                     n_objects=1, n_distractors=2, noise_level=0.1,
                     distractor_aspect=1.2)

    train_imgs, truths = synth_corpus(spec, 80,
                                      rotation_range=(0.0, np.pi), seed=1)
    neg_spec = SynthSpec(image_size=72, n_objects=0, n_distractors=3,
                         noise_level=0.1, distractor_aspect=1.2)
    neg_imgs, _ = synth_corpus(neg_spec, 20, seed=2)

    pairs = [(f"synth{i:04d}", im) for i, im in enumerate(train_imgs)]
    crops = positive_crops(pairs, truths, window, pad, jitter=3, n_jitter=4)
    calib = positive_window_vectors(pairs, truths, cfg, window)
    print(f"{len(crops)} positive crops, "
          f"{calib.shape[0]} calibration vectors")

    model = train_detector(crops, neg_imgs, [16, 48], cfg, window,
                           seed=0, n_random_negatives=1500,
                           hard_negative_cap=1000, n_per_oct=4,
                           context_pad=pad, calibration_vectors=calib,
                           verbose=True)
    print(f"trained {len(model.trees)} trees "
          f"in {time.perf_counter() - t0:.0f}s")

    test_imgs, test_truths = synth_corpus(spec, 40,
                                          rotation_range=(0.0, np.pi),
                                          seed=3)
    computer = ChannelComputer(cfg)
    dets = {}
    for i, img in enumerate(test_imgs):
        d = detector.detect(img, model, n_per_oct=4, n_octaves=1,
                            computer=computer)
        dets[f"synth{i:04d}"] = detector.two_step_nms(d,
                                                      overlap_threshold=0.3)
    curve = evaluate(dets, test_truths)
    print(f"AP {curve.ap:.3f}  recall {curve.ar:.3f}  F1 {curve.af:.3f}  "
          f"({time.perf_counter() - t0:.0f}s total)")


if __name__ == "__main__":
    main()
