"""Command-line orchestration: synth, calibrate, train, detect, eval.

Exit codes: 0 ok, 2 usage/config error, 3 calibration error, 4 degenerate
training data. Every output file header embeds the config hash and seed.
"""

import argparse
import hashlib
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import detector, evalkit, imaging, model_io, pyramid
from .aggregate import WindowSpec
from .boosting import (DegenerateDataError, positive_crops,
                       positive_window_vectors, train_detector)
from .features import ChannelComputer, FeatureConfig
from .pyramid import CHANNEL_GROUPS, CalibrationError, LambdaTable

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CALIBRATION = 3
EXIT_TRAINING_DATA = 4

_DEFAULTS = {
    "color_space": "luv",
    "sigma": "6",
    "m": "4",
    "families": "F1,F2,F3",
    "shrink": "4",
    "window_width": "32",
    "window_height": "28",
    "object_width": "0",
    "object_height": "0",
    "context_pad": "0",
    "pos_jitter": "2",
    "pos_jitter_count": "4",
    "smooth_radius": "1",
    "k1_radius_cells": "2",
    "n_per_oct": "8",
    "n_octaves": "4",
    "schedule": "32,128,512,2048",
    "stride_cells": "1",
    "score_threshold": "0.0",
    "nms_overlap": "0.5",
    "nms_containment": "0.65",
    "iou_threshold": "0.5",
    "seed": "0",
    "calibrate_scales": "1,1.26,1.5874,2",
    "n_random_negatives": "5000",
    "hard_negative_cap": "5000",
    "mine_n_per_oct": "4",
    "images_dir": "",
    "annotations": "",
    "negatives_dir": "",
    "lambda_file": "",
    "synth_count": "50",
    "synth_image_size": "96",
    "synth_object_length": "18",
    "synth_object_width": "9",
    "synth_objects_per_image": "1",
    "synth_distractors": "2",
    "synth_rotation_min": "0",
    "synth_rotation_max": "0",
    "synth_noise": "0.1",
}


class ConfigFileError(ValueError):
    pass


class RunConfig:
    """Flat key = value configuration with strict key validation."""

    def __init__(self, overrides=None, seed=None):
        self.values = dict(_DEFAULTS)
        if overrides:
            for key, val in overrides.items():
                if key not in _DEFAULTS:
                    raise ConfigFileError(f"unknown config key {key!r}")
                self.values[key] = val
        if seed is not None:
            self.values["seed"] = str(seed)
        self._validate()

    @classmethod
    def from_file(cls, path, seed=None):
        overrides = {}
        try:
            with open(path, encoding="utf-8") as fh:
                for lineno, raw in enumerate(fh, 1):
                    line = raw.split("#", 1)[0].strip()
                    if not line:
                        continue
                    if "=" not in line:
                        raise ConfigFileError(
                            f"{path}:{lineno}: expected key = value")
                    key, val = (s.strip() for s in line.split("=", 1))
                    overrides[key] = val
        except OSError as exc:
            raise ConfigFileError(f"cannot read config {path}: {exc}") from exc
        return cls(overrides, seed=seed)

    def _validate(self):
        try:
            self.feature_config()
            self.window()
            if self.getint("n_per_oct") < 1:
                raise ValueError("n_per_oct must be >= 1")
            pad = self.getint("context_pad")
            if pad < 0 or pad % self.getint("shrink") != 0:
                raise ValueError("context_pad must be a non-negative "
                                 "multiple of shrink")
            sched = self.schedule()
            if any(b <= a for a, b in zip(sched, sched[1:])):
                raise ValueError("schedule must be increasing")
            for key in ("nms_overlap", "nms_containment", "iou_threshold"):
                v = self.getfloat(key)
                if not 0.0 < v <= 1.0:
                    raise ValueError(f"{key} must be in (0, 1]")
        except (ValueError, TypeError) as exc:
            raise ConfigFileError(str(exc)) from exc

    def get(self, key):
        return self.values[key]

    def getint(self, key):
        return int(self.values[key])

    def getfloat(self, key):
        return float(self.values[key])

    def schedule(self):
        return [int(s) for s in self.values["schedule"].split(",")]

    def feature_config(self):
        return FeatureConfig(
            color_space=self.values["color_space"],
            sigma=self.getint("sigma"),
            m=self.getint("m"),
            families=tuple(self.values["families"].split(",")),
            shrink=self.getint("shrink"),
            smooth_radius=self.getint("smooth_radius"),
            k1_radius_cells=self.getint("k1_radius_cells"),
        )

    def window(self):
        return WindowSpec(self.getint("window_width"),
                          self.getint("window_height"),
                          self.getint("shrink"),
                          self.getint("object_width"),
                          self.getint("object_height"))

    def synth_spec(self):
        return evalkit.SynthSpec(
            image_size=self.getint("synth_image_size"),
            object_length=self.getfloat("synth_object_length"),
            object_width=self.getfloat("synth_object_width"),
            n_objects=self.getint("synth_objects_per_image"),
            n_distractors=self.getint("synth_distractors"),
            noise_level=self.getfloat("synth_noise"),
        )

    # input/output locations do not affect behavior, so they stay out of
    # the reproducibility digest
    _PATH_KEYS = frozenset(("images_dir", "annotations", "negatives_dir",
                            "lambda_file"))

    def digest(self):
        text = "\n".join(f"{k} = {self.values[k]}"
                         for k in sorted(self.values)
                         if k not in self._PATH_KEYS)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def header(self):
        return [f"config_sha256={self.digest()} seed={self.get('seed')}"]


def _list_images(directory):
    exts = (".png", ".ppm", ".pgm")
    try:
        names = sorted(n for n in os.listdir(directory)
                       if n.lower().endswith(exts))
    except OSError as exc:
        raise ConfigFileError(f"cannot list {directory}: {exc}") from exc
    if not names:
        raise ConfigFileError(f"no images found in {directory}")
    return [(os.path.splitext(n)[0], os.path.join(directory, n))
            for n in names]


def _save_png(path, img):
    from PIL import Image
    data = np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path)


def cmd_synth(args):
    cfg = RunConfig.from_file(args.config, seed=args.seed) if args.config \
        else RunConfig(seed=args.seed)
    spec = cfg.synth_spec()
    rot = (np.deg2rad(cfg.getfloat("synth_rotation_min")),
           np.deg2rad(cfg.getfloat("synth_rotation_max")))
    images, truths = evalkit.synth_corpus(spec, cfg.getint("synth_count"),
                                          rotation_range=rot,
                                          seed=cfg.getint("seed"))
    os.makedirs(args.out, exist_ok=True)
    boxes = []
    for i, img in enumerate(images):
        image_id = f"synth{i:04d}"
        _save_png(os.path.join(args.out, image_id + ".png"), img)
        boxes.extend(truths[image_id])
    ann_path = os.path.join(args.out, "truths.txt")
    with open(ann_path, "w", encoding="utf-8") as fh:
        for line in cfg.header():
            fh.write(f"# {line}\n")
        for b in boxes:
            fh.write(f"{b.image_id} {b.x:.4f} {b.y:.4f} {b.w:.4f} "
                     f"{b.h:.4f} {b.label}\n")
    print(f"wrote {len(images)} images and {len(boxes)} boxes to {args.out}")
    return EXIT_OK


def _write_lambda_file(path, table, header):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("orsim-lambda v1\n")
        for line in header:
            fh.write(f"# {line}\n")
        for g in CHANNEL_GROUPS:
            fh.write(f"lambda {g} {table.lambdas[g]!r} {table.r2[g]!r}\n")


def read_lambda_file(path):
    lambdas, r2 = {}, {}
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != "orsim-lambda v1":
            raise ConfigFileError(f"{path}: not a lambda table file")
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            _, g, lam, rr = line.split()
            lambdas[g] = float(lam)
            r2[g] = float(rr)
    return LambdaTable(lambdas, r2)


def cmd_calibrate(args):
    cfg = RunConfig.from_file(args.config, seed=args.seed)
    images_dir = cfg.get("images_dir")
    if not images_dir:
        raise ConfigFileError("calibrate requires images_dir")
    images = [imaging.load_image(p) for _, p in _list_images(images_dir)]
    scales = [float(s) for s in cfg.get("calibrate_scales").split(",")]
    try:
        table = pyramid.calibrate_lambda(images, scales, cfg.feature_config())
    except ValueError as exc:
        raise ConfigFileError(str(exc)) from exc
    _write_lambda_file(args.out, table, cfg.header())
    for g in CHANNEL_GROUPS:
        print(f"{g}: lambda={table.lambdas[g]:.4f} r2={table.r2[g]:.4f}")
    return EXIT_OK


def _annotated_images(cfg):
    boxes = evalkit.load_annotations(cfg.get("annotations"))
    by_image = {}
    for b in boxes:
        by_image.setdefault(b.image_id, []).append(b)
    images = [(image_id, imaging.load_image(path))
              for image_id, path in _list_images(cfg.get("images_dir"))
              if image_id in by_image]
    return images, by_image


def cmd_train(args):
    cfg = RunConfig.from_file(args.config, seed=args.seed)
    for key in ("images_dir", "annotations", "negatives_dir"):
        if not cfg.get(key):
            raise ConfigFileError(f"train requires {key}")
    window = cfg.window()
    feat = cfg.feature_config()
    images, by_image = _annotated_images(cfg)
    crops = positive_crops(images, by_image, window,
                           cfg.getint("context_pad"),
                           jitter=cfg.getint("pos_jitter"),
                           n_jitter=cfg.getint("pos_jitter_count"),
                           seed=cfg.getint("seed"))
    if not crops:
        print("error: no positive windows found", file=sys.stderr)
        return EXIT_TRAINING_DATA
    # cascade thresholds come from the vectors the sliding window actually
    # produces at the annotated locations, not from the training crops
    calib = positive_window_vectors(images, by_image, feat, window)
    negatives = [imaging.load_image(p)
                 for _, p in _list_images(cfg.get("negatives_dir"))]
    table = (read_lambda_file(cfg.get("lambda_file"))
             if cfg.get("lambda_file") else LambdaTable.zeros())
    try:
        model = train_detector(
            crops, negatives, cfg.schedule(), feat, window,
            lambda_table=table, seed=cfg.getint("seed"),
            n_random_negatives=cfg.getint("n_random_negatives"),
            hard_negative_cap=cfg.getint("hard_negative_cap"),
            n_per_oct=cfg.getint("mine_n_per_oct"),
            context_pad=cfg.getint("context_pad"),
            calibration_vectors=calib if len(calib) else None,
            verbose=True)
    except (DegenerateDataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING_DATA
    model_io.save_model(args.out, model, header_lines=cfg.header())
    print(f"wrote model with {len(model.trees)} trees to {args.out}")
    return EXIT_OK


def cmd_detect(args):
    cfg = RunConfig.from_file(args.config, seed=args.seed)
    model = model_io.load_model(args.model)
    computer = ChannelComputer(model.config)
    two_step = args.two_step_nms == "on"

    def run_one(item):
        image_id, path = item
        img = imaging.load_image(path)
        dets = detector.detect(
            img, model, stride_cells=cfg.getint("stride_cells"),
            score_threshold=cfg.getfloat("score_threshold"),
            n_per_oct=cfg.getint("n_per_oct"),
            n_octaves=cfg.getint("n_octaves"),
            computer=computer if args.threads <= 1 else None)
        if two_step:
            dets = detector.two_step_nms(dets, cfg.getfloat("nms_overlap"),
                                         cfg.getfloat("nms_containment"))
        else:
            dets = detector.nms(dets, cfg.getfloat("nms_overlap"))
        return image_id, dets

    items = [(os.path.splitext(os.path.basename(p))[0], p)
             for p in args.images]
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = dict(pool.map(run_one, items))
    else:
        results = dict(run_one(it) for it in items)
    detector.save_detections(args.out, results, header_lines=cfg.header())
    total = sum(len(v) for v in results.values())
    print(f"wrote {total} detections to {args.out}")
    return EXIT_OK


def cmd_eval(args):
    cfg = (RunConfig.from_file(args.config, seed=args.seed)
           if args.config else RunConfig(seed=args.seed))
    dets = detector.load_detections(args.detections)
    boxes = evalkit.load_annotations(args.annotations)
    truths = {}
    for b in boxes:
        truths.setdefault(b.image_id, []).append(b)
    iou = cfg.getfloat("iou_threshold")
    curve = evalkit.evaluate(dets, truths, iou_threshold=iou)
    header = cfg.header() + [f"iou_threshold={iou}",
                             "ap_interpolation=all-points"]
    evalkit.export_pr_csv(args.out, curve, header_lines=header)
    flag = " (no detections)" if curve.no_detections else ""
    print(f"AP={curve.ap:.4f} AR={curve.ar:.4f} AF={curve.af:.4f} "
          f"iou>{iou}{flag}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="orsim",
        description="Rotation-invariant channel-feature object detector")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True)
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    common(p, config_required=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="fit channel scaling exponents")
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", help="train a detector")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="detect objects in images")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--two-step-nms", choices=("on", "off"), default="on")
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--annotations", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigFileError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as exc:
        print(f"calibration error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION


if __name__ == "__main__":
    sys.exit(main())
