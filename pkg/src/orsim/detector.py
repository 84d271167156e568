"""Sliding-window detection over the fast pyramid, plus NMS variants."""

from dataclasses import dataclass

import numpy as np

from .aggregate import window_vector
from .features import ChannelComputer
from .pyramid import build_pyramid

__all__ = ["Detection", "detect", "nms", "two_step_nms", "scan_level",
           "save_detections", "load_detections", "mine_hard_negatives"]

DEFAULT_OVERLAP_THRESHOLD = 0.5
DEFAULT_CONTAINMENT_THRESHOLD = 0.65


@dataclass
class Detection:
    """Scored box in original-image pixel coordinates."""

    x: float
    y: float
    w: float
    h: float
    score: float
    level: int = 0

    @property
    def area(self):
        return self.w * self.h


def _tree_grid(tree, agg_data, ys, xs, cell_h, cell_w):
    """Evaluate one tree at every window origin on the cell grid."""
    out = np.empty((len(ys), len(xs)))
    stack = [(tree, np.ones((len(ys), len(xs)), dtype=bool))]
    while stack:
        node, mask = stack.pop()
        if node.is_leaf:
            out[mask] = node.value
            continue
        c, rem = divmod(node.feature, cell_h * cell_w)
        dy, dx = divmod(rem, cell_w)
        vals = agg_data[c][np.ix_(ys + dy, xs + dx)]
        go_left = vals <= node.threshold
        stack.append((node.left, mask & go_left))
        stack.append((node.right, mask & ~go_left))
    return out


def scan_level(agg, model, stride_cells=1, use_cascade=True):
    """Score every window position at one pyramid level.

    Returns (ys, xs, scores, accepted) where ys/xs are the window origins in
    cell coordinates and accepted marks windows that passed the cascade.
    The cascade is applied as in score_window: a window is rejected as soon
    as a running partial sum drops below that tree's threshold.
    """
    cell_h = model.window.cell_height
    cell_w = model.window.cell_width
    data = agg.stack.data
    ny = data.shape[1] - cell_h + 1
    nx = data.shape[2] - cell_w + 1
    if ny <= 0 or nx <= 0:
        return (np.empty(0, dtype=int), np.empty(0, dtype=int),
                np.empty((0, 0)), np.empty((0, 0), dtype=bool))
    ys = np.arange(0, ny, stride_cells)
    xs = np.arange(0, nx, stride_cells)
    scores = np.zeros((len(ys), len(xs)))
    rejected = np.zeros((len(ys), len(xs)), dtype=bool)
    for tree, alpha, theta in zip(model.trees, model.alphas,
                                  model.cascade_thresholds):
        scores += alpha * _tree_grid(tree, data, ys, xs, cell_h, cell_w)
        if use_cascade:
            rejected |= (~rejected) & (scores < theta)
    return ys, xs, scores, ~rejected


def detect(img, model, stride_cells=1, score_threshold=0.0,
           n_per_oct=8, n_octaves=4, use_cascade=True, approximate=True,
           computer=None):
    """Run the detector over the image pyramid.

    Detections are mapped back to original-image coordinates and returned
    sorted by descending score (ties: ascending x, then y).
    """
    if stride_cells < 1:
        raise ValueError("stride_cells must be >= 1")
    if computer is None:
        computer = ChannelComputer(model.config)
    levels = build_pyramid(img, model.lambda_table, n_per_oct, n_octaves,
                           model.window, model.config, computer=computer,
                           approximate=approximate)
    shrink = model.config.shrink
    dets = []
    for li, level in enumerate(levels):
        ys, xs, scores, accepted = scan_level(level.agg, model, stride_cells,
                                              use_cascade)
        keep = accepted & (scores >= score_threshold)
        win = model.window
        off_x = (win.width - win.obj_w) / 2.0
        off_y = (win.height - win.obj_h) / 2.0
        for iy, ix in zip(*np.nonzero(keep)):
            s = level.scale
            dets.append(Detection(
                x=(xs[ix] * shrink + off_x) / s,
                y=(ys[iy] * shrink + off_y) / s,
                w=win.obj_w / s,
                h=win.obj_h / s,
                score=float(scores[iy, ix]),
                level=li,
            ))
    dets.sort(key=lambda d: (-d.score, d.x, d.y))
    return dets


def _iou(a, b):
    x1 = max(a.x, b.x)
    y1 = max(a.y, b.y)
    x2 = min(a.x + a.w, b.x + b.w)
    y2 = min(a.y + a.h, b.y + b.h)
    inter = max(0.0, x2 - x1) * max(0.0, y2 - y1)
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def _containment(inner, outer):
    """Fraction of inner's area covered by outer."""
    x1 = max(inner.x, outer.x)
    y1 = max(inner.y, outer.y)
    x2 = min(inner.x + inner.w, outer.x + outer.w)
    y2 = min(inner.y + inner.h, outer.y + outer.h)
    inter = max(0.0, x2 - x1) * max(0.0, y2 - y1)
    return inter / inner.area if inner.area > 0 else 0.0


def nms(dets, overlap_threshold=DEFAULT_OVERLAP_THRESHOLD):
    """Greedy overlap suppression; kept boxes come out score-sorted."""
    if not 0.0 < overlap_threshold < 1.0:
        raise ValueError("overlap threshold must be in (0, 1)")
    ordered = sorted(dets, key=lambda d: (-d.score, d.x, d.y))
    kept = []
    for det in ordered:
        if all(_iou(det, k) <= overlap_threshold for k in kept):
            kept.append(det)
    return kept


def two_step_nms(dets, overlap_threshold=DEFAULT_OVERLAP_THRESHOLD,
                 containment_threshold=DEFAULT_CONTAINMENT_THRESHOLD):
    """NMS, then removal of part-detections mostly inside a stronger box."""
    if not 0.0 < containment_threshold <= 1.0:
        raise ValueError("containment threshold must be in (0, 1]")
    survivors = nms(dets, overlap_threshold)
    kept = []
    for det in survivors:
        contained = any(_containment(det, k) > containment_threshold
                        for k in kept)
        if not contained:
            kept.append(det)
    return kept


def save_detections(path, dets_by_image, header_lines=()):
    """Write `image_id x y w h score` lines, ordered by image then score."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for image_id in sorted(dets_by_image):
            dets = sorted(dets_by_image[image_id],
                          key=lambda d: (-d.score, d.x, d.y))
            for d in dets:
                fh.write(f"{image_id} {d.x:.4f} {d.y:.4f} {d.w:.4f} "
                         f"{d.h:.4f} {d.score:.4f}\n")


def load_detections(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 fields")
            image_id = parts[0]
            x, y, w, h, score = map(float, parts[1:])
            out.setdefault(image_id, []).append(Detection(x, y, w, h, score))
    return out


def mine_hard_negatives(images, model, cfg, window, lambda_table,
                        n_per_oct=4, n_octaves=4, cap=5000, computer=None,
                        score_threshold=0.0, stride_cells=1):
    """Harvest feature vectors of the top-scoring windows on object-free
    images (every firing is a false positive there)."""
    if computer is None:
        computer = ChannelComputer(cfg)
    scored = []
    for img in images:
        levels = build_pyramid(img, lambda_table, n_per_oct, n_octaves,
                               window, cfg, computer=computer)
        for level in levels:
            ys, xs, scores, accepted = scan_level(level.agg, model,
                                                  stride_cells)
            keep = accepted & (scores >= score_threshold)
            for iy, ix in zip(*np.nonzero(keep)):
                scored.append((float(scores[iy, ix]), level,
                               int(xs[ix]), int(ys[iy])))
    scored.sort(key=lambda t: -t[0])
    rows = [window_vector(level.agg, window, (ox, oy))
            for _, level, ox, oy in scored[:cap]]
    return np.asarray(rows) if rows else np.empty((0, 0))
