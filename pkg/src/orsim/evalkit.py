"""Ground truth, matching, P/R/AP metrics, augmentation, synthetic corpora."""

from dataclasses import dataclass, field

import numpy as np

from . import imaging

__all__ = ["AnnotatedBox", "PRCurve", "load_annotations", "save_annotations",
           "match_detections", "pr_metrics", "export_pr_csv",
           "mirror_augment", "kfold_split", "SynthSpec", "synth_corpus",
           "texture_corpus"]

DEFAULT_IOU_THRESHOLD = 0.5


@dataclass
class AnnotatedBox:
    """Ground-truth box: pixel coords, width/height > 0."""

    image_id: str
    x: float
    y: float
    w: float
    h: float
    label: str = "object"

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("box width and height must be positive")


@dataclass
class PRCurve:
    """Threshold sweep: (threshold, recall, precision) points plus summary
    numbers. ar/af are recall and F1 at the F1-maximizing threshold."""

    points: list
    ap: float
    ar: float
    af: float
    no_detections: bool = False


def load_annotations(path):
    """Read `image_id x y w h label` lines; '#' starts a comment."""
    boxes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 fields, "
                                 f"got {len(parts)}")
            try:
                x, y, w, h = map(float, parts[1:5])
                box = AnnotatedBox(parts[0], x, y, w, h, parts[5])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            boxes.append(box)
    return boxes


def save_annotations(path, boxes):
    with open(path, "w", encoding="utf-8") as fh:
        for b in boxes:
            fh.write(f"{b.image_id} {b.x:.4f} {b.y:.4f} {b.w:.4f} "
                     f"{b.h:.4f} {b.label}\n")


def _iou_box(det, truth):
    x1 = max(det.x, truth.x)
    y1 = max(det.y, truth.y)
    x2 = min(det.x + det.w, truth.x + truth.w)
    y2 = min(det.y + det.h, truth.y + truth.h)
    inter = max(0.0, x2 - x1) * max(0.0, y2 - y1)
    union = det.w * det.h + truth.w * truth.h - inter
    return inter / union if union > 0 else 0.0


def match_detections(dets, truths, iou_threshold=DEFAULT_IOU_THRESHOLD):
    """Greedy score-descending matching; IoU must strictly exceed the
    threshold.

    Returns (tp_flags, matched_truths, order): tp_flags[i] says whether the
    i-th detection in score-descending order (ties: ascending x, then y) is
    a true positive; order gives the original indices in that order.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou threshold must be in (0, 1)")
    order = sorted(range(len(dets)),
                   key=lambda i: (-dets[i].score, dets[i].x, dets[i].y))
    matched = [False] * len(truths)
    tp = np.zeros(len(dets), dtype=bool)
    for rank, i in enumerate(order):
        best_iou, best_j = iou_threshold, -1
        for j, truth in enumerate(truths):
            if matched[j]:
                continue
            iou = _iou_box(dets[i], truth)
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0:
            matched[best_j] = True
            tp[rank] = True
    return tp, matched, order


def pr_metrics(tp_flags, scores, n_truths):
    """Precision/recall sweep over every distinct score threshold.

    tp_flags and scores must be in score-descending order. AP is the area
    under the precision envelope (all-points interpolation); AR and AF are
    taken at the F1-maximizing threshold.
    """
    if n_truths < 1:
        raise ValueError("need at least one ground-truth box")
    tp_flags = np.asarray(tp_flags, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    if len(tp_flags) == 0:
        return PRCurve([], 0.0, 0.0, 0.0, no_detections=True)

    cum_tp = np.cumsum(tp_flags)
    cum_fp = np.cumsum(~tp_flags)
    precision = cum_tp / (cum_tp + cum_fp)
    recall = cum_tp / n_truths

    # keep the last entry of each distinct score (all detections at or
    # above that threshold included)
    last = np.r_[scores[1:] != scores[:-1], True]
    thr = scores[last]
    prec = precision[last]
    rec = recall[last]

    # precision envelope: best precision at recall >= r
    env = np.maximum.accumulate(prec[::-1])[::-1]
    prev_rec = np.r_[0.0, rec[:-1]]
    ap = float(np.sum((rec - prev_rec) * env))

    denom = np.where(prec + rec > 0, prec + rec, 1.0)
    f1 = np.where(prec + rec > 0, 2 * prec * rec / denom, 0.0)
    best = int(np.argmax(f1))
    points = [(float(t), float(r), float(p))
              for t, r, p in zip(thr, rec, prec)]
    return PRCurve(points, ap, float(rec[best]), float(f1[best]))


def export_pr_csv(path, curve, header_lines=()):
    """CSV `threshold,recall,precision` rows plus a trailing summary line."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("threshold,recall,precision\n")
        for t, r, p in curve.points:
            fh.write(f"{t:.6f},{r:.6f},{p:.6f}\n")
        fh.write(f"AP,{curve.ap:.6f},AR,{curve.ar:.6f},AF,{curve.af:.6f}\n")


def evaluate(dets, truths, iou_threshold=DEFAULT_IOU_THRESHOLD):
    """Convenience wrapper: match then sweep. dets/truths are per-image
    dicts."""
    tp_all, scores_all = [], []
    n_truths = 0
    for image_id, boxes in truths.items():
        n_truths += len(boxes)
    for image_id, image_dets in dets.items():
        tps, _, order = match_detections(image_dets,
                                         truths.get(image_id, []),
                                         iou_threshold)
        tp_all.extend(tps)
        scores_all.extend(image_dets[i].score for i in order)
    idx = np.argsort(np.asarray(scores_all))[::-1] if scores_all else []
    tp_sorted = [tp_all[i] for i in idx]
    sc_sorted = [scores_all[i] for i in idx]
    return pr_metrics(tp_sorted, sc_sorted, max(n_truths, 1))


def mirror_augment(windows):
    """Originals followed by their horizontal flips; count exactly doubles."""
    flipped = [np.asarray(w)[:, ::-1].copy() for w in windows]
    return list(windows) + flipped


def kfold_split(items, k, seed=0):
    """Disjoint, exhaustive, size-balanced folds; returns a list of
    (train_indices, test_indices) pairs."""
    n = len(items)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError("k exceeds number of items")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    folds = [sorted(perm[i::k].tolist()) for i in range(k)]
    splits = []
    for i in range(k):
        test = folds[i]
        train = sorted(x for j, f in enumerate(folds) if j != i for x in f)
        splits.append((train, test))
    return splits


def texture_corpus(count, size=128, spectral_exponent=0.6, n_shapes=6,
                   seed=0):
    """Fractal-noise images with rectangular patches, for pyramid
    calibration.

    The noise amplitude spectrum is 1/f^exponent. An exponent of 1 is the
    scale-free fixed point where channel statistics do not change under
    resampling; exponents below 1 put more energy in fine detail, so
    gradient-based channels follow a clean power law in the downsampling
    factor.
    """
    rng = np.random.default_rng(seed)
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    freq = np.sqrt(fy ** 2 + fx ** 2)
    freq[0, 0] = 1.0
    images = []
    for _ in range(count):
        spec = (rng.normal(size=(size, size))
                + 1j * rng.normal(size=(size, size)))
        img = np.fft.ifft2(spec / freq ** spectral_exponent).real
        img = 0.5 + 0.2 * (img - img.mean()) / img.std()
        for _ in range(n_shapes):
            w = int(rng.integers(size // 16, size // 4))
            h = int(rng.integers(size // 16, size // 4))
            x = int(rng.integers(0, size - w))
            y = int(rng.integers(0, size - h))
            img[y:y + h, x:x + w] += rng.uniform(-0.3, 0.3)
        img = np.clip(img, 0.0, 1.0)
        images.append(np.repeat(img[:, :, None], 3, axis=2))
    return images


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic corpus renderer.

    Targets are elongated bright ellipses; distractors are discs of similar
    area and contrast, which makes the two classes overlap enough that the
    classification task is not trivially separable.
    """

    image_size: int = 96
    object_length: float = 18.0
    object_width: float = 9.0
    n_objects: int = 1
    n_distractors: int = 2
    distractor_aspect: float = 1.4
    noise_level: float = 0.1
    contrast: float = 0.6
    contrast_jitter: float = 0.25
    edge_softness: float = 1.0


def _render_ellipse(img, cx, cy, angle, half_len, half_wid, gain, softness):
    """Anti-aliased rotated bright ellipse; returns its tight bounding box."""
    n = img.shape[0]
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    ca, sa = np.cos(angle), np.sin(angle)
    u = (xx - cx) * ca + (yy - cy) * sa
    v = -(xx - cx) * sa + (yy - cy) * ca
    d = np.sqrt((u / half_len) ** 2 + (v / half_wid) ** 2)
    alpha = np.clip((1.0 - d) * (min(half_len, half_wid) / softness), 0.0, 1.0)
    for c in range(img.shape[2]):
        level = gain * (1.0 if c != 2 else 0.6)
        img[:, :, c] = img[:, :, c] * (1 - alpha) + alpha * level
    half_w = half_len * abs(ca) + half_wid * abs(sa)
    half_h = half_len * abs(sa) + half_wid * abs(ca)
    return cx - half_w, cy - half_h, 2 * half_w, 2 * half_h


def synth_corpus(spec, count, rotation_range=(0.0, 0.0), seed=0):
    """Seed-deterministic corpus of textured-noise images with rendered
    objects; returns (images, truths) where truths maps image ids to
    AnnotatedBox lists. Distractor discs are rendered but not annotated."""
    rng = np.random.default_rng(seed)
    images, truths = [], {}
    n = spec.image_size
    lo, hi = rotation_range
    margin = max(spec.object_length, spec.object_width) / 2.0 + 3.0
    for i in range(count):
        image_id = f"synth{i:04d}"
        base = rng.normal(0.35, spec.noise_level, size=(n, n, 3))
        base = imaging.smooth(base, 1)
        img = np.clip(base, 0.0, 1.0)
        centers = []

        def place():
            for _attempt in range(50):
                cx = rng.uniform(margin, n - margin)
                cy = rng.uniform(margin, n - margin)
                if all((cx - px) ** 2 + (cy - py) ** 2 > (2 * margin) ** 2
                       for px, py in centers):
                    break
            centers.append((cx, cy))
            return cx, cy

        boxes = []
        for _ in range(spec.n_objects):
            cx, cy = place()
            angle = rng.uniform(lo, hi)
            gain = spec.contrast * (1.0 + spec.contrast_jitter
                                    * rng.uniform(-1.0, 1.0))
            _render_ellipse(
                img, cx, cy, angle, spec.object_length / 2.0,
                spec.object_width / 2.0, gain, spec.edge_softness)
            # annotate the rotation-invariant footprint square rather than
            # the tight axis-aligned box: the tight box's aspect depends on
            # the object's orientation, which an orientation-free detector
            # cannot and should not predict
            side = spec.object_length
            boxes.append(AnnotatedBox(image_id, cx - side / 2.0,
                                      cy - side / 2.0, side, side))
        # distractors: ellipses of the same area but milder elongation
        radius = np.sqrt(spec.object_length * spec.object_width) / 2.0
        root = np.sqrt(spec.distractor_aspect)
        for _ in range(spec.n_distractors):
            cx, cy = place()
            angle = rng.uniform(0.0, np.pi)
            gain = spec.contrast * (1.0 + spec.contrast_jitter
                                    * rng.uniform(-1.0, 1.0))
            _render_ellipse(img, cx, cy, angle, radius * root,
                            radius / root, gain, spec.edge_softness)
        img = np.clip(img, 0.0, 1.0)
        images.append(img)
        truths[image_id] = boxes
    return images, truths
