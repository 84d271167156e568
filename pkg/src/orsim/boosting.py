"""AdaBoost over depth-3 decision trees with a soft cascade.

Weak learners are greedy depth-3 trees trained on quantile-binned features.
Rounds follow the discrete AdaBoost schedule: beta_t = eps_t / (1 - eps_t),
alpha_t = ln(1 / beta_t), weights of correctly classified samples scaled by
beta_t and renormalized. The staged detector training grows the weak-learner
count per stage and mines hard negatives with the current detector between
stages. Per-tree partial-sum thresholds calibrated on the training positives
give early rejection at scan time.
"""

from dataclasses import dataclass, field

import numpy as np

from .aggregate import WindowSpec, window_vector, window_vector_length
from .features import ChannelComputer, channel_names
from .pyramid import LambdaTable

__all__ = ["TreeNode", "Binning", "train_tree", "adaboost_round",
           "train_adaboost", "calibrate_cascade", "score_window",
           "BoostedModel", "train_detector", "DegenerateDataError",
           "exponential_loss", "positive_crops", "positive_window_vectors"]

N_BINS = 256
EPS_FLOOR = 1e-6
CASCADE_MARGIN_FRACTION = 0.1
DEFAULT_RANDOM_NEGATIVES = 5000
DEFAULT_HARD_NEGATIVE_CAP = 5000


class DegenerateDataError(ValueError):
    """Training data contains a single class."""


@dataclass
class TreeNode:
    """Split node or leaf of a depth-limited decision tree."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode" = None
    right: "TreeNode" = None
    value: int = 0          # leaf label in {-1, +1}
    confidence: float = 0.0  # weighted margin of the leaf

    @property
    def is_leaf(self):
        return self.left is None

    def predict(self, x):
        node = self
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.value

    def predict_batch(self, vectors):
        out = np.empty(vectors.shape[0], dtype=np.float64)
        idx = np.arange(vectors.shape[0])
        self._fill(vectors, idx, out)
        return out

    def _fill(self, vectors, idx, out):
        if self.is_leaf:
            out[idx] = self.value
            return
        go_left = vectors[idx, self.feature] <= self.threshold
        self.left._fill(vectors, idx[go_left], out)
        self.right._fill(vectors, idx[~go_left], out)


class Binning:
    """Per-feature quantile thresholds mapping features to uint8 bins."""

    def __init__(self, vectors, n_bins=N_BINS):
        self.n_bins = n_bins
        qs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
        self.thresholds = np.quantile(vectors, qs, axis=0).T.copy()

    def transform(self, vectors):
        n, f = vectors.shape
        bins = np.empty((n, f), dtype=np.uint8)
        for j in range(f):
            bins[:, j] = np.searchsorted(self.thresholds[j], vectors[:, j],
                                         side="right")
        return bins


def _best_split(bins, thresholds, idx, wpos, wneg, n_bins):
    """Exhaustive weighted split search; ties resolved by lowest feature,
    then lowest bin."""
    n_feat = bins.shape[1]
    sub = bins[idx]
    offsets = (np.arange(n_feat, dtype=np.intp) * n_bins)[None, :]
    flat = sub.astype(np.intp) + offsets
    hp = np.bincount(flat.ravel(),
                     weights=np.repeat(wpos[idx], n_feat),
                     minlength=n_feat * n_bins).reshape(n_feat, n_bins)
    hn = np.bincount(flat.ravel(),
                     weights=np.repeat(wneg[idx], n_feat),
                     minlength=n_feat * n_bins).reshape(n_feat, n_bins)
    hc = np.bincount(flat.ravel(),
                     minlength=n_feat * n_bins).reshape(n_feat, n_bins)
    tot_p = wpos[idx].sum()
    tot_n = wneg[idx].sum()
    lp = np.cumsum(hp, axis=1)[:, :-1]
    ln = np.cumsum(hn, axis=1)[:, :-1]
    lc = np.cumsum(hc, axis=1)[:, :-1]
    # left predicts -1 / right +1, or the reverse
    err = np.minimum(lp + (tot_n - ln), ln + (tot_p - lp))
    # a split is only usable if both sides receive samples
    err = np.where((lc == 0) | (lc == len(idx)), np.inf, err)
    best_flat = int(np.argmin(err))
    f, b = divmod(best_flat, n_bins - 1)
    return f, b, float(err[f, b]), float(min(tot_p, tot_n))


def _grow(bins, thresholds, y, wpos, wneg, idx, depth, max_depth, n_bins):
    tp, tn = wpos[idx].sum(), wneg[idx].sum()
    total = tp + tn

    def leaf():
        value = 1 if tp >= tn else -1
        conf = abs(tp - tn) / total if total > 0 else 0.0
        return TreeNode(value=value, confidence=conf)

    if depth >= max_depth or total <= 0 or tp == 0 or tn == 0:
        return leaf()
    f, b, split_err, leaf_err = _best_split(bins, thresholds, idx,
                                            wpos, wneg, n_bins)
    # equal-error splits are kept: XOR-style targets need two levels before
    # the misclassification error drops at all
    if split_err > leaf_err:
        return leaf()
    go_left = bins[idx, f] <= b
    left_idx, right_idx = idx[go_left], idx[~go_left]
    if len(left_idx) == 0 or len(right_idx) == 0:
        return leaf()
    node = TreeNode(feature=int(f), threshold=float(thresholds[f, b]))
    node.left = _grow(bins, thresholds, y, wpos, wneg, left_idx,
                      depth + 1, max_depth, n_bins)
    node.right = _grow(bins, thresholds, y, wpos, wneg, right_idx,
                       depth + 1, max_depth, n_bins)
    return node


def train_tree(vectors, labels, weights, binning=None, bins=None,
               max_depth=3):
    """Greedy depth-3 tree minimizing weighted misclassification.

    Returns (tree, weighted_error). Raises DegenerateDataError on
    single-class input.
    """
    labels = np.asarray(labels, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if np.all(labels > 0) or np.all(labels < 0):
        raise DegenerateDataError("both classes are required")
    if binning is None:
        binning = Binning(vectors)
    if bins is None:
        bins = binning.transform(vectors)
    wpos = np.where(labels > 0, weights, 0.0)
    wneg = np.where(labels < 0, weights, 0.0)
    idx = np.arange(len(labels))
    tree = _grow(bins, binning.thresholds, labels, wpos, wneg, idx,
                 0, max_depth, binning.n_bins)
    pred = tree.predict_batch(vectors)
    eps = float(weights[pred != labels].sum() / weights.sum())
    return tree, eps


def adaboost_round(vectors, labels, weights, binning=None, bins=None):
    """One boosting round: train a tree, compute alpha, reweight.

    Returns (tree, alpha, eps, new_weights). eps is floored at EPS_FLOOR for
    the beta computation; eps >= 0.5 raises RuntimeError (useless learner).
    """
    tree, eps = train_tree(vectors, labels, weights, binning=binning,
                           bins=bins)
    if eps >= 0.5:
        raise RuntimeError(f"weak learner error {eps:.4f} >= 0.5")
    eps_eff = max(eps, EPS_FLOOR)
    beta = eps_eff / (1.0 - eps_eff)
    alpha = float(np.log(1.0 / beta))
    pred = tree.predict_batch(vectors)
    new_w = np.where(pred == labels, weights * beta, weights)
    new_w = new_w / new_w.sum()
    return tree, alpha, eps, new_w


def exponential_loss(trees, alphas, vectors, labels):
    """Mean exponential loss of the boosted committee.

    The margin uses half the detection score scale: multiplying correct
    samples by beta = eps/(1-eps) equals exponential reweighting with
    exponent alpha/2, so this is the potential the weight schedule descends
    (it contracts by 2*sqrt(eps(1-eps)) <= 1 per round).
    """
    scores = np.zeros(vectors.shape[0])
    for tree, alpha in zip(trees, alphas):
        scores += alpha * tree.predict_batch(vectors)
    return float(np.mean(np.exp(-0.5 * labels * scores)))


def train_adaboost(vectors, labels, n_rounds, track_loss=False):
    """Boost n_rounds depth-3 trees; returns (trees, alphas, diagnostics)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    binning = Binning(vectors)
    bins = binning.transform(vectors)
    w = np.full(len(labels), 1.0 / len(labels))
    trees, alphas = [], []
    diag = {"eps": [], "loss": []}
    scores = np.zeros(len(labels))
    for _ in range(n_rounds):
        try:
            tree, alpha, eps, w = adaboost_round(vectors, labels, w,
                                                 binning=binning, bins=bins)
        except RuntimeError:
            break
        trees.append(tree)
        alphas.append(alpha)
        diag["eps"].append(eps)
        if track_loss:
            scores += alpha * tree.predict_batch(vectors)
            diag["loss"].append(
                float(np.mean(np.exp(-0.5 * labels * scores))))
        if eps == 0.0:
            # a perfect tree leaves the reweighting a no-op, so further
            # rounds would reproduce the same tree forever
            break
    return trees, alphas, diag


def calibrate_cascade(trees, alphas, positive_vectors,
                      margin_fraction=CASCADE_MARGIN_FRACTION):
    """Per-tree rejection thresholds from training-positive partial sums."""
    if len(trees) == 0:
        return []
    margin = margin_fraction * alphas[0]
    partial = np.zeros(positive_vectors.shape[0])
    thresholds = []
    for tree, alpha in zip(trees, alphas):
        partial += alpha * tree.predict_batch(positive_vectors)
        thresholds.append(float(partial.min() - margin))
    return thresholds


@dataclass
class BoostedModel:
    """Trained soft-cascade detector plus everything needed to re-run it."""

    trees: list
    alphas: list
    cascade_thresholds: list
    window: WindowSpec
    config: "FeatureConfig"
    lambda_table: LambdaTable
    names: list = field(default_factory=list)

    def __post_init__(self):
        if not (len(self.trees) == len(self.alphas)
                == len(self.cascade_thresholds)):
            raise ValueError("trees, alphas, thresholds must align")
        if not self.names:
            self.names = channel_names(self.config)

    @property
    def vector_length(self):
        return window_vector_length(self.window, len(self.names))


def score_window(model, vec, use_cascade=True):
    """Soft-cascade score of one feature vector.

    Returns (score, accepted): a rejected window reports the partial sum at
    the tree that tripped the cascade.
    """
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[0] != model.vector_length:
        raise ValueError("feature vector length mismatch")
    total = 0.0
    for tree, alpha, theta in zip(model.trees, model.alphas,
                                  model.cascade_thresholds):
        total += alpha * tree.predict(vec)
        if use_cascade and total < theta:
            return total, False
    return total, True


def _window_vectors_from_crops(crops, computer, window, pad_cells=0):
    rows = []
    for crop in crops:
        agg = computer.aggregated(crop)
        rows.append(window_vector(agg, window, (pad_cells, pad_cells)))
    return np.asarray(rows)


def positive_window_vectors(images, boxes_by_image, cfg, window,
                            computer=None, neighborhood=1):
    """Scan-path window vectors at annotated object locations.

    Each box contributes the window whose origin lies nearest its center on
    the cell grid of the full-image aggregated stack, plus the origins up to
    `neighborhood` cells away. These are the vectors the sliding window
    actually produces for the objects, which makes them the right set for
    cascade calibration.
    """
    if computer is None:
        computer = ChannelComputer(cfg)
    shrink = window.shrink
    rows = []
    for image_id, img in images:
        boxes = boxes_by_image.get(image_id, [])
        if not boxes:
            continue
        agg = computer.aggregated(img)
        max_y = agg.stack.height - window.cell_height
        max_x = agg.stack.width - window.cell_width
        if max_y < 0 or max_x < 0:
            continue
        for b in boxes:
            cx = b.x + b.w / 2.0
            cy = b.y + b.h / 2.0
            ox = int(round((cx - window.width / 2.0) / shrink))
            oy = int(round((cy - window.height / 2.0) / shrink))
            seen = set()
            for dy in range(-neighborhood, neighborhood + 1):
                for dx in range(-neighborhood, neighborhood + 1):
                    x = min(max(ox + dx, 0), max_x)
                    y = min(max(oy + dy, 0), max_y)
                    if (x, y) in seen:
                        continue
                    seen.add((x, y))
                    rows.append(window_vector(agg, window, (x, y)))
    return np.asarray(rows) if rows else np.empty((0, 0))


def positive_crops(images, boxes_by_image, window, context_pad,
                   jitter=0, n_jitter=1, seed=0):
    """Cut window-plus-context training crops around annotated boxes.

    Each crop spans the model window plus `context_pad` pixels of context on
    every side, centered on the box center; images are reflect-padded so
    near-border objects still yield full crops. With jitter > 0 each box
    also contributes n_jitter - 1 copies offset by up to `jitter` pixels,
    which makes the trained scorer tolerant of cell-grid misalignment.
    """
    rng = np.random.default_rng(seed)
    pad = int(context_pad)
    crop_h = window.height + 2 * pad
    crop_w = window.width + 2 * pad
    crops = []
    for image_id, img in images:
        boxes = boxes_by_image.get(image_id, [])
        if not boxes:
            continue
        img = np.asarray(img, dtype=np.float64)
        widths = ((pad, pad), (pad, pad)) + ((0, 0),) * (img.ndim - 2)
        padded = np.pad(img, widths, mode="reflect")
        for b in boxes:
            cx = b.x + b.w / 2.0
            cy = b.y + b.h / 2.0
            offsets = [(0, 0)]
            for _ in range(max(n_jitter, 1) - 1):
                offsets.append((int(rng.integers(-jitter, jitter + 1)),
                                int(rng.integers(-jitter, jitter + 1))))
            for jx, jy in offsets:
                ox = int(round(cx - window.width / 2.0)) + jx
                oy = int(round(cy - window.height / 2.0)) + jy
                crop = padded[oy:oy + crop_h, ox:ox + crop_w]
                if crop.shape[:2] == (crop_h, crop_w):
                    crops.append(crop)
    return crops


def _random_negative_vectors(images, computer, window, count, rng):
    """Sample window vectors from full-image aggregated stacks."""
    aggs = [computer.aggregated(img) for img in images]
    rows = []
    usable = [a for a in aggs
              if a.stack.height >= window.cell_height
              and a.stack.width >= window.cell_width]
    if not usable:
        return np.empty((0, 0))
    for _ in range(count):
        agg = usable[rng.integers(len(usable))]
        oy = int(rng.integers(agg.stack.height - window.cell_height + 1))
        ox = int(rng.integers(agg.stack.width - window.cell_width + 1))
        rows.append(window_vector(agg, window, (ox, oy)))
    return np.asarray(rows)


def train_detector(positives, negative_pool, schedule, cfg, window,
                   lambda_table=None, seed=0,
                   n_random_negatives=DEFAULT_RANDOM_NEGATIVES,
                   hard_negative_cap=DEFAULT_HARD_NEGATIVE_CAP,
                   n_per_oct=4, context_pad=0, calibration_vectors=None,
                   verbose=False):
    """Staged detector training with hard-negative mining.

    positives: image crops of size (height + 2 * context_pad,
    width + 2 * context_pad); the surrounding context keeps the crop
    features consistent with scan-time windows, which are computed on whole
    images. context_pad must be a multiple of the shrink factor.
    negative_pool: object-free images. schedule: increasing weak-learner
    counts, one entry per stage. Stage 0 uses mirror-augmented positives
    plus random negative windows; later stages add the current detector's
    top-scoring false positives and retrain from scratch.

    calibration_vectors optionally replaces the training vectors for the
    cascade-threshold calibration; pass scan-path window vectors of the
    training objects so the thresholds reflect sliding-window scores rather
    than the (higher) margins boosting reaches on its own training set.
    """
    from . import detector as det
    from .evalkit import mirror_augment

    if len(positives) == 0:
        raise ValueError("empty positive set")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be increasing")
    if context_pad < 0 or context_pad % window.shrink != 0:
        raise ValueError("context_pad must be a non-negative multiple "
                         "of the shrink factor")
    pad_cells = context_pad // window.shrink
    rng = np.random.default_rng(seed)
    computer = ChannelComputer(cfg)
    if lambda_table is None:
        lambda_table = LambdaTable.zeros()

    pos_crops = mirror_augment(positives)
    pos_vecs = _window_vectors_from_crops(pos_crops, computer, window,
                                          pad_cells)
    neg_vecs = _random_negative_vectors(negative_pool, computer, window,
                                        n_random_negatives, rng)
    model = None
    for stage, n_weak in enumerate(schedule):
        if stage > 0:
            mined = det.mine_hard_negatives(
                negative_pool, model, cfg, window, lambda_table,
                n_per_oct=n_per_oct, cap=hard_negative_cap,
                computer=computer)
            if len(mined) == 0:
                if verbose:
                    print(f"stage {stage}: no hard negatives found, skipping")
                continue
            neg_vecs = np.vstack([neg_vecs, mined])
        vectors = np.vstack([pos_vecs, neg_vecs])
        labels = np.concatenate([np.ones(len(pos_vecs)),
                                 -np.ones(len(neg_vecs))])
        trees, alphas, diag = train_adaboost(vectors, labels, n_weak)
        calib = (pos_vecs if calibration_vectors is None
                 else np.asarray(calibration_vectors))
        thresholds = calibrate_cascade(trees, alphas, calib)
        model = BoostedModel(trees, alphas, thresholds, window, cfg,
                             lambda_table)
        if verbose:
            loss = exponential_loss(trees, alphas, vectors, labels)
            print(f"stage {stage}: {len(trees)} trees, "
                  f"final eps {diag['eps'][-1]:.4f}, exp loss {loss:.4f}")
    return model
