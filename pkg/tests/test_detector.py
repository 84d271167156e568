import numpy as np
import pytest

from orsim.aggregate import WindowSpec, window_vector
from orsim.boosting import (BoostedModel, TreeNode, score_window,
                            train_adaboost)
from orsim.detector import (Detection, detect, load_detections,
                            mine_hard_negatives, nms, save_detections,
                            scan_level, two_step_nms)
from orsim.features import ChannelComputer, FeatureConfig, channel_names
from orsim.pyramid import LambdaTable


def small_setup():
    cfg = FeatureConfig(sigma=3, m=1, color_space="rgb")
    window = WindowSpec(16, 16, 4)
    return cfg, window, ChannelComputer(cfg)


def fitted_model(cfg, window, computer, seed=0, thresholds=None):
    """Boosted model trained on real window vectors of a noise image."""
    rng = np.random.default_rng(seed)
    img = rng.random((48, 48, 3))
    agg = computer.aggregated(img)
    ch, cw = window.cell_height, window.cell_width
    vectors = np.array([
        window_vector(agg, window, (x, y))
        for y in range(agg.stack.height - ch + 1)
        for x in range(agg.stack.width - cw + 1)])
    labels = np.sign(vectors[:, 0] - np.median(vectors[:, 0]))
    labels[labels == 0] = 1.0
    trees, alphas, _ = train_adaboost(vectors, labels, 8)
    if thresholds is None:
        thresholds = list(-np.cumsum(alphas))  # everything passes
    return BoostedModel(trees, list(alphas), thresholds, window, cfg,
                        LambdaTable.zeros(), channel_names(cfg))


def constant_model(cfg, window):
    """Single always-positive leaf; useful for geometry checks."""
    tree = TreeNode(value=1, confidence=1.0)
    return BoostedModel([tree], [2.0], [-1e9], window, cfg,
                        LambdaTable.zeros(), channel_names(cfg))


def test_scan_level_matches_score_window():
    cfg, window, computer = small_setup()
    model = fitted_model(cfg, window, computer)
    rng = np.random.default_rng(3)
    agg = computer.aggregated(rng.random((40, 44, 3)))
    ys, xs, scores, accepted = scan_level(agg, model, use_cascade=False)
    assert accepted.all()
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            v = window_vector(agg, window, (x, y))
            s, _ = score_window(model, v, use_cascade=False)
            assert abs(scores[iy, ix] - s) < 1e-9


def test_scan_level_cascade_matches_score_window():
    cfg, window, computer = small_setup()
    model = fitted_model(cfg, window, computer)
    # tight thresholds so some windows are rejected mid-cascade
    model.cascade_thresholds = [0.0] * len(model.trees)
    rng = np.random.default_rng(4)
    agg = computer.aggregated(rng.random((40, 40, 3)))
    ys, xs, scores, accepted = scan_level(agg, model)
    assert accepted.any() and not accepted.all()
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            v = window_vector(agg, window, (x, y))
            _, ok = score_window(model, v)
            assert ok == accepted[iy, ix]


def test_scan_level_stride():
    cfg, window, computer = small_setup()
    model = fitted_model(cfg, window, computer)
    rng = np.random.default_rng(5)
    agg = computer.aggregated(rng.random((48, 48, 3)))
    ys1, xs1, s1, _ = scan_level(agg, model, use_cascade=False)
    ys2, xs2, s2, _ = scan_level(agg, model, stride_cells=2,
                                 use_cascade=False)
    assert np.array_equal(ys2, ys1[::2]) and np.array_equal(xs2, xs1[::2])
    assert np.allclose(s2, s1[::2, ::2])


def test_scan_level_too_small_image():
    cfg, window, computer = small_setup()
    model = fitted_model(cfg, window, computer)
    agg = computer.aggregated(np.random.default_rng(0).random((8, 8, 3)))
    ys, xs, scores, accepted = scan_level(agg, model)
    assert len(ys) == 0 and scores.size == 0


def test_detect_box_geometry_and_order():
    cfg = FeatureConfig(sigma=3, m=1, color_space="rgb")
    window = WindowSpec(16, 16, 4, 12, 12)
    model = constant_model(cfg, window)
    rng = np.random.default_rng(6)
    img = rng.random((32, 32, 3))
    dets = detect(img, model, n_per_oct=1, n_octaves=1)
    assert dets
    scales = {d.level for d in dets}
    assert scales == {0, 1}
    for d in dets:
        s = 1.0 if d.level == 0 else 0.5
        assert abs(d.w - 12.0 / s) < 1e-9 and abs(d.h - 12.0 / s) < 1e-9
        # centered object extent: origin offset is (16 - 12) / 2 = 2
        assert (d.x * s - 2.0) % 4.0 == pytest.approx(0.0, abs=1e-9)
    assert all(a.score >= b.score for a, b in zip(dets, dets[1:]))


def test_detect_score_threshold_and_stride_validation():
    cfg = FeatureConfig(sigma=3, m=1, color_space="rgb")
    window = WindowSpec(16, 16, 4)
    model = constant_model(cfg, window)
    img = np.random.default_rng(7).random((24, 24, 3))
    assert detect(img, model, n_per_oct=1, n_octaves=0,
                  score_threshold=10.0) == []
    with pytest.raises(ValueError):
        detect(img, model, stride_cells=0)


def test_nms_suppresses_overlaps():
    a = Detection(0, 0, 10, 10, 3.0)
    b = Detection(1, 0, 10, 10, 2.0)   # IoU 9/11 with a: suppressed
    c = Detection(30, 30, 10, 10, 1.0)
    kept = nms([c, b, a])
    assert kept == [a, c]
    with pytest.raises(ValueError):
        nms([a], overlap_threshold=0.0)


def test_two_step_nms_removes_contained_parts():
    big = Detection(0, 0, 40, 40, 5.0)
    part = Detection(2, 2, 8, 8, 4.0)   # IoU 0.04, containment 1.0
    far = Detection(100, 0, 8, 8, 3.0)
    assert nms([big, part, far]) == [big, part, far]
    assert two_step_nms([big, part, far]) == [big, far]
    with pytest.raises(ValueError):
        two_step_nms([big], containment_threshold=0.0)


def test_detections_file_round_trip(tmp_path):
    dets = {"im1": [Detection(1.0, 2.0, 3.0, 4.0, 0.5),
                    Detection(5.0, 6.0, 7.0, 8.0, 1.5)],
            "im2": [Detection(0.0, 0.0, 2.0, 2.0, -1.0)]}
    path = tmp_path / "dets.txt"
    save_detections(path, dets, header_lines=["seed=0"])
    loaded = load_detections(path)
    assert set(loaded) == {"im1", "im2"}
    # within an image, records are score-descending
    assert loaded["im1"][0].score == 1.5
    assert loaded["im1"][1].x == 1.0
    path.write_text("im1 1 2 3\n")
    with pytest.raises(ValueError):
        load_detections(path)


def test_mine_hard_negatives_returns_top_vectors():
    cfg, window, computer = small_setup()
    model = constant_model(cfg, window)
    rng = np.random.default_rng(8)
    images = [rng.random((32, 32, 3)) for _ in range(2)]
    vecs = mine_hard_negatives(images, model, cfg, window,
                               LambdaTable.zeros(), n_per_oct=1, n_octaves=1,
                               cap=10, computer=computer)
    assert vecs.shape == (10, len(channel_names(cfg)) * 4 * 4)
    none = mine_hard_negatives(images, model, cfg, window,
                               LambdaTable.zeros(), n_per_oct=1, n_octaves=1,
                               cap=10, computer=computer,
                               score_threshold=100.0)
    assert none.size == 0
