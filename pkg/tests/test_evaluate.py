import numpy as np
import pytest

from echomap import componentwise_pr, pixelwise_pr, pr_area
from echomap.evaluate import PRCurve, default_thresholds


def brute_force_pixel_counts(recon, truth, thresholds):
    peak = recon.max()
    norm = recon / peak if peak > 0 else recon
    out = []
    for thr in thresholds:
        tp = fp = fn = 0
        for v, t in zip(norm.ravel(), truth.ravel()):
            detected = v > thr
            if t and detected:
                tp += 1
            elif not t and detected:
                fp += 1
            elif t and not detected:
                fn += 1
        out.append((tp, fp, fn))
    return np.array(out)


def test_pixelwise_perfect_reconstruction():
    truth = np.zeros((6, 6), dtype=bool)
    truth[2:4, 1:5] = True
    curve = pixelwise_pr(truth.astype(float), truth)
    assert np.all(curve.precision == 1.0)
    # strict thresholding anchors recall 0 at the top threshold, 1 below it
    assert np.all(curve.recall[curve.thresholds < 1.0] == 1.0)
    assert pr_area(curve) == pytest.approx(1.0, abs=0)


def test_pixelwise_inverted_reconstruction():
    truth = np.zeros((6, 6), dtype=bool)
    truth[2:4, 1:5] = True
    curve = pixelwise_pr(1.0 - truth.astype(float), truth)
    assert np.all(curve.tp == 0)
    assert pr_area(curve) == 0.0


def test_pixelwise_matches_brute_force():
    rng = np.random.default_rng(0)
    recon = rng.uniform(0, 2, (8, 8))
    truth = rng.uniform(0, 1, (8, 8)) > 0.6
    thresholds = default_thresholds()
    curve = pixelwise_pr(recon, truth)
    ref = brute_force_pixel_counts(recon, truth, thresholds)
    assert np.array_equal(np.c_[curve.tp, curve.fp, curve.fn], ref)


def test_pixelwise_monotone_in_threshold():
    rng = np.random.default_rng(1)
    recon = rng.uniform(0, 1, (12, 12))
    truth = rng.uniform(0, 1, (12, 12)) > 0.5
    curve = pixelwise_pr(recon, truth)
    assert np.all(np.diff(curve.tp) >= 0)  # thresholds decrease along the sweep
    assert np.all(np.diff(curve.fp) >= 0)
    assert np.all(np.diff(curve.recall) >= -1e-15)


def test_pixelwise_scale_invariance():
    rng = np.random.default_rng(2)
    recon = rng.uniform(0, 1, (10, 10))
    truth = rng.uniform(0, 1, (10, 10)) > 0.5
    a = pixelwise_pr(recon, truth)
    b = pixelwise_pr(7.3 * recon, truth)
    assert np.array_equal(a.tp, b.tp) and np.array_equal(a.fp, b.fp)


def test_pixelwise_zero_recon_precision_convention():
    truth = np.zeros((4, 4), dtype=bool)
    truth[1, 1] = True
    curve = pixelwise_pr(np.zeros((4, 4)), truth)
    # zero pixels are never detections, even at threshold 0
    assert np.all(curve.tp == 0) and np.all(curve.fp == 0)
    assert np.all(curve.precision == 1.0)  # no detections -> precision 1


def test_pixelwise_shape_mismatch():
    with pytest.raises(ValueError):
        pixelwise_pr(np.zeros((3, 3)), np.zeros((4, 4), dtype=bool))


def _image_with_components(values):
    img = np.zeros((20, 30))
    for (r, c), v in values:
        img[r, c] = v
    return img


def test_componentwise_single_hit():
    img = _image_with_components([((5, 10), 1.0)])
    targets = [(0.05, 0.10)]
    curve = componentwise_pr(img, targets, pixel_pitch=0.01)
    assert curve.tp[-1] == 1  # detected at low thresholds
    assert np.all(curve.fp == 0)
    assert pr_area(curve) == pytest.approx(1.0)


def test_componentwise_far_component_is_fp():
    img = _image_with_components([((5, 10), 1.0)])
    targets = [(0.05, 0.25)]  # 15 cm away laterally
    curve = componentwise_pr(img, targets, pairing_radius=0.10, pixel_pitch=0.01)
    assert np.all(curve.tp == 0)
    assert curve.fp[-1] == 1


def test_componentwise_closest_of_two_pairs():
    # two components near one target: only the closest pairs, other counts FP
    img = _image_with_components([((5, 10), 0.9), ((5, 14), 0.8)])
    targets = [(0.05, 0.11)]
    curve = componentwise_pr(img, targets, pairing_radius=0.10, pixel_pitch=0.01,
                             seg_floor=0.1)
    # at threshold 0.85 (normalized: peaks are 1.0 and 0.888):
    idx = np.argmin(np.abs(curve.thresholds - 0.85))
    assert curve.tp[idx] == 1
    assert curve.fp[-1] == 1  # the farther component never pairs


def test_componentwise_target_order_invariance():
    rng = np.random.default_rng(3)
    img = rng.uniform(0, 1, (25, 25)) ** 4
    targets = [(0.05, 0.05), (0.12, 0.2), (0.2, 0.1)]
    a = componentwise_pr(img, targets, pixel_pitch=0.01)
    b = componentwise_pr(img, list(reversed(targets)), pixel_pitch=0.01)
    assert np.array_equal(a.tp, b.tp) and np.array_equal(a.fp, b.fp)


def test_componentwise_normalization_modes():
    img = _image_with_components([((5, 10), 0.5)])
    targets = [(0.05, 0.10)]
    per_image = componentwise_pr(img, targets, pixel_pitch=0.01)
    per_set = componentwise_pr(img, targets, pixel_pitch=0.01, norm_value=1.0)
    # per-image: peak normalizes to 1.0 (fires just below threshold 1);
    # per-set: stays 0.5 and is silent at threshold 0.75
    assert per_image.tp[1] == 1
    thr_idx = np.argmin(np.abs(per_set.thresholds - 0.75))
    assert per_set.tp[thr_idx] == 0


def test_componentwise_needs_targets():
    with pytest.raises(ValueError):
        componentwise_pr(np.ones((4, 4)), [], pixel_pitch=0.01)


def test_pr_area_constant_precision():
    n = 11
    recall = np.linspace(0, 1, n)
    for prec in (1.0, 0.5):
        curve = PRCurve(thresholds=np.linspace(1, 0, n), tp=np.zeros(n, int),
                        fp=np.zeros(n, int), fn=np.zeros(n, int),
                        precision=np.full(n, prec), recall=recall)
        assert pr_area(curve) == pytest.approx(prec, rel=1e-12)


def test_pr_area_single_point_is_zero():
    curve = PRCurve(thresholds=np.array([1.0]), tp=np.array([1]), fp=np.array([0]),
                    fn=np.array([0]), precision=np.array([1.0]), recall=np.array([1.0]))
    assert pr_area(curve) == 0.0


def test_pr_area_averages_duplicate_recalls():
    recall = np.array([0.0, 0.5, 0.5, 1.0])
    precision = np.array([1.0, 0.2, 0.8, 0.5])
    curve = PRCurve(thresholds=np.linspace(1, 0, 4), tp=np.zeros(4, int),
                    fp=np.zeros(4, int), fn=np.zeros(4, int),
                    precision=precision, recall=recall)
    # duplicates at recall 0.5 average to 0.5 -> trapezoid of (1, .5, .5)
    assert pr_area(curve) == pytest.approx(0.625, rel=1e-12)
