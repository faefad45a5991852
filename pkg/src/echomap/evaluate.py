"""Detection metrics: pixel-wise and component-wise precision/recall curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage

__all__ = ["PRCurve", "pixelwise_pr", "componentwise_pr", "pr_area", "default_thresholds"]


def default_thresholds() -> np.ndarray:
    """Thresholds swept from 1 down to 0 in steps of 0.001."""
    return np.linspace(1.0, 0.0, 1001)


@dataclass(frozen=True)
class PRCurve:
    """Counts and rates per threshold, plus the area under precision(recall).

    Precision is defined as 1 where there are no detections (TP + FP = 0).
    """

    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    precision: np.ndarray
    recall: np.ndarray

    @property
    def area(self) -> float:
        return pr_area(self)


def _rates(tp, fp, fn):
    tp = tp.astype(float)
    det = tp + fp
    precision = np.where(det > 0, tp / np.maximum(det, 1), 1.0)
    pos = tp + fn
    recall = np.where(pos > 0, tp / np.maximum(pos, 1), 1.0)
    return precision, recall


def pixelwise_pr(recon, truth_mask, norm_value: float | None = None,
                 thresholds: np.ndarray | None = None) -> PRCurve:
    """Detection counts of thresholded pixels against a binary truth mask.

    The reconstruction is normalized by its own maximum (or by ``norm_value``
    when scoring a set of images against a shared maximum); a pixel is
    detected when its normalized value is >= the threshold.
    """
    recon = np.asarray(recon, dtype=float)
    truth = np.asarray(truth_mask).astype(bool)
    if recon.shape != truth.shape:
        raise ValueError("reconstruction and truth dimensions differ")
    peak = float(recon.max()) if norm_value is None else float(norm_value)
    norm = recon / peak if peak > 0 else recon
    if thresholds is None:
        thresholds = default_thresholds()

    vals = norm.ravel()
    t = truth.ravel()
    n_pos = int(t.sum())
    # detections per threshold by counting values >= thr among truth / non-truth
    pos_sorted = np.sort(vals[t])
    neg_sorted = np.sort(vals[~t])
    tp = n_pos - np.searchsorted(pos_sorted, thresholds, side="right")
    fp = neg_sorted.size - np.searchsorted(neg_sorted, thresholds, side="right")
    fn = n_pos - tp
    precision, recall = _rates(tp, fp, fn)
    return PRCurve(thresholds=np.asarray(thresholds, dtype=float), tp=tp, fp=fp, fn=fn,
                   precision=precision, recall=recall)


def _components(norm_img: np.ndarray, pixel_pitch: float, seg_floor: float):
    """Label 8-connected components above seg_floor; return (max, centroid) each."""
    mask = norm_img >= seg_floor
    labels, n = scipy.ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    comps = []
    for lab in range(1, n + 1):
        sel = labels == lab
        w = norm_img[sel]
        rows, cols = np.nonzero(sel)
        total = w.sum()
        centroid = (float((rows * w).sum() / total) * pixel_pitch,
                    float((cols * w).sum() / total) * pixel_pitch)
        comps.append((float(w.max()), centroid))
    return comps


def componentwise_pr(recon, targets, pairing_radius: float = 0.10, *,
                     pixel_pitch: float, seg_floor: float = 0.02,
                     norm_value: float | None = None,
                     thresholds: np.ndarray | None = None) -> PRCurve:
    """Detection counts over connected components paired to ground-truth targets.

    The image is segmented once (threshold-free sweep afterwards) at
    ``seg_floor`` times the maximum, 8-connected. Each component keeps its peak
    value and intensity-weighted centroid. A component pairs to a target when
    it is the closest component to that target's centroid and lies within
    ``pairing_radius`` meters. Per threshold, TP counts targets whose paired
    component peaks at or above it, FP counts unpaired components doing so,
    and FN = #targets - TP.
    """
    targets = list(targets)
    if not targets:
        raise ValueError("need at least one target")
    recon = np.asarray(recon, dtype=float)
    peak = float(recon.max()) if norm_value is None else float(norm_value)
    norm = recon / peak if peak > 0 else recon
    comps = _components(norm, pixel_pitch, seg_floor)
    if thresholds is None:
        thresholds = default_thresholds()
    thresholds = np.asarray(thresholds, dtype=float)

    def centroid_of(tgt):
        return np.asarray(getattr(tgt, "centroid", tgt), dtype=float)

    paired_peaks = []
    used = set()
    if comps:
        centers = np.array([c for _, c in comps])
        for tgt in targets:
            d = np.linalg.norm(centers - centroid_of(tgt), axis=1)
            best = int(np.argmin(d))
            if d[best] <= pairing_radius:
                paired_peaks.append(comps[best][0])
                used.add(best)
    unpaired_peaks = [comps[i][0] for i in range(len(comps)) if i not in used]

    paired_sorted = np.sort(np.asarray(paired_peaks, dtype=float))
    unpaired_sorted = np.sort(np.asarray(unpaired_peaks, dtype=float))
    tp = paired_sorted.size - np.searchsorted(paired_sorted, thresholds, side="right")
    fp = unpaired_sorted.size - np.searchsorted(unpaired_sorted, thresholds, side="right")
    fn = len(targets) - tp
    precision, recall = _rates(tp, fp, fn)
    return PRCurve(thresholds=thresholds, tp=tp, fp=fp, fn=fn,
                   precision=precision, recall=recall)


def pr_area(curve: PRCurve) -> float:
    """Trapezoidal area under precision as a function of recall.

    Points are sorted by recall and duplicate-recall points averaged; a curve
    spanning a single recall value has zero area.
    """
    recall = np.asarray(curve.recall, dtype=float)
    precision = np.asarray(curve.precision, dtype=float)
    if recall.size == 0:
        raise ValueError("empty curve")
    uniq, inverse = np.unique(recall, return_inverse=True)
    avg = np.zeros(uniq.size)
    counts = np.bincount(inverse)
    np.add.at(avg, inverse, precision)
    avg /= counts
    if uniq.size < 2:
        return 0.0
    return float(np.trapezoid(avg, uniq))
