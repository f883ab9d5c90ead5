"""
Evaluation Metrics.

Mask overlap metrics, Chamfer distance and the peak-matching detection
protocol. All functions take plain numpy arrays.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from radar.labels import centre_cells

logger = logging.getLogger(__name__)

MASK_THRESHOLD = 0.5
SCORE_SWEEP = tuple(round(0.1 * k, 1) for k in range(1, 10))


def binarize(prob: np.ndarray, threshold: float = MASK_THRESHOLD) -> np.ndarray:
    return np.asarray(prob) >= threshold


def metric_iou(pred_bin: np.ndarray, target_bin: np.ndarray) -> float:
    """|A∩B| / |A∪B|; 1.0 when both masks are empty."""
    a, b = np.asarray(pred_bin, bool), np.asarray(target_bin, bool)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def metric_dice(pred_bin: np.ndarray, target_bin: np.ndarray) -> float:
    """2|A∩B| / (|A|+|B|); 1.0 when both masks are empty."""
    a, b = np.asarray(pred_bin, bool), np.asarray(target_bin, bool)
    total = np.count_nonzero(a) + np.count_nonzero(b)
    if total == 0:
        return 1.0
    return 2.0 * np.count_nonzero(a & b) / total


def metric_accuracy(pred_bin: np.ndarray, target_bin: np.ndarray) -> float:
    a, b = np.asarray(pred_bin, bool), np.asarray(target_bin, bool)
    return np.count_nonzero(a == b) / a.size


def _directed_chamfer(a: np.ndarray, b: np.ndarray) -> float:
    # distance from every cell to the nearest foreground cell of b
    to_b = ndimage.distance_transform_edt(~b)
    return float(to_b[a].mean())


def metric_chamfer(pred_bin: np.ndarray, target_bin: np.ndarray) -> float:
    """
    Symmetric mean nearest-neighbour distance between foreground cells.

    One empty mask -> grid diagonal; both empty -> 0.
    """
    a, b = np.asarray(pred_bin, bool), np.asarray(target_bin, bool)
    has_a, has_b = a.any(), b.any()
    if not has_a and not has_b:
        return 0.0
    if not has_a or not has_b:
        return float(np.hypot(*a.shape))
    return (_directed_chamfer(a, b) + _directed_chamfer(b, a)) / 2.0


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------

def extract_peaks(objectness: np.ndarray, score_thresh: float) -> List[Tuple[int, int, float]]:
    """
    Local maxima of ``objectness`` above ``score_thresh`` over 3×3 windows.

    On plateaus the first cell in row-major order wins.

    Returns:
        (row, col, score) sorted by descending score, ties in row-major order
    """
    obj = np.asarray(objectness, dtype=np.float64)
    local_max = ndimage.maximum_filter(obj, size=3, mode="constant", cval=-np.inf)
    rows, cols = np.nonzero((obj == local_max) & (obj > score_thresh))
    height, width = obj.shape
    peaks = []
    for r, c in zip(rows, cols):
        value = obj[r, c]
        shadowed = False
        for dr, dc in ((-1, -1), (-1, 0), (-1, 1), (0, -1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < height and 0 <= cc < width and obj[rr, cc] == value:
                shadowed = True
                break
        if not shadowed:
            peaks.append((int(r), int(c), float(value)))
    peaks.sort(key=lambda p: -p[2])
    return peaks


@dataclass
class DetectionCounts:
    """Match tallies accumulated over frames at one score threshold."""

    matched: int = 0
    predicted: int = 0
    ground_truth: int = 0
    range_errors: List[float] = field(default_factory=list)
    azimuth_errors: List[float] = field(default_factory=list)

    def add(self, other: "DetectionCounts") -> None:
        self.matched += other.matched
        self.predicted += other.predicted
        self.ground_truth += other.ground_truth
        self.range_errors.extend(other.range_errors)
        self.azimuth_errors.extend(other.azimuth_errors)

    @property
    def precision(self) -> float:
        return 1.0 if self.predicted == 0 else self.matched / self.predicted

    @property
    def recall(self) -> float:
        return 1.0 if self.ground_truth == 0 else self.matched / self.ground_truth

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def match_detections(
    pred: np.ndarray,
    target: np.ndarray,
    score_thresh: float,
    dist_thresh: float = 2.0
) -> DetectionCounts:
    """
    Greedy matching of predicted peaks to ground-truth centres.

    Args:
        pred: Detection map (H, W, 3)
        target: Rasterised detection targets (H, W, 3)
        score_thresh: Objectness threshold for peaks
        dist_thresh: Max cell distance of a match
    """
    if score_thresh <= 0 or dist_thresh <= 0:
        raise ValueError(f"Thresholds must be > 0, got score={score_thresh}, dist={dist_thresh}")
    pred = np.asarray(pred)
    truth = centre_cells(np.asarray(target))
    peaks = extract_peaks(pred[..., 0], score_thresh)
    counts = DetectionCounts(predicted=len(peaks), ground_truth=len(truth))
    taken = [False] * len(truth)
    for r, c, _ in peaks:
        best, best_dist = -1, None
        for k, (gr, gc, _, _) in enumerate(truth):
            if taken[k]:
                continue
            dist = float(np.hypot(r - gr, c - gc))
            if dist <= dist_thresh and (best_dist is None or dist < best_dist):
                best, best_dist = k, dist
        if best < 0:
            continue
        taken[best] = True
        gr, gc, gdr, gda = truth[best]
        counts.matched += 1
        counts.range_errors.append(abs((r + float(pred[r, c, 1])) - (gr + gdr)))
        counts.azimuth_errors.append(abs((c + float(pred[r, c, 2])) - (gc + gda)))
    return counts


def summarize_detection(per_threshold: Dict[float, DetectionCounts], score_thresh: float) -> Dict[str, float]:
    """F1 and errors at ``score_thresh``; mAP/mAR averaged over the sweep."""
    at = per_threshold[score_thresh]
    sweep = [per_threshold[t] for t in SCORE_SWEEP]
    return {
        "f1": at.f1,
        "map": float(np.mean([c.precision for c in sweep])),
        "mar": float(np.mean([c.recall for c in sweep])),
        "range_error": float(np.mean(at.range_errors)) if at.range_errors else 0.0,
        "azimuth_error": float(np.mean(at.azimuth_errors)) if at.azimuth_errors else 0.0,
    }


def detection_thresholds(score_thresh: float) -> Sequence[float]:
    return sorted(set(SCORE_SWEEP) | {score_thresh})


def metric_detection(
    pred: np.ndarray,
    target: np.ndarray,
    score_thresh: float = 0.5,
    dist_thresh: float = 2.0
) -> Dict[str, float]:
    """
    Detection quality of one frame.

    Returns:
        f1, map, mar, range_error, azimuth_error (errors in grid cells)
    """
    counts = {t: match_detections(pred, target, t, dist_thresh) for t in detection_thresholds(score_thresh)}
    return summarize_detection(counts, score_thresh)
