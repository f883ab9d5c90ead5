"""
Training Losses.

Segmentation: pixel-wise BCE or soft Jaccard. Detection: focal loss on
objectness plus smooth-L1 on the offsets of positive cells.
"""

from typing import Dict, Optional

import numpy as np

from engine import Tensor, clamp, log, mean, tabs, tsum, where
from model.decoder import BevMaps
from utils.errors import DimensionError

PROB_EPS = 1e-7
JACCARD_SMOOTH = 1.0
FOCAL_GAMMA = 2
FOCAL_ALPHA = 0.25
SMOOTH_L1_BETA = 1.0


def _check_shapes(pred: Tensor, target: np.ndarray, name: str) -> np.ndarray:
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise DimensionError(f"{name}: prediction {pred.shape} and target {target.shape} differ")
    return target


def loss_bce(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean of −[t·ln p + (1−t)·ln(1−p)], p clamped to [1e-7, 1−1e-7]."""
    t = _check_shapes(pred, target, "loss_bce")
    p = clamp(pred, PROB_EPS, 1.0 - PROB_EPS)
    return -mean(log(p) * t + log(1.0 - p) * (1.0 - t))


def loss_jaccard(pred: Tensor, target: np.ndarray) -> Tensor:
    """1 − (Σp·t + 1)/(Σp + Σt − Σp·t + 1)."""
    t = _check_shapes(pred, target, "loss_jaccard")
    inter = tsum(pred * t)
    union = tsum(pred) + float(t.sum()) - inter
    return 1.0 - (inter + JACCARD_SMOOTH) / (union + JACCARD_SMOOTH)


def focal_loss(objectness: Tensor, positives: np.ndarray) -> Tensor:
    """
    Mean focal loss over all cells.

    α weights positives, 1−α negatives; γ = 2.
    """
    p = clamp(objectness, PROB_EPS, 1.0 - PROB_EPS)
    p_t = where(positives, p, 1.0 - p)
    alpha_t = np.where(positives, FOCAL_ALPHA, 1.0 - FOCAL_ALPHA).astype(objectness.dtype)
    miss = 1.0 - p_t
    return mean(-(miss * miss) * log(p_t) * alpha_t)


def smooth_l1(diff: Tensor) -> Tensor:
    magnitude = tabs(diff)
    quadratic = magnitude.data < SMOOTH_L1_BETA
    return where(quadratic, diff * diff * (0.5 / SMOOTH_L1_BETA), magnitude - 0.5 * SMOOTH_L1_BETA)


def loss_detection(pred: Tensor, target: np.ndarray) -> Tensor:
    """
    Focal objectness loss + smooth-L1 offset loss, weighted 1:1.

    Args:
        pred: (..., H, W, 3) with sigmoid objectness in channel 0
        target: (..., H, W, 3) rasterised detection targets

    Returns:
        Scalar loss; the regression term is 0 without positive cells
    """
    t = _check_shapes(pred, target, "loss_detection")
    positives = t[..., 0] >= 0.5
    loss = focal_loss(pred[..., 0], positives)
    n_pos = int(positives.sum())
    if n_pos == 0:
        return loss
    mask = positives[..., None].astype(pred.dtype)
    regression = tsum(smooth_l1(pred[..., 1:] - t[..., 1:]) * mask) / float(n_pos)
    return loss + regression


SEG_LOSSES = {"bce": loss_bce, "jaccard": loss_jaccard}


def frame_loss(
    maps: BevMaps,
    seg_target: Optional[np.ndarray],
    det_target: Optional[np.ndarray],
    seg_loss: str = "jaccard",
    det_loss: str = "focal_smooth_l1",
    det_weight: float = 1.0
) -> Dict[str, Tensor]:
    """
    Per-head losses and their sum under key ``total``.

    Heads missing from ``maps`` are skipped.
    """
    terms: Dict[str, Tensor] = {}
    if maps.segmentation is not None and seg_target is not None:
        terms["segmentation"] = SEG_LOSSES[seg_loss](maps.segmentation, seg_target)
    if maps.detection is not None and det_target is not None and det_loss != "none":
        terms["detection"] = loss_detection(maps.detection, det_target) * det_weight
    if not terms:
        raise DimensionError("frame_loss: no head produced a prediction with a matching target")
    total = None
    for value in terms.values():
        total = value if total is None else total + value
    terms["total"] = total
    return terms

