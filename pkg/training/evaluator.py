"""
Evaluator.

Scores a model on labelled frames. ``evaluate`` runs batched forwards on the
calling thread; ``evaluate_async`` fans frames out to a bounded pool of
worker threads that share the read-only model.
"""

import asyncio
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from engine import no_grad
from model.decoder import BevMaps
from model.network import SSMRadNet
from radar.scene import AdcFrame, Labels
from utils.errors import ConfigError
from utils.settings import get_settings
from .metrics import (
    DetectionCounts, binarize, detection_thresholds, match_detections, metric_accuracy,
    metric_chamfer, metric_dice, metric_iou, summarize_detection,
)

logger = logging.getLogger(__name__)

Record = Tuple[AdcFrame, Labels]


class DetectionReport(BaseModel):
    f1: float = Field(0.0, ge=0.0, le=1.0)
    map: float = Field(0.0, ge=0.0, le=1.0)
    mar: float = Field(0.0, ge=0.0, le=1.0)
    range_error: float = Field(0.0, ge=0.0)
    azimuth_error: float = Field(0.0, ge=0.0)


class EvalReport(BaseModel):
    """Segmentation and detection quality over an evaluation set."""

    miou: float = Field(0.0, ge=0.0, le=1.0)
    dice: float = Field(0.0, ge=0.0, le=1.0)
    pixel_accuracy: float = Field(0.0, ge=0.0, le=1.0)
    chamfer: float = Field(0.0, ge=0.0)
    detection: DetectionReport = Field(default_factory=DetectionReport)
    frames: int = 0

    def summary(self) -> str:
        d = self.detection
        return (
            f"frames={self.frames} miou={self.miou:.4f} dice={self.dice:.4f} "
            f"accuracy={self.pixel_accuracy:.4f} chamfer={self.chamfer:.4f} "
            f"f1={d.f1:.4f} map={d.map:.4f} mar={d.mar:.4f} "
            f"range_error={d.range_error:.4f} azimuth_error={d.azimuth_error:.4f}"
        )


@dataclass
class FrameScore:
    iou: Optional[float]
    dice: Optional[float]
    accuracy: Optional[float]
    chamfer: Optional[float]
    detection: Optional[Dict[float, DetectionCounts]]


def score_frame(
    maps: BevMaps,
    labels: Labels,
    score_thresh: float = 0.5,
    dist_thresh: float = 2.0
) -> FrameScore:
    """
    Metrics of one unbatched prediction against its labels.

    Raises:
        ConfigError: Prediction grid differs from the label grid
    """
    if maps.grid != labels.grid:
        raise ConfigError(f"Model output grid {maps.grid} does not match label grid {labels.grid}")
    iou = dice = accuracy = chamfer = None
    if maps.segmentation is not None:
        # the label mask marks free cells
        pred = binarize(maps.seg_array())
        target = labels.seg_mask.astype(bool)
        iou = metric_iou(pred, target)
        dice = metric_dice(pred, target)
        accuracy = metric_accuracy(pred, target)
        chamfer = metric_chamfer(pred, target)
    detection = None
    if maps.detection is not None:
        detection = {
            t: match_detections(maps.det_array(), labels.det_targets, t, dist_thresh)
            for t in detection_thresholds(score_thresh)
        }
    return FrameScore(iou, dice, accuracy, chamfer, detection)


def combine_scores(scores: Sequence[FrameScore], score_thresh: float = 0.5) -> EvalReport:
    """Average per-frame overlap metrics and pool detection tallies."""
    def _mean(values: List[Optional[float]]) -> float:
        present = [v for v in values if v is not None]
        return float(np.mean(present)) if present else 0.0

    report = EvalReport(
        miou=_mean([s.iou for s in scores]),
        dice=_mean([s.dice for s in scores]),
        pixel_accuracy=_mean([s.accuracy for s in scores]),
        chamfer=_mean([s.chamfer for s in scores]),
        frames=len(scores),
    )
    det_scores = [s.detection for s in scores if s.detection is not None]
    if det_scores:
        pooled = {t: DetectionCounts() for t in det_scores[0]}
        for per_frame in det_scores:
            for t, counts in per_frame.items():
                pooled[t].add(counts)
        report.detection = DetectionReport(**summarize_detection(pooled, score_thresh))
    return report


def evaluate(
    model: SSMRadNet,
    records: Sequence[Record],
    batch_size: int = 8,
    score_thresh: float = 0.5,
    dist_thresh: float = 2.0
) -> EvalReport:
    """
    Evaluate on the calling thread with batched forwards.

    Args:
        model: Network to evaluate
        records: (frame, labels) pairs
        batch_size: Frames per forward pass

    Returns:
        EvalReport
    """
    scores: List[FrameScore] = []
    with no_grad():
        for start in range(0, len(records), batch_size):
            chunk = records[start:start + batch_size]
            samples = np.stack([frame.samples for frame, _ in chunk])
            maps, _ = model.forward_batch(samples)
            for i, (_, labels) in enumerate(chunk):
                scores.append(score_frame(maps.select(i), labels, score_thresh, dist_thresh))
    report = combine_scores(scores, score_thresh)
    logger.info(f"Evaluated {report.frames} frames: {report.summary()}")
    return report


def _infer(model: SSMRadNet, frame: AdcFrame) -> BevMaps:
    # grad mode is per thread
    with no_grad():
        return model.forward_frame(frame)


async def evaluate_async(
    model: SSMRadNet,
    records: Sequence[Record],
    workers: Optional[int] = None,
    score_thresh: float = 0.5,
    dist_thresh: float = 2.0
) -> EvalReport:
    """
    Evaluate with frames spread over at most ``workers`` threads.

    Args:
        model: Network shared read-only by all workers
        records: (frame, labels) pairs
        workers: Pool size; defaults to SSMRADNET_THREADS

    Returns:
        EvalReport identical in layout to ``evaluate``
    """
    workers = workers or get_settings().threads
    gate = asyncio.Semaphore(max(1, workers))

    async def _score(frame: AdcFrame, labels: Labels) -> FrameScore:
        async with gate:
            maps = await asyncio.to_thread(_infer, model, frame)
        return score_frame(maps, labels, score_thresh, dist_thresh)

    scores = await asyncio.gather(*(_score(frame, labels) for frame, labels in records))
    report = combine_scores(list(scores), score_thresh)
    logger.info(f"Evaluated {report.frames} frames on {workers} workers: {report.summary()}")
    return report
