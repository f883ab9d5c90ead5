"""
Training and evaluation: losses, metrics, trainer, exports, experiments.
"""

from .config import TrainConfig, build_train_config
from .losses import loss_bce, loss_jaccard, loss_detection, frame_loss
from .metrics import (
    metric_iou,
    metric_dice,
    metric_accuracy,
    metric_chamfer,
    metric_detection,
    extract_peaks,
    match_detections,
    binarize,
)
from .evaluator import EvalReport, DetectionReport, evaluate, evaluate_async, score_frame
from .trainer import Trainer, TrainResult, train, read_log, LOG_COLUMNS
from .export import write_pgm, read_pgm, write_prob_map, read_prob_map
from .experiments import ablation_sweep, retention_experiment, PolicyTrace

__all__ = [
    "TrainConfig", "build_train_config",
    "loss_bce", "loss_jaccard", "loss_detection", "frame_loss",
    "metric_iou", "metric_dice", "metric_accuracy", "metric_chamfer", "metric_detection",
    "extract_peaks", "match_detections", "binarize",
    "EvalReport", "DetectionReport", "evaluate", "evaluate_async", "score_frame",
    "Trainer", "TrainResult", "train", "read_log", "LOG_COLUMNS",
    "write_pgm", "read_pgm", "write_prob_map", "read_prob_map",
    "ablation_sweep", "retention_experiment", "PolicyTrace",
]
