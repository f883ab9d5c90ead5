"""
Experiments.

Ablation sweep over the architecture switches and the frame-to-frame
state-retention comparison.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from engine import no_grad
from model.config import ModelConfig
from model.network import ChirpCarry, SSMRadNet
from radar.scene import AdcFrame, Labels
from .config import TrainConfig
from .evaluator import score_frame
from .trainer import Trainer

logger = logging.getLogger(__name__)

Record = Tuple[AdcFrame, Labels]

DEFAULT_VARIANTS: Dict[str, Dict[str, object]] = {
    "avg_pool": {"chirp_aggregation": "avg_pool", "slow_time_expand": True},
    "final_state": {"chirp_aggregation": "final_state", "slow_time_expand": True},
    "conv1d": {"chirp_aggregation": "conv1d", "slow_time_expand": True},
    "no_expand": {"chirp_aggregation": "avg_pool", "slow_time_expand": False},
}


def ablation_sweep(
    base: ModelConfig,
    train_config: TrainConfig,
    train_records: Sequence[Record],
    val_records: Sequence[Record],
    variants: Optional[Dict[str, Dict[str, object]]] = None
) -> pd.DataFrame:
    """
    Train every variant from scratch on the same data.

    Args:
        base: Config the variants override
        train_config: Shared training settings
        variants: name -> ModelConfig overrides; aggregation and expansion ablations by default

    Returns:
        One row per variant with its best validation scores
    """
    rows = []
    for name, overrides in (variants or DEFAULT_VARIANTS).items():
        config = base.replace(**overrides)
        model = SSMRadNet(config)
        result = Trainer(model, train_config).fit(train_records, val_records)
        best = max(result.reports, key=lambda r: r.miou) if result.reports else None
        rows.append({
            "variant": name,
            "chirp_aggregation": config.chirp_aggregation,
            "slow_time_expand": config.slow_time_expand,
            "d_state": config.d_state,
            "params": model.params.count(),
            "val_miou": best.miou if best else 0.0,
            "val_dice": best.dice if best else 0.0,
        })
        logger.info(f"Variant {name}: val_miou={rows[-1]['val_miou']:.4f} val_dice={rows[-1]['val_dice']:.4f}")
    return pd.DataFrame(rows)


@dataclass
class PolicyTrace:
    """Per-frame behaviour of one state policy over a sequence."""

    policy: str
    miou: List[float]
    output_variance: float
    frames_to_recover: Optional[int]


def frames_to_recover(miou: Sequence[float], jump_at: int, tolerance: float = 0.05) -> int:
    """
    Frames after ``jump_at`` until mIoU is back within ``tolerance`` of the
    pre-jump steady level (0 when the jump frame itself is within).
    """
    steady = float(np.mean(miou[1:jump_at])) if jump_at > 1 else float(miou[0])
    for k, value in enumerate(miou[jump_at:]):
        if abs(value - steady) <= tolerance * max(steady, 1e-12):
            return k
    return len(miou) - jump_at


def run_policy(
    model: SSMRadNet,
    records: Sequence[Record],
    retain: bool,
    jump_at: Optional[int] = None,
    tolerance: float = 0.05
) -> PolicyTrace:
    """Run frames in order, carrying chirp state iff ``retain``."""
    carry: Optional[ChirpCarry] = None
    outputs, miou = [], []
    with no_grad():
        for frame, labels in records:
            maps, next_carry = model.forward_batch(frame.samples[None], carry=carry)
            carry = next_carry if retain else None
            single = maps.select(0)
            miou.append(score_frame(single, labels).iou or 0.0)
            outputs.append(single.seg_array())

    diffs = [
        float(np.mean((outputs[i] - outputs[i - 1]) ** 2))
        for i in range(1, len(outputs))
        if jump_at is None or i != jump_at
    ]
    return PolicyTrace(
        policy="retain_across_frames" if retain else "reset_per_frame",
        miou=miou,
        output_variance=float(np.mean(diffs)) if diffs else 0.0,
        frames_to_recover=frames_to_recover(miou, jump_at, tolerance) if jump_at is not None else None,
    )


def retention_experiment(
    model: SSMRadNet,
    records: Sequence[Record],
    jump_at: Optional[int] = None,
    tolerance: float = 0.05
) -> Dict[str, PolicyTrace]:
    """
    Compare reset-per-frame and retain-across-frames on one frame sequence.

    Args:
        model: Trained network with a segmentation head
        records: Consecutive frames of one scene sequence
        jump_at: Index of an injected scene discontinuity, if any

    Returns:
        policy name -> PolicyTrace
    """
    traces = {
        trace.policy: trace
        for trace in (
            run_policy(model, records, retain=False, jump_at=jump_at, tolerance=tolerance),
            run_policy(model, records, retain=True, jump_at=jump_at, tolerance=tolerance),
        )
    }
    for name, trace in traces.items():
        logger.info(
            f"{name}: mean_miou={np.mean(trace.miou):.4f} variance={trace.output_variance:.6f} "
            f"recover={trace.frames_to_recover}"
        )
    return traces
