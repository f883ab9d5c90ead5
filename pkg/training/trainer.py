"""
Trainer.

Mini-batch Adam training with per-epoch validation, best-by-mIoU
checkpointing and a CSV log. A non-finite loss or gradient aborts the run;
the checkpoint on disk is always the last good one.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from engine import Adam, backward
from model.checkpoint import Checkpoint, save_checkpoint
from model.network import SSMRadNet
from radar.scene import AdcFrame, Labels
from utils.errors import ConfigError, NumericalAbort
from .config import TrainConfig
from .evaluator import EvalReport, evaluate
from .losses import frame_loss

logger = logging.getLogger(__name__)

Record = Tuple[AdcFrame, Labels]

LOG_COLUMNS = ["epoch", "train_loss", "val_miou", "val_dice", "val_chamfer", "val_f1"]
CHECKPOINT_NAME = "checkpoint.ssmc"
LOG_NAME = "log.csv"


@dataclass
class TrainResult:
    """Outcome of a training run."""

    best_epoch: int
    best_miou: float
    history: pd.DataFrame
    reports: List[EvalReport] = field(default_factory=list)
    checkpoint_path: Optional[Path] = None


class Trainer:
    """
    Trains one SSMRadNet instance in place.

    Deterministic for a fixed seed: batch order comes from a generator
    seeded with ``train_config.seed``.
    """

    def __init__(
        self,
        model: SSMRadNet,
        train_config: TrainConfig,
        run_dir: Optional[Union[str, Path]] = None
    ):
        self.model = model
        self.config = train_config
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.optimizer = Adam(
            model.params.values(), lr=train_config.lr, weight_decay=train_config.weight_decay
        )
        self.rng = np.random.default_rng(train_config.seed)

    @property
    def checkpoint_path(self) -> Optional[Path]:
        return self.run_dir / CHECKPOINT_NAME if self.run_dir else None

    @property
    def log_path(self) -> Optional[Path]:
        return self.run_dir / LOG_NAME if self.run_dir else None

    def _check_records(self, records: Sequence[Record]) -> None:
        for frame, labels in records:
            self.model.check_dims(frame.samples.shape)
            if labels.grid != self.model.config.output_grid:
                raise ConfigError(
                    f"Label grid {labels.grid} does not match model output grid {self.model.config.output_grid}"
                )

    def _save(self) -> None:
        if self.checkpoint_path is not None:
            save_checkpoint(Checkpoint.from_parameters(self.model.config, self.model.params), self.checkpoint_path)

    def train_step(self, batch: Sequence[Record]) -> float:
        """
        One optimizer update on a mini-batch.

        Returns:
            Batch loss

        Raises:
            NumericalAbort: Loss or any gradient is not finite
        """
        samples = np.stack([frame.samples for frame, _ in batch])
        seg = np.stack([labels.seg_mask for _, labels in batch]).astype(self.model.dtype)
        det = np.stack([labels.det_targets for _, labels in batch]).astype(self.model.dtype)

        self.optimizer.zero_grad()
        maps, _ = self.model.forward_batch(samples)
        terms = frame_loss(
            maps, seg, det,
            seg_loss=self.config.seg_loss,
            det_loss=self.config.det_loss,
            det_weight=self.config.det_weight,
        )
        loss = terms["total"]
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalAbort(f"Loss became {value} at optimizer step {self.optimizer.step_count + 1}")
        backward(loss)
        for name, tensor in self.model.params.items():
            if tensor.grad is None:
                # heads without a loss term
                tensor.grad = np.zeros_like(tensor.data)
            elif not np.all(np.isfinite(tensor.grad)):
                raise NumericalAbort(f"Non-finite gradient in {name} at step {self.optimizer.step_count + 1}")
        self.optimizer.step()
        return value

    def train_epoch(self, records: Sequence[Record]) -> float:
        order = self.rng.permutation(len(records))
        size = self.config.batch_size
        losses = []
        for start in range(0, len(order), size):
            batch = [records[i] for i in order[start:start + size]]
            losses.append(self.train_step(batch))
            logger.debug(f"step {self.optimizer.step_count}: loss={losses[-1]:.6f}")
        return float(np.mean(losses)) if losses else 0.0

    def fit(
        self,
        train_records: Sequence[Record],
        val_records: Optional[Sequence[Record]] = None
    ) -> TrainResult:
        """
        Run the configured number of epochs.

        Args:
            train_records: Training frames with labels
            val_records: Validation frames; the training set is used when omitted

        Returns:
            TrainResult with the per-epoch history
        """
        val_records = val_records if val_records else train_records
        self._check_records(train_records)
        self._check_records(val_records)
        if self.run_dir is not None:
            self.run_dir.mkdir(parents=True, exist_ok=True)
        self._save()

        rows: List[Dict[str, float]] = []
        reports: List[EvalReport] = []
        best_epoch, best_miou = 0, -1.0
        logger.info(
            f"Training {self.model.params.count()} parameters on {len(train_records)} frames "
            f"for {self.config.epochs} epochs"
        )
        for epoch in range(1, self.config.epochs + 1):
            try:
                train_loss = self.train_epoch(train_records)
            except NumericalAbort:
                logger.error(f"Training diverged in epoch {epoch}; keeping checkpoint from epoch {best_epoch}")
                self._write_log(rows)
                raise
            if epoch % self.config.eval_every and epoch != self.config.epochs:
                continue
            report = evaluate(
                self.model, val_records, self.config.batch_size,
                self.config.score_thresh, self.config.dist_thresh,
            )
            reports.append(report)
            rows.append({
                "epoch": epoch,
                "train_loss": train_loss,
                "val_miou": report.miou,
                "val_dice": report.dice,
                "val_chamfer": report.chamfer,
                "val_f1": report.detection.f1,
            })
            self._write_log(rows)
            if report.miou > best_miou:
                best_epoch, best_miou = epoch, report.miou
                self._save()
            logger.info(f"Epoch {epoch}: train_loss={train_loss:.6f} val_miou={report.miou:.4f} val_dice={report.dice:.4f}")

        return TrainResult(
            best_epoch=best_epoch,
            best_miou=max(best_miou, 0.0),
            history=pd.DataFrame(rows, columns=LOG_COLUMNS),
            reports=reports,
            checkpoint_path=self.checkpoint_path,
        )

    def _write_log(self, rows: List[Dict[str, float]]) -> None:
        if self.log_path is not None:
            pd.DataFrame(rows, columns=LOG_COLUMNS).to_csv(self.log_path, index=False)


def train(
    model: SSMRadNet,
    train_records: Sequence[Record],
    train_config: TrainConfig,
    val_records: Optional[Sequence[Record]] = None,
    run_dir: Optional[Union[str, Path]] = None
) -> TrainResult:
    """Functional entry point around ``Trainer.fit``."""
    return Trainer(model, train_config, run_dir).fit(train_records, val_records)


def read_log(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path)
