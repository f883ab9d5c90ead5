"""
Training Configuration.
"""

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from utils.errors import ConfigError


class TrainConfig(BaseModel):
    """Optimizer and loop settings; defaults follow the RADIal recipe."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    epochs: int = Field(200, ge=0)
    batch_size: int = Field(8, ge=1)
    lr: float = Field(1e-4, ge=0.0)
    weight_decay: float = Field(5e-6, ge=0.0)
    seg_loss: Literal["jaccard", "bce"] = "jaccard"
    det_loss: Literal["focal_smooth_l1", "none"] = "focal_smooth_l1"
    det_weight: float = Field(1.0, ge=0.0)
    seed: int = Field(0, ge=0)
    eval_every: int = Field(1, ge=1)
    score_thresh: float = Field(0.5, gt=0.0, lt=1.0)
    dist_thresh: float = Field(2.0, gt=0.0)

    @classmethod
    def radial(cls, **overrides: Any) -> "TrainConfig":
        return build_train_config({"epochs": 200, "seg_loss": "jaccard", "det_loss": "focal_smooth_l1", **overrides})

    @classmethod
    def radical(cls, **overrides: Any) -> "TrainConfig":
        return build_train_config({"epochs": 300, "seg_loss": "bce", "det_loss": "none", **overrides})

    def replace(self, **changes: Any) -> "TrainConfig":
        return build_train_config({**self.model_dump(), **changes})


def build_train_config(values: dict) -> TrainConfig:
    try:
        return TrainConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid train config: {e}") from e
