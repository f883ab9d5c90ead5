"""
Model Configuration.

Typed, fail-closed description of one SSMRadNet instance: radar cube
dimensions, SSM widths, ablation switches and decoder geometry.
"""

from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from utils.errors import ConfigError

Aggregation = Literal["final_state", "avg_pool", "conv1d"]
Head = Literal["segmentation", "detection"]

# keys that change parameter shapes or graph structure
STRUCTURAL_KEYS = (
    "n_rx", "d_conv", "d_state", "d_state_chirp", "chirp_aggregation",
    "slow_time_expand", "h0", "w0", "c_dec", "heads",
)


class ModelConfig(BaseModel):
    """SSMRadNet hyperparameters."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n_rx: int = Field(16, ge=1, description="Receiver channels N_Rx")
    s_per_chirp: int = Field(512, ge=1, description="Fast-time samples per chirp S")
    chirps_per_frame: int = Field(256, ge=1, description="Chirps per frame C")
    d_conv: int = Field(4, ge=1, description="Causal conv width")
    d_state: int = Field(32, ge=1, description="Sample-SSM hidden width")
    d_state_chirp: Optional[int] = Field(None, ge=1, description="Chirp-SSM hidden width (defaults to d_state)")
    chirp_aggregation: Aggregation = "avg_pool"
    slow_time_expand: bool = True
    h0: int = Field(16, ge=1)
    w0: int = Field(16, ge=1)
    c_dec: int = Field(16, ge=1)
    heads: List[Head] = Field(default_factory=lambda: ["segmentation", "detection"])
    upsample: Literal["nearest", "bilinear"] = "nearest"
    decode_chirps: Optional[int] = Field(None, ge=1, description="Decode from the first k chirps only")
    precision: Literal["float32", "float64"] = "float32"
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "ModelConfig":
        if self.h0 * self.w0 < 16:
            raise ValueError(f"h0*w0 must be >= 16, got {self.h0}x{self.w0}")
        if not self.heads:
            raise ValueError("At least one head is required")
        if len(set(self.heads)) != len(self.heads):
            raise ValueError(f"Duplicate heads: {self.heads}")
        if self.decode_chirps is not None and self.decode_chirps > self.chirps_per_frame:
            raise ValueError(f"decode_chirps={self.decode_chirps} exceeds chirps_per_frame={self.chirps_per_frame}")
        return self

    # --- derived ---
    @property
    def token_width(self) -> int:
        return 2 * self.n_rx if self.slow_time_expand else self.n_rx

    @property
    def chirp_d_state(self) -> int:
        return self.d_state_chirp or self.d_state

    @property
    def output_grid(self) -> Tuple[int, int]:
        return 4 * self.h0, 4 * self.w0

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.chirps_per_frame, self.s_per_chirp, self.n_rx

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.precision)

    @property
    def decoded_chirps(self) -> int:
        return self.decode_chirps or self.chirps_per_frame

    # --- presets ---
    @classmethod
    def radial(cls, **overrides: Any) -> "ModelConfig":
        """RADIal cube: (C, S, N_Rx) = (256, 512, 16)."""
        base = dict(n_rx=16, s_per_chirp=512, chirps_per_frame=256, d_state=32, slow_time_expand=True)
        base.update(overrides)
        return build_model_config(base)

    @classmethod
    def radical(cls, **overrides: Any) -> "ModelConfig":
        """RaDICaL cube: (C, S, N_Rx) = (64, 192, 8)."""
        base = dict(n_rx=8, s_per_chirp=192, chirps_per_frame=64, d_state=32, slow_time_expand=True)
        base.update(overrides)
        return build_model_config(base)

    def replace(self, **changes: Any) -> "ModelConfig":
        data = self.model_dump()
        data.update(changes)
        return build_model_config(data)

    # --- key=value form ---
    def to_kv(self) -> Dict[str, str]:
        """Flat string form used by checkpoints and config echoes."""
        out = {}
        for key, value in self.model_dump().items():
            if isinstance(value, list):
                out[key] = ",".join(value)
            elif isinstance(value, bool):
                out[key] = "true" if value else "false"
            elif value is None:
                out[key] = "none"
            else:
                out[key] = str(value)
        return out

    @classmethod
    def from_kv(cls, values: Dict[str, str]) -> "ModelConfig":
        return build_model_config(parse_model_values(values))

    def structural_diff(self, other: "ModelConfig") -> List[str]:
        """Keys that would make parameters of the two configs incompatible."""
        mine, theirs = self.model_dump(), other.model_dump()
        diff = [k for k in STRUCTURAL_KEYS if mine[k] != theirs[k]]
        if self.chirp_d_state != other.chirp_d_state and "d_state_chirp" not in diff:
            diff.append("d_state_chirp")
        return diff


def parse_model_values(values: Dict[str, str]) -> Dict[str, Any]:
    """Convert key=value strings into typed ModelConfig fields."""
    parsed: Dict[str, Any] = {}
    for key, raw in values.items():
        text = str(raw).strip()
        if key == "heads":
            parsed[key] = [h.strip() for h in text.split(",") if h.strip()]
        elif text.lower() == "none":
            parsed[key] = None
        elif text.lower() in ("true", "false"):
            parsed[key] = text.lower() == "true"
        else:
            parsed[key] = text
    return parsed


def build_model_config(values: Dict[str, Any]) -> ModelConfig:
    """
    Validate raw values into a ModelConfig.

    Raises:
        ConfigError: Unknown keys or invalid values
    """
    try:
        return ModelConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid model config: {e}") from e
