"""
Radar Scene Schemas.

Point targets, scenes, raw ADC frames and the ground-truth label grids
that accompany them.
"""

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils.errors import DimensionError

MAX_AZIMUTH_DEG = 60.0


def check_snr_db(snr_db: float) -> float:
    """Any real SNR, or +inf for noise-free frames; nan and -inf are rejected."""
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise ValueError(f"snr_db must be a number or +inf, got {snr_db}")
    return snr_db


class Target(BaseModel):
    """A point reflector in normalised range / azimuth / Doppler coordinates."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    range_norm: float = Field(..., ge=0.0, lt=1.0, description="Fraction of max unambiguous range")
    azimuth: float = Field(..., ge=-MAX_AZIMUTH_DEG, le=MAX_AZIMUTH_DEG, description="Degrees")
    doppler_norm: float = Field(0.0, gt=-0.5, lt=0.5, description="Normalised slow-time frequency")
    amplitude: float = Field(1.0, gt=0.0)

    @property
    def beat_frequency(self) -> float:
        """Fast-time normalised frequency μ."""
        return self.range_norm * 0.5

    @property
    def spatial_frequency(self) -> float:
        """Phase progression across receivers, cycles per element."""
        return 0.5 * math.sin(math.radians(self.azimuth))

    @model_validator(mode="after")
    def _no_aliasing(self) -> "Target":
        if self.beat_frequency >= 0.5:
            raise ValueError(f"Target aliases in fast time (mu={self.beat_frequency})")
        if abs(self.spatial_frequency) >= 0.5:
            raise ValueError(f"Target aliases across the array (azimuth={self.azimuth})")
        return self


class Scene(BaseModel):
    """A set of targets plus the acquisition settings for one frame."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    targets: List[Target] = Field(default_factory=list)
    snr_db: float = Field(20.0, description="Per-sample SNR; +inf disables noise")
    seed: int = Field(0, ge=0)
    dims: Tuple[int, int, int] = Field(..., description="(C, S, N_Rx)")

    @field_validator("snr_db")
    @classmethod
    def _finite_or_noiseless(cls, snr_db: float) -> float:
        return check_snr_db(snr_db)

    @field_validator("dims")
    @classmethod
    def _positive_dims(cls, dims: Tuple[int, int, int]) -> Tuple[int, int, int]:
        if any(d < 1 for d in dims):
            raise ValueError(f"Scene dims must all be >= 1, got {dims}")
        return dims

    @property
    def noise_free(self) -> bool:
        return math.isinf(self.snr_db) and self.snr_db > 0


@dataclass
class AdcFrame:
    """
    One radar frame of complex ADC samples indexed [c][s][rx].

    Attributes:
        samples: complex array of shape (C, S, N_Rx)
    """

    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 3:
            raise DimensionError(f"AdcFrame needs a (C, S, N_Rx) array, got shape {self.samples.shape}")
        if not np.iscomplexobj(self.samples):
            self.samples = self.samples.astype(np.complex128)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("AdcFrame samples must be finite")

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.samples.shape)

    def interleaved(self) -> np.ndarray:
        """Real view (C, S, N_Rx, 2) holding (re, im) pairs."""
        return np.stack([self.samples.real, self.samples.imag], axis=-1)

    def tick(self, t: int) -> np.ndarray:
        """Receiver vector at 1-based fast-time tick t."""
        C, S, _ = self.dims
        c = (t - 1) // S
        s = (t - 1) - c * S
        return self.samples[c, s]


@dataclass
class Labels:
    """
    Ground truth on an (h_out, w_out) range × azimuth grid.

    Attributes:
        seg_mask: uint8 (h, w), 1 = free space
        det_targets: float32 (h, w, 3): objectness, Δrange, Δazimuth
    """

    seg_mask: np.ndarray
    det_targets: np.ndarray

    @property
    def grid(self) -> Tuple[int, int]:
        return tuple(int(d) for d in self.seg_mask.shape)
