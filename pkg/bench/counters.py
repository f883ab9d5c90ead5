"""
Analytic Counters.

Exact parameter and multiply-accumulate counts derived from a ModelConfig.

MAC convention: one per scalar multiply in matmuls, convolutions and
elementwise SSM products; activations, additions, pooling and nearest
upsampling count zero. The closed forms below mirror the forward pass
stage by stage, so an instrumented forward (engine.mac_counter) reproduces
them exactly.
"""

from dataclasses import dataclass
from typing import Dict

import numpy as np

from model.config import ModelConfig
from model.params import parameter_shapes

STAGES = ("embed", "sample_ssm", "chirp_ssm", "decoder")


@dataclass(frozen=True)
class MacCounts:
    """Per-frame MACs by stage."""

    embed: int
    sample_ssm: int
    chirp_ssm: int
    decoder: int

    @property
    def total(self) -> int:
        return self.embed + self.sample_ssm + self.chirp_ssm + self.decoder

    @property
    def sample_path(self) -> int:
        """Stages that run once per fast-time sample."""
        return self.embed + self.sample_ssm

    def as_dict(self) -> Dict[str, int]:
        return {stage: getattr(self, stage) for stage in STAGES}


def count_params(config: ModelConfig) -> int:
    """Exact number of trainable scalars."""
    return int(sum(int(np.prod(shape)) for shape in parameter_shapes(config).values()))


def param_groups(config: ModelConfig) -> Dict[str, int]:
    """Parameter count per top-level group (embed, sample_ssm, expand, ...)."""
    groups: Dict[str, int] = {}
    for name, shape in parameter_shapes(config).items():
        group = name.split(".", 1)[0]
        groups[group] = groups.get(group, 0) + int(np.prod(shape))
    return groups


def ssm_macs_per_step(width: int, d_state: int, d_conv: int) -> int:
    """
    One SSM step over ``width`` groups.

    conv taps width·d_conv, projection 3·width·d_state, dt⊙A d_state,
    dt⊙B d_state, x̃ broadcast width·d_state, state decay width·d_state,
    readout width·d_state, skip width·d_state.
    """
    return width * d_conv + 7 * width * d_state + 2 * d_state


def count_macs(config: ModelConfig) -> MacCounts:
    """
    Closed-form MACs of one frame.

    embed and sample_ssm scale with C·S, chirp_ssm with C, the decoder with
    the number of decoded chirps only.
    """
    n = config.n_rx
    t = config.token_width
    ticks = config.chirps_per_frame * config.s_per_chirp

    embed = ticks * (2 * n * 2 * n + 2 * n * n)

    per_sample = ssm_macs_per_step(n, config.d_state, config.d_conv)
    if config.chirp_aggregation == "conv1d":
        per_sample += 3 * n
    sample_ssm = ticks * per_sample

    per_chirp = n * t + t * t + ssm_macs_per_step(t, config.chirp_d_state, config.d_conv)
    chirp_ssm = config.chirps_per_frame * per_chirp

    return MacCounts(embed=embed, sample_ssm=sample_ssm, chirp_ssm=chirp_ssm, decoder=decoder_macs(config))


def _upsample_macs(channels: int, height: int, width: int, mode: str) -> int:
    if mode == "nearest":
        return 0
    # rows (2h×h) then columns (w×2w) interpolation matmuls
    return channels * (2 * height * width * height + 2 * height * 2 * width * width)


def decoder_macs(config: ModelConfig) -> int:
    rows = config.decoded_chirps
    cells = config.h0 * config.w0
    c = config.c_dec
    h, w = config.h0, config.w0
    macs = rows * 3 * config.token_width * cells
    macs += _upsample_macs(1, h, w, config.upsample)
    macs += 4 * cells * 9 * c
    macs += _upsample_macs(c, 2 * h, 2 * w, config.upsample)
    macs += 16 * cells * 9 * c * c
    head_channels = (1 if "segmentation" in config.heads else 0) + (3 if "detection" in config.heads else 0)
    macs += 16 * cells * c * head_channels
    return macs
