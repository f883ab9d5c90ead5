"""
BEV Decoder.

Chirp-axis conv1d -> mean over chirps -> h0×w0 projection -> two
(2× upsample, 3×3 conv, SiLU) stages -> 1×1 segmentation / detection heads.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from engine import Tensor, concat, matmul, mean, pad, repeat, reshape, sigmoid, silu, stack, transpose
from utils.errors import ContractError
from .config import ModelConfig
from .layers import linear
from .params import Parameters

logger = logging.getLogger(__name__)


@dataclass
class BevMaps:
    """
    Decoder outputs on the (4·h0)×(4·w0) grid.

    segmentation: (..., H, W) probabilities; detection: (..., H, W, 3) with
    sigmoid objectness in channel 0 and raw range/azimuth offsets in 1 and 2.
    ``features`` holds intermediate maps when requested by the caller.
    """

    segmentation: Optional[Tensor] = None
    detection: Optional[Tensor] = None
    features: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def grid(self) -> Tuple[int, int]:
        if self.segmentation is not None:
            return tuple(self.segmentation.shape[-2:])
        return tuple(self.detection.shape[-3:-1])

    def seg_array(self) -> Optional[np.ndarray]:
        return None if self.segmentation is None else self.segmentation.data

    def det_array(self) -> Optional[np.ndarray]:
        return None if self.detection is None else self.detection.data

    def select(self, index: int) -> "BevMaps":
        """Maps of one frame from a batched result."""
        return BevMaps(
            segmentation=None if self.segmentation is None else self.segmentation[index],
            detection=None if self.detection is None else self.detection[index],
            features={k: v[index] for k, v in self.features.items()},
        )


def decoder_peak_floats(config: ModelConfig, rows: Optional[int] = None) -> int:
    """Largest input+output activation pair of any decoder stage, in scalars."""
    rows = rows or config.decoded_chirps
    cells = config.h0 * config.w0
    c = config.c_dec
    head_out = (1 if "segmentation" in config.heads else 0) + (3 if "detection" in config.heads else 0)
    stages = [
        rows * config.token_width + rows * cells,
        rows * cells + cells,
        cells + 4 * cells,
        4 * cells + c * 4 * cells,
        c * 4 * cells + c * 16 * cells,
        2 * c * 16 * cells,
        c * 16 * cells + head_out * 16 * cells,
    ]
    return max(stages)


def bilinear_matrix(size: int, dtype=np.float64) -> np.ndarray:
    """(2·size, size) interpolation matrix, half-pixel centres, edge-clamped."""
    out = np.zeros((2 * size, size), dtype=dtype)
    for i in range(2 * size):
        src = min(max((i + 0.5) / 2.0 - 0.5, 0.0), size - 1.0)
        lo = int(np.floor(src))
        hi = min(lo + 1, size - 1)
        frac = src - lo
        out[i, lo] += 1.0 - frac
        out[i, hi] += frac
    return out


def upsample2x(x: Tensor, mode: str) -> Tensor:
    """2× spatial upsampling of (..., H, W)."""
    if mode == "nearest":
        return repeat(repeat(x, 2, axis=-2), 2, axis=-1)
    rows = Tensor(bilinear_matrix(x.shape[-2], x.dtype))
    cols = Tensor(bilinear_matrix(x.shape[-1], x.dtype).T.copy())
    return matmul(matmul(rows, x), cols)


def conv2d_same(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """
    3×3 convolution with zero "same" padding via im2col.

    Args:
        x: (B, C_in, H, W)
        weight: (C_out, C_in, 3, 3)
        bias: (C_out,)

    Returns:
        (B, C_out, H, W)
    """
    batch, c_in, height, width = x.shape
    c_out = weight.shape[0]
    padded = pad(x, [(0, 0), (0, 0), (1, 1), (1, 1)])
    patches = stack(
        [padded[:, :, di:di + height, dj:dj + width] for di in range(3) for dj in range(3)],
        axis=2,
    )
    cols = transpose(reshape(patches, (batch, c_in * 9, height * width)), (0, 2, 1))
    out = linear(cols, reshape(weight, (c_out, c_in * 9)), bias)
    return reshape(transpose(out, (0, 2, 1)), (batch, c_out, height, width))


def chirp_conv1d(u: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """
    Width-3 conv along the chirp axis with zero "same" padding.

    Args:
        u: (B, rows, T)
        weight: (cells, T, 3)
        bias: (cells,)

    Returns:
        (B, rows, cells)
    """
    rows, width = u.shape[-2], u.shape[-1]
    padded = pad(u, [(0, 0), (1, 1), (0, 0)])
    patches = concat([padded[:, j:j + rows, :] for j in range(3)], axis=-1)
    kernel = reshape(transpose(weight, (0, 2, 1)), (weight.shape[0], 3 * width))
    return linear(patches, kernel, bias)


def decode_bev(
    u: Tensor,
    params: Parameters,
    config: ModelConfig,
    expected_rows: Optional[int] = None
) -> BevMaps:
    """
    Decode chirp-SSM outputs into BEV maps.

    Args:
        u: Chirp outputs U, (rows, T) or batched (B, rows, T)
        params: Model parameters
        config: Model configuration
        expected_rows: Required row count; None accepts any non-zero count

    Returns:
        BevMaps, batched iff ``u`` was batched

    Raises:
        ContractError: Row count differs from ``expected_rows``
    """
    batched = u.ndim == 3
    if not batched:
        u = reshape(u, (1,) + u.shape)
    rows = u.shape[1]
    if rows == 0 or (expected_rows is not None and rows != expected_rows):
        raise ContractError(f"decode_bev: U has {rows} rows, expected {expected_rows}")
    if u.shape[2] != config.token_width:
        raise ContractError(f"decode_bev: U width {u.shape[2]} != token width {config.token_width}")

    batch = u.shape[0]
    f1 = chirp_conv1d(u, params["decoder.conv1d_w"], params["decoder.conv1d_b"])
    grid = reshape(mean(f1, axis=1), (batch, 1, config.h0, config.w0))

    z = silu(conv2d_same(upsample2x(grid, config.upsample),
                         params["decoder.conv2d_1_w"], params["decoder.conv2d_1_b"]))
    z = silu(conv2d_same(upsample2x(z, config.upsample),
                         params["decoder.conv2d_2_w"], params["decoder.conv2d_2_b"]))
    features = transpose(z, (0, 2, 3, 1))

    maps = BevMaps()
    if "segmentation" in config.heads:
        logits = linear(features, params["heads.seg_w"], params["heads.seg_b"])
        maps.segmentation = sigmoid(logits[..., 0])
    if "detection" in config.heads:
        raw = linear(features, params["heads.det_w"], params["heads.det_b"])
        maps.detection = concat([sigmoid(raw[..., 0:1]), raw[..., 1:]], axis=-1)

    if not batched:
        maps.segmentation = None if maps.segmentation is None else maps.segmentation[0]
        maps.detection = None if maps.detection is None else maps.detection[0]
    return maps
