"""
Map Export.

Binary masks as 8-bit PGM (P5) images and probability maps as raw
little-endian f32 with a small ADCC-style header:

    "BEVF" | version u32 = 1 | rank u32 | dims u32[rank] | f32 data
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from utils.errors import FormatError

logger = logging.getLogger(__name__)

MAP_MAGIC = b"BEVF"
MAP_VERSION = 1


def write_pgm(mask: np.ndarray, path: Union[str, Path]) -> None:
    """Write a binary (or 0..1) mask as an 8-bit P5 PGM, foreground = 255."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"PGM export needs a 2-D mask, got shape {mask.shape}")
    pixels = np.where(mask.astype(bool), 255, 0).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PPM")


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    with Image.open(path) as image:
        return np.asarray(image.convert("L"))


def write_prob_map(array: np.ndarray, path: Union[str, Path]) -> None:
    array = np.asarray(array, dtype="<f4")
    header = MAP_MAGIC + struct.pack(f"<II{array.ndim}I", MAP_VERSION, array.ndim, *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def read_prob_map(path: Union[str, Path]) -> np.ndarray:
    """
    Read a map written by ``write_prob_map``.

    Raises:
        FormatError: Bad magic, version or length
    """
    data = Path(path).read_bytes()
    if data[:4] != MAP_MAGIC:
        raise FormatError(f"Bad magic {data[:4]!r}, expected {MAP_MAGIC!r}", 0)
    if len(data) < 12:
        raise FormatError(f"Truncated header: expected 12 bytes, got {len(data)}", 4)
    version, rank = struct.unpack_from("<II", data, 4)
    if version != MAP_VERSION:
        raise FormatError(f"Unsupported map version {version}", 4)
    offset = 12 + 4 * rank
    if len(data) < offset:
        raise FormatError(f"Truncated dims: expected {offset} bytes, got {len(data)}", 12)
    dims = struct.unpack_from(f"<{rank}I", data, 12)
    expected = offset + 4 * int(np.prod(dims))
    if len(data) != expected:
        raise FormatError(f"Map payload: expected {expected} bytes, got {len(data)}", offset)
    return np.frombuffer(data, dtype="<f4", offset=offset).reshape(dims).copy()
