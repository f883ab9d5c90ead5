"""
Checkpoint Files.

"SSMC" little-endian container: magic, version u32, length-prefixed UTF-8
config blob (key=value lines), entry_count u32, then per entry
name_len u16 + name + rank u8 + dims u32[rank] + f32 data.
"""

import io
import logging
import struct
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from utils.errors import ConfigError, FormatError
from .config import ModelConfig
from .params import Parameters

logger = logging.getLogger(__name__)

MAGIC = b"SSMC"
VERSION = 1


@dataclass
class Checkpoint:
    """Named parameter arrays plus the ModelConfig that produced them."""

    config: ModelConfig
    tensors: "OrderedDict[str, np.ndarray]"

    @classmethod
    def from_parameters(cls, config: ModelConfig, params: Parameters) -> "Checkpoint":
        return cls(config=config, tensors=params.state_dict())

    def element_count(self) -> int:
        return int(sum(a.size for a in self.tensors.values()))

    def to_parameters(self, dtype=None) -> Parameters:
        """Fresh Parameters for ``config`` loaded with these arrays."""
        params = Parameters.initialize(self.config)
        if dtype is not None:
            params = params.astype(dtype)
        params.load_state_dict(self.tensors)
        return params


def _config_blob(config: ModelConfig) -> bytes:
    return "".join(f"{k}={v}\n" for k, v in config.to_kv().items()).encode("utf-8")


def save_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> int:
    """
    Serialize a checkpoint.

    Returns:
        Bytes written
    """
    buf = io.BytesIO()
    blob = _config_blob(checkpoint.config)
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(checkpoint.tensors)))
    for name, array in checkpoint.tensors.items():
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", array.ndim))
        buf.write(struct.pack(f"<{array.ndim}I", *array.shape))
        buf.write(np.ascontiguousarray(array, dtype="<f4").tobytes())
    data = buf.getvalue()
    Path(path).write_bytes(data)
    logger.info(f"Saved checkpoint {path} ({len(checkpoint.tensors)} tensors, {checkpoint.element_count()} scalars)")
    return len(data)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise FormatError(
                f"Truncated {what}: expected {size} bytes, got {len(self.data) - self.offset}", self.offset
            )
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_checkpoint_header(path: Union[str, Path]) -> Dict[str, object]:
    """Magic, version, config and per-entry names/shapes without loading data."""
    checkpoint = load_checkpoint(path)
    return {
        "magic": MAGIC.decode(),
        "version": VERSION,
        "config": checkpoint.config.to_kv(),
        "entries": [(name, tuple(a.shape)) for name, a in checkpoint.tensors.items()],
        "elements": checkpoint.element_count(),
    }


def load_checkpoint(path: Union[str, Path], expected: Optional[ModelConfig] = None) -> Checkpoint:
    """
    Read and validate an SSMC file.

    Args:
        path: Checkpoint path
        expected: Config the caller intends to run; structural keys must agree

    Raises:
        FormatError: Bad magic/version, truncation, trailing bytes
        ConfigError: Config blob invalid or incompatible with ``expected``
    """
    reader = _Reader(Path(path).read_bytes())
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"Bad magic {magic!r}, expected {MAGIC!r}", 0)
    version, blob_len = reader.unpack("<II", "header")
    if version != VERSION:
        raise FormatError(f"Unsupported checkpoint version {version}", 4)
    blob_offset = reader.offset
    try:
        lines = reader.take(blob_len, "config blob").decode("utf-8").splitlines()
    except UnicodeDecodeError as e:
        raise FormatError(f"Config blob is not UTF-8: {e}", blob_offset) from e
    values = {}
    for line in lines:
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"Malformed config line {line!r}", blob_offset)
        values[key.strip()] = value.strip()
    config = ModelConfig.from_kv(values)

    (count,) = reader.unpack("<I", "entry count")
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        (name_len,) = reader.unpack("<H", "entry name length")
        name = reader.take(name_len, "entry name").decode("utf-8")
        (rank,) = reader.unpack("<B", "entry rank")
        dims = reader.unpack(f"<{rank}I", "entry dims")
        size = int(np.prod(dims)) if rank else 1
        raw = reader.take(4 * size, f"data of {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    if reader.offset != len(reader.data):
        raise FormatError(
            f"Trailing data: expected {reader.offset} bytes, got {len(reader.data)}", reader.offset
        )

    if expected is not None:
        diff = expected.structural_diff(config)
        if diff:
            mine, theirs = expected.to_kv(), config.to_kv()
            details = ", ".join(f"{k}: run={mine[k]} checkpoint={theirs[k]}" for k in diff)
            raise ConfigError(f"Checkpoint config mismatch: {details}")
    logger.info(f"Loaded checkpoint {path} ({len(tensors)} tensors)")
    return Checkpoint(config=config, tensors=tensors)
