"""
ADCC Dataset Files.

Little-endian container for simulated frames and their labels:

    "ADCC" | version u32 = 1 | frame_count u32
    per frame: C u32, S u32, N_Rx u32, h_out u32, w_out u32,
               C·S·N_Rx (re, im) f32 pairs in [c][s][rx] order,
               seg_mask h_out·w_out u8,
               det_targets h_out·w_out·3 f32
"""

import logging
import os
import struct
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, List, Tuple, Union

import numpy as np

from utils.errors import FormatError
from .labels import rasterize_labels
from .scene import AdcFrame, Labels, Scene
from .simulator import synthesize_frame

logger = logging.getLogger(__name__)

MAGIC = b"ADCC"
VERSION = 1
FILE_HEADER = struct.Struct("<4sII")
FRAME_HEADER = struct.Struct("<5I")
# refuse frames whose payload would exceed 16 GiB
MAX_FRAME_BYTES = 1 << 34

PathLike = Union[str, os.PathLike]
Record = Tuple[AdcFrame, Labels]


def frame_payload_bytes(dims: Tuple[int, int, int], grid: Tuple[int, int]) -> int:
    """Byte size of one frame record, header included."""
    C, S, N = dims
    h, w = grid
    return FRAME_HEADER.size + C * S * N * 8 + h * w + h * w * 3 * 4


def _write_record(handle: BinaryIO, frame: AdcFrame, labels: Labels) -> None:
    C, S, N = frame.dims
    h, w = labels.grid
    handle.write(FRAME_HEADER.pack(C, S, N, h, w))
    handle.write(frame.interleaved().astype("<f4").tobytes())
    handle.write(labels.seg_mask.astype(np.uint8).tobytes())
    handle.write(labels.det_targets.astype("<f4").tobytes())


def write_records(records: Iterable[Record], path: PathLike) -> int:
    """
    Write (frame, labels) pairs to an ADCC file.

    Args:
        records: Frames with their labels
        path: Destination file

    Returns:
        Number of frames written
    """
    records = list(records)
    path = Path(path)
    with open(path, "wb") as handle:
        handle.write(FILE_HEADER.pack(MAGIC, VERSION, len(records)))
        for frame, labels in records:
            _write_record(handle, frame, labels)
    logger.info(f"Wrote {len(records)} frames to {path}")
    return len(records)


def write_dataset(scenes: Iterable[Scene], path: PathLike, grid: Tuple[int, int] = (32, 32)) -> int:
    """
    Simulate and store every scene.

    Args:
        scenes: Scenes to synthesise
        path: Destination file
        grid: Label grid (h_out, w_out)

    Returns:
        Number of frames written
    """
    return write_records(((synthesize_frame(s), rasterize_labels(s, grid)) for s in scenes), path)


def _read_exact(handle: BinaryIO, size: int, offset: int, what: str) -> bytes:
    data = handle.read(size)
    if len(data) != size:
        raise FormatError(f"Truncated {what}: expected {size} bytes, got {len(data)}", offset)
    return data


def read_header(path: PathLike) -> Tuple[int, int]:
    """
    Validate the file header.

    Returns:
        (version, frame_count)
    """
    with open(path, "rb") as handle:
        return _read_file_header(handle)


def _read_file_header(handle: BinaryIO) -> Tuple[int, int]:
    magic, version, count = FILE_HEADER.unpack(_read_exact(handle, FILE_HEADER.size, 0, "file header"))
    if magic != MAGIC:
        raise FormatError(f"Bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"Unsupported ADCC version {version}", 4)
    return version, count


def read_dataset(path: PathLike) -> Iterator[Record]:
    """
    Iterate over the frames of an ADCC file.

    Args:
        path: Source file

    Yields:
        (AdcFrame, Labels) per frame; samples are complex64

    Raises:
        FormatError: Bad magic/version, zero or oversized dims, truncation
    """
    path = Path(path)
    file_size = path.stat().st_size
    with open(path, "rb") as handle:
        _, count = _read_file_header(handle)
        offset = FILE_HEADER.size
        for index in range(count):
            C, S, N, h, w = FRAME_HEADER.unpack(_read_exact(handle, FRAME_HEADER.size, offset, f"frame {index} header"))
            if min(C, S, N, h, w) == 0:
                raise FormatError(f"Frame {index} has a zero dimension (C={C}, S={S}, N_Rx={N}, h={h}, w={w})", offset)
            sample_bytes = C * S * N * 8
            label_bytes = h * w + h * w * 12
            if sample_bytes + label_bytes > MAX_FRAME_BYTES:
                raise FormatError(f"Frame {index} dims overflow the size limit ({C}x{S}x{N}, grid {h}x{w})", offset)
            offset += FRAME_HEADER.size
            remaining = file_size - offset
            if sample_bytes + label_bytes > remaining:
                raise FormatError(
                    f"Truncated frame {index}: expected {sample_bytes + label_bytes} bytes, got {remaining}", offset
                )

            raw = np.frombuffer(_read_exact(handle, sample_bytes, offset, "samples"), dtype="<f4")
            raw = raw.reshape(C, S, N, 2)
            samples = (raw[..., 0] + 1j * raw[..., 1]).astype(np.complex64)
            offset += sample_bytes

            seg = np.frombuffer(_read_exact(handle, h * w, offset, "seg_mask"), dtype=np.uint8).reshape(h, w).copy()
            offset += h * w
            det = np.frombuffer(_read_exact(handle, h * w * 12, offset, "det_targets"), dtype="<f4")
            det = det.reshape(h, w, 3).astype(np.float32)
            offset += h * w * 12

            yield AdcFrame(samples), Labels(seg_mask=seg, det_targets=det)


def load_dataset(path: PathLike) -> List[Record]:
    """Read every frame of an ADCC file into memory."""
    records = list(read_dataset(path))
    logger.info(f"Loaded {len(records)} frames from {path}")
    return records
