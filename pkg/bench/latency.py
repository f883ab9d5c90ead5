"""
Latency Harness.

Wall-clock timing of batch and streaming inference on the calling thread,
plus a separate multi-threaded throughput mode.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from engine import no_grad
from model.network import SSMRadNet
from radar.scene import AdcFrame
from streaming.session import StreamSession

logger = logging.getLogger(__name__)

Mode = Literal["batch", "streaming"]
DEFAULT_WARMUP = 10


@dataclass
class LatencyStats:
    mode: str
    frames: int
    p50_ms: float
    p95_ms: float
    mean_ms: float
    tick_p99_us: Optional[float] = None


def _run_batch(model: SSMRadNet, frame: AdcFrame) -> None:
    with no_grad():
        model.forward_frame(frame)


def measure_latency(
    model: SSMRadNet,
    frames: Sequence[AdcFrame],
    mode: Mode = "batch",
    warmup: int = DEFAULT_WARMUP
) -> LatencyStats:
    """
    Per-frame wall-clock latency.

    Args:
        model: Network to time
        frames: Timed frames (warm-up runs cycle over them first and are discarded)
        mode: batch (forward_frame) or streaming (tick-by-tick session)
        warmup: Untimed frames before measurement

    Returns:
        LatencyStats; streaming mode also reports the per-tick p99
    """
    if not frames:
        raise ValueError("measure_latency needs at least one frame")
    session = StreamSession(model) if mode == "streaming" else None

    def _one(frame: AdcFrame, ticks: Optional[list]) -> float:
        start = time.perf_counter()
        if session is None:
            _run_batch(model, frame)
        else:
            for c in range(frame.samples.shape[0]):
                for s in range(frame.samples.shape[1]):
                    t0 = time.perf_counter()
                    session.ingest(frame.samples[c, s])
                    if ticks is not None:
                        ticks.append(time.perf_counter() - t0)
        return time.perf_counter() - start

    for i in range(warmup):
        _one(frames[i % len(frames)], None)

    tick_times: list = []
    times = np.array([_one(frame, tick_times if session else None) for frame in frames]) * 1e3
    stats = LatencyStats(
        mode=mode,
        frames=len(frames),
        p50_ms=float(np.percentile(times, 50)),
        p95_ms=float(np.percentile(times, 95)),
        mean_ms=float(times.mean()),
        tick_p99_us=float(np.percentile(np.array(tick_times) * 1e6, 99)) if tick_times else None,
    )
    logger.info(f"Latency ({mode}, {len(frames)} frames): p50={stats.p50_ms:.3f}ms p95={stats.p95_ms:.3f}ms")
    return stats


def measure_throughput(model: SSMRadNet, frames: Sequence[AdcFrame], workers: int) -> float:
    """Frames per second with ``workers`` threads sharing the model."""
    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        list(pool.map(lambda f: _run_batch(model, f), frames))
    elapsed = time.perf_counter() - start
    fps = len(frames) / elapsed if elapsed > 0 else float("inf")
    logger.info(f"Throughput: {fps:.2f} frames/s on {workers} workers")
    return fps
