"""
Stream Session.

Drives SSMRadNet one complex sample vector at a time. The session owns
every piece of mutable state (sample SSM, chirp pool, chirp SSM, U rows),
tracks the tick counter and applies the frame-boundary state policy.
"""

import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np

from engine import no_grad
from model.decoder import BevMaps, decoder_peak_floats
from model.network import ChirpCarry, SSMRadNet
from radar.scene import AdcFrame
from utils.errors import ContractError

logger = logging.getLogger(__name__)

Policy = Literal["reset_per_frame", "retain_across_frames"]
RESET_PER_FRAME: Policy = "reset_per_frame"
RETAIN_ACROSS_FRAMES: Policy = "retain_across_frames"

EventKind = Literal["none", "chirp_token", "frame_output"]


def tick_position(tick: int, s_per_chirp: int) -> Tuple[int, int]:
    """
    1-based (chirp, sample) of a 1-based tick within a frame.

    c = ceil(t / S), s = t - (c - 1)·S
    """
    if tick < 1:
        raise ValueError(f"tick must be >= 1, got {tick}")
    chirp = math.ceil(tick / s_per_chirp)
    return chirp, tick - (chirp - 1) * s_per_chirp


@dataclass
class StreamEvent:
    """Result of one ``ingest`` call."""

    kind: EventKind
    chirp: int
    sample: int
    token: Optional[np.ndarray] = None
    maps: Optional[BevMaps] = None


@dataclass
class MemoryReport:
    resident_floats: int
    peak_floats: int


class StreamSession:
    """
    Sample-by-sample inference over one read-only SSMRadNet.

    One session per thread; several sessions may share a model.
    """

    def __init__(self, model: SSMRadNet, policy: Policy = RESET_PER_FRAME):
        if policy not in (RESET_PER_FRAME, RETAIN_ACROSS_FRAMES):
            raise ContractError(f"Unknown state policy: {policy}")
        self.model = model
        self.config = model.config
        self.policy: Policy = policy
        self.tick = 0
        self.emitted = 0
        self.sample_state = model.sample_ssm.new_state()
        self.pool = model.new_pool()
        self.chirp_state = model.new_chirp_state()

    @property
    def position(self) -> Tuple[int, int]:
        """(chirp, sample) of the last ingested tick; (0, 0) between frames."""
        if self.tick == 0:
            return 0, 0
        return tick_position(self.tick, self.config.s_per_chirp)

    @property
    def mid_frame(self) -> bool:
        return self.tick != 0

    def set_policy(self, policy: Policy) -> None:
        """
        Change the frame-boundary policy. Switching to reset clears the
        carried chirp state.

        Raises:
            ContractError: Called mid-frame or with an unknown policy
        """
        if policy not in (RESET_PER_FRAME, RETAIN_ACROSS_FRAMES):
            raise ContractError(f"Unknown state policy: {policy}")
        if self.mid_frame:
            raise ContractError(f"set_policy called mid-frame at tick {self.tick}")
        logger.debug(f"Policy {self.policy} -> {policy}")
        self.policy = policy
        if policy == RESET_PER_FRAME:
            # the next frame starts from zero state
            self.chirp_state.ssm.reset()

    def reset(self) -> None:
        """Drop all state and return to the start of a frame."""
        self.tick = 0
        self.sample_state.reset()
        self.pool.reset()
        self.chirp_state.ssm.reset()
        self.chirp_state.rows = 0

    def carry(self) -> ChirpCarry:
        """Current chirp-SSM state in the batch-path carry layout."""
        return self.chirp_state.carry()

    def ingest(self, x: np.ndarray) -> StreamEvent:
        """
        Advance one tick.

        Args:
            x: Complex sample vector of length n_rx

        Returns:
            StreamEvent: none, chirp_token at s=S, frame_output at (c=C, s=S)

        Raises:
            ContractError: Vector length differs from n_rx
        """
        x = np.asarray(x)
        if x.shape != (self.config.n_rx,):
            raise ContractError(f"ingest expects a vector of length {self.config.n_rx}, got shape {x.shape}")

        with no_grad():
            y = self.model.sample_step(x, self.sample_state)
            self.model.accumulate(self.pool, y)
            self.tick += 1
            chirp, sample = tick_position(self.tick, self.config.s_per_chirp)
            if sample < self.config.s_per_chirp:
                return StreamEvent(kind="none", chirp=chirp, sample=sample)

            token = self.model.summarize_chirp(self.pool)
            self.pool.reset()
            self.sample_state.reset()
            self.model.chirp_ssm_step(token, self.chirp_state)
            if chirp < self.config.chirps_per_frame:
                return StreamEvent(kind="chirp_token", chirp=chirp, sample=sample, token=token.data[0].copy())

            maps = self.model.decode_rows(self.chirp_state)
        self._end_frame()
        return StreamEvent(kind="frame_output", chirp=chirp, sample=sample, token=token.data[0].copy(), maps=maps)

    def _end_frame(self) -> None:
        self.tick = 0
        self.chirp_state.rows = 0
        if self.policy == RESET_PER_FRAME:
            self.chirp_state.ssm.reset()
        self.emitted += 1
        logger.debug(f"Frame {self.emitted} emitted (policy={self.policy})")

    def ingest_frame(self, frame: AdcFrame) -> BevMaps:
        """Replay a whole frame tick by tick and return its maps."""
        if frame.samples.shape != self.config.dims:
            raise ContractError(f"Frame dims {frame.samples.shape} do not match config {self.config.dims}")
        if self.mid_frame:
            raise ContractError(f"ingest_frame called mid-frame at tick {self.tick}")
        event = None
        for c in range(self.config.chirps_per_frame):
            for s in range(self.config.s_per_chirp):
                event = self.ingest(frame.samples[c, s])
        return event.maps

    def peek(self) -> BevMaps:
        """
        Decode from the chirp outputs accumulated so far without ending the frame.

        Raises:
            ContractError: No chirp completed yet in this frame
        """
        rows = self.chirp_state.rows
        if rows == 0:
            raise ContractError("peek needs at least one completed chirp in the current frame")
        with no_grad():
            return self.model.decode_rows(self.chirp_state, rows=rows, partial=True)

    def memory_report(self) -> MemoryReport:
        """Live model-state scalars, parameters excluded."""
        resident = self.sample_state.floats() + self.pool.floats() + self.chirp_state.floats()
        n = self.config.n_rx
        d = self.config.d_state
        t = self.config.token_width
        dc = self.config.chirp_d_state
        # one tick (embed, conv, projections, state update) or one chirp token step
        tick = 6 * n + 5 * d + 3 * n * d + n
        token = 3 * t + 5 * dc + 3 * t * dc + t
        peak = resident + max(tick, token, decoder_peak_floats(self.config))
        return MemoryReport(resident_floats=resident, peak_floats=peak)
