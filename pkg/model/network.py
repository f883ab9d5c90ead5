"""
SSMRadNet.

Raw complex ADC samples -> per-sample embedding -> intra-chirp SSM ->
chirp token -> inter-chirp SSM -> BEV decoder.

The batch forward vectorises every non-recurrent stage over frames, chirps
and samples and runs the recurrences with the scan primitive. The streaming
helpers (``accumulate``, ``summarize_chirp``, ``chirp_ssm_step``) advance the
same computation one tick at a time and are what ``streaming.StreamSession``
drives.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from engine import Tensor, concat, getitem
from radar.scene import AdcFrame
from utils.errors import ConfigError, ContractError
from .config import ModelConfig
from .decoder import BevMaps, decode_bev
from .layers import (
    ConvFifo, average_pool, causal_conv_sequence, causal_conv_step, embed_sample,
    final_state, mlp, split_complex,
)
from .params import Parameters
from .ssm_block import SsmBlock, SsmState

logger = logging.getLogger(__name__)

# max elements of one (chirps, S, n_rx, d_state) state slab in the batch path
STATE_CHUNK_ELEMENTS = 1 << 22


@dataclass
class ChirpCarry:
    """Chirp-SSM state handed from one frame to the next (retain policy)."""

    h: np.ndarray        # (B, token_width, d_state_chirp)
    history: np.ndarray  # (B, d_conv-1, token_width), oldest first


@dataclass
class ChirpPool:
    """Running summary of the per-step sample-SSM outputs within one chirp."""

    total: np.ndarray
    last: np.ndarray
    fifo: Optional[ConvFifo]
    count: int = 0

    def reset(self) -> None:
        self.total[...] = 0.0
        self.last[...] = 0.0
        self.count = 0
        if self.fifo is not None:
            self.fifo.reset()

    def floats(self) -> int:
        return int(self.total.size + self.last.size + (self.fifo.floats() if self.fifo else 0))


@dataclass
class ChirpState:
    """Chirp-SSM streaming state plus the U rows of the current frame."""

    ssm: SsmState
    u_rows: np.ndarray
    rows: int = 0

    def floats(self) -> int:
        return self.ssm.floats() + int(self.u_rows.size)

    def carry(self) -> ChirpCarry:
        return ChirpCarry(h=self.ssm.h.copy(), history=self.ssm.fifo.chronological())


class SSMRadNet:
    """
    The network bound to one parameter set.

    Parameters are only read during forward passes, so one instance can be
    shared by several threads as long as each uses its own streaming state.
    """

    def __init__(self, config: ModelConfig, params: Optional[Parameters] = None):
        self.config = config
        self.params = params if params is not None else Parameters.initialize(config)
        self.sample_ssm = SsmBlock(self.params, "sample_ssm")
        self.chirp_ssm = SsmBlock(self.params, "chirp_ssm")

    @property
    def dtype(self) -> np.dtype:
        return self.config.dtype

    # --- shared stages ---
    def embed(self, x: Tensor) -> Tensor:
        p = self.params
        return embed_sample(x, p["embed.w1"], p["embed.b1"], p["embed.w2"], p["embed.b2"])

    def expand(self, pooled: Tensor) -> Tensor:
        p = self.params
        return mlp(pooled, p["expand.w1"], p["expand.b1"], p["expand.w2"], p["expand.b2"])

    def aggregate(self, y: Tensor) -> Tensor:
        """Collapse per-step outputs (..., S, n_rx) to one vector per chirp."""
        mode = self.config.chirp_aggregation
        if mode == "final_state":
            return final_state(y)
        if mode == "conv1d":
            y, _ = causal_conv_sequence(y, self.params["aggregate.conv_w"], self.params["aggregate.conv_b"])
        return average_pool(y)

    def chirp_vectors(self, samples: np.ndarray) -> Tensor:
        """
        Pooled sample-SSM output of every chirp.

        Args:
            samples: Complex ADC samples (B, C, S, n_rx)

        Returns:
            (B, C, n_rx)
        """
        batch, chirps, s_per_chirp, n_rx = samples.shape
        per_chirp = max(1, s_per_chirp * n_rx * self.sample_ssm.d_state * batch)
        chunk = max(1, STATE_CHUNK_ELEMENTS // per_chirp)
        pooled = []
        for start in range(0, chirps, chunk):
            x = split_complex(samples[:, start:start + chunk], self.dtype)
            y = self.sample_ssm.sequence(self.embed(x)).y
            pooled.append(self.aggregate(y))
        return pooled[0] if len(pooled) == 1 else concat(pooled, axis=1)

    # --- batch path ---
    def check_dims(self, shape: Tuple[int, ...]) -> None:
        expected = self.config.dims
        if tuple(shape[-3:]) != expected:
            raise ConfigError(f"Frame dims {tuple(shape[-3:])} do not match config (C, S, n_rx) = {expected}")

    def forward_batch(
        self,
        samples: np.ndarray,
        carry: Optional[ChirpCarry] = None,
        return_features: bool = False
    ) -> Tuple[BevMaps, ChirpCarry]:
        """
        Batched forward pass.

        Args:
            samples: Complex ADC cubes (B, C, S, n_rx)
            carry: Chirp-SSM state from the previous frame, None to start from zeros
            return_features: Attach pooled vectors, chirp tokens and U to the maps

        Returns:
            (batched BevMaps, chirp-SSM carry after the last chirp)
        """
        samples = np.asarray(samples)
        if samples.ndim != 4:
            raise ConfigError(f"Expected a (B, C, S, n_rx) batch, got shape {samples.shape}")
        self.check_dims(samples.shape)

        pooled = self.chirp_vectors(samples)
        tokens = self.expand(pooled)
        h0 = history = None
        if carry is not None:
            h0 = Tensor(carry.h.astype(self.dtype))
            history = Tensor(carry.history.astype(self.dtype))
        chirp = self.chirp_ssm.sequence(tokens, h0=h0, history=history)

        rows = self.config.decoded_chirps
        u = chirp.y if rows == self.config.chirps_per_frame else getitem(chirp.y, (slice(None), slice(0, rows)))
        maps = decode_bev(u, self.params, self.config, expected_rows=rows)
        if return_features:
            maps.features = {"pooled": pooled.data, "tokens": tokens.data, "u": chirp.y.data}
        next_carry = ChirpCarry(h=chirp.last_h.data.copy(), history=chirp.history.data.copy())
        return maps, next_carry

    def forward_frame(
        self,
        frame: Union[AdcFrame, np.ndarray],
        carry: Optional[ChirpCarry] = None,
        return_features: bool = False
    ) -> BevMaps:
        """
        Reference forward pass over one frame.

        Raises:
            ConfigError: Frame dims do not match the config
        """
        samples = frame.samples if isinstance(frame, AdcFrame) else np.asarray(frame)
        if samples.ndim != 3:
            raise ConfigError(f"Expected a (C, S, n_rx) frame, got shape {samples.shape}")
        self.check_dims(samples.shape)
        maps, _ = self.forward_batch(samples[None], carry=carry, return_features=return_features)
        return maps.select(0)

    # --- streaming path ---
    def new_pool(self) -> ChirpPool:
        n = self.config.n_rx
        fifo = ConvFifo(2, n, self.dtype) if self.config.chirp_aggregation == "conv1d" else None
        return ChirpPool(total=np.zeros((1, n), self.dtype), last=np.zeros((1, n), self.dtype), fifo=fifo)

    def new_chirp_state(self) -> ChirpState:
        return ChirpState(
            ssm=self.chirp_ssm.new_state(),
            u_rows=np.zeros((self.config.chirps_per_frame, self.config.token_width), self.dtype),
        )

    def sample_step(self, x: np.ndarray, state: SsmState) -> Tensor:
        """Embed one complex sample vector and advance the sample SSM."""
        return self.sample_ssm.step(self.embed(split_complex(np.asarray(x).reshape(1, -1), self.dtype)), state)

    def accumulate(self, pool: ChirpPool, y: Tensor) -> None:
        if pool.fifo is not None:
            y = causal_conv_step(y, pool.fifo, self.params["aggregate.conv_w"], self.params["aggregate.conv_b"])
        pool.total += y.data
        pool.last[...] = y.data
        pool.count += 1

    def pool_vector(self, pool: ChirpPool) -> Tensor:
        """
        Aggregated vector of a complete chirp.

        Raises:
            ContractError: Fewer or more than S steps accumulated
        """
        if pool.count != self.config.s_per_chirp:
            raise ContractError(
                f"summarize_chirp called mid-chirp: {pool.count} of {self.config.s_per_chirp} steps accumulated"
            )
        if self.config.chirp_aggregation == "final_state":
            return Tensor(pool.last.copy())
        return Tensor(pool.total.copy()) / float(pool.count)

    def summarize_chirp(self, pool: ChirpPool) -> Tensor:
        """Chirp token y_ce of width token_width, shape (1, T)."""
        return self.expand(self.pool_vector(pool))

    def chirp_ssm_step(self, token: Tensor, state: ChirpState) -> Tensor:
        """
        Advance the chirp SSM by one token and append u_c to U.

        Raises:
            ContractError: U already holds C rows
        """
        if state.rows >= self.config.chirps_per_frame:
            raise ContractError(f"chirp_ssm_step: U already holds {state.rows} rows; flush the frame first")
        u = self.chirp_ssm.step(token, state.ssm)
        state.u_rows[state.rows] = u.data[0]
        state.rows += 1
        return u

    def decode_rows(self, state: ChirpState, rows: Optional[int] = None, partial: bool = False) -> BevMaps:
        """Decode the first ``rows`` accumulated U rows (all decoded chirps by default)."""
        rows = rows if rows is not None else self.config.decoded_chirps
        if rows > state.rows:
            raise ContractError(f"decode: {rows} rows requested, {state.rows} accumulated")
        u = Tensor(state.u_rows[:rows].copy())
        return decode_bev(u, self.params, self.config, expected_rows=None if partial else self.config.decoded_chirps)


def forward_frame(frame: Union[AdcFrame, np.ndarray], params: Parameters, config: ModelConfig) -> BevMaps:
    """Functional form of ``SSMRadNet(config, params).forward_frame(frame)``."""
    return SSMRadNet(config, params).forward_frame(frame)
