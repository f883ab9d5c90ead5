"""
Selective SSM Block.

Grouped causal conv -> modulation projection -> decay -> recurrent state
update -> per-group readout. ``sequence`` runs a whole sequence with the
scan primitive, ``step`` advances a streaming state by one token.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from engine import Tensor, scan
from .layers import (
    ConvFifo, causal_conv_sequence, causal_conv_step, compute_decay, decay_lanes,
    emit_output, input_term, project_modulations, update_state,
)
from .params import Parameters

logger = logging.getLogger(__name__)


@dataclass
class SsmState:
    """Streaming state of one SSM block: per-group hidden state and conv FIFO."""

    h: np.ndarray
    fifo: ConvFifo

    @classmethod
    def zeros(cls, width: int, d_state: int, d_conv: int, dtype=np.float64) -> "SsmState":
        return cls(h=np.zeros((1, width, d_state), dtype=dtype), fifo=ConvFifo(d_conv - 1, width, dtype))

    def reset(self) -> None:
        self.h[...] = 0.0
        self.fifo.reset()

    def floats(self) -> int:
        return int(self.h.size) + self.fifo.floats()


@dataclass
class SequenceResult:
    """Outputs of a full-sequence run plus the carry needed to continue it."""

    y: Tensor
    last_h: Tensor
    history: Tensor


class SsmBlock:
    """One selective SSM over ``width`` groups, bound to a parameter prefix."""

    def __init__(self, params: Parameters, prefix: str):
        self.prefix = prefix
        self.conv_w = params[f"{prefix}.conv_w"]
        self.conv_b = params[f"{prefix}.conv_b"]
        self.w_p = params[f"{prefix}.w_p"]
        self.a_log = params[f"{prefix}.a_log"]
        self.dt_bias = params[f"{prefix}.dt_bias"]
        self.d_skip = params[f"{prefix}.d_skip"]

    @property
    def width(self) -> int:
        return self.conv_w.shape[0]

    @property
    def d_conv(self) -> int:
        return self.conv_w.shape[1]

    @property
    def d_state(self) -> int:
        return self.a_log.shape[0]

    def new_state(self) -> SsmState:
        return SsmState.zeros(self.width, self.d_state, self.d_conv, self.conv_w.dtype)

    def sequence(
        self,
        x: Tensor,
        h0: Optional[Tensor] = None,
        history: Optional[Tensor] = None
    ) -> SequenceResult:
        """
        Run the block over axis -2 of ``x`` (..., L, width).

        Args:
            x: Token sequence
            h0: Initial hidden state (..., width, d_state); zeros when omitted
            history: Preceding conv tokens (..., d_conv-1, width), oldest first

        Returns:
            SequenceResult with y (..., L, width)
        """
        x_conv, tail = causal_conv_sequence(x, self.conv_w, self.conv_b, history)
        dt, b_mod, c_mod = project_modulations(x_conv, self.w_p, self.dt_bias)
        decay = compute_decay(dt, self.a_log)
        states = scan(decay_lanes(decay), input_term(dt, b_mod, x_conv), h0=h0, axis=-3)
        y = emit_output(states, c_mod, x_conv, self.d_skip)
        return SequenceResult(y=y, last_h=states[..., -1, :, :], history=tail)

    def step(self, x: Tensor, state: SsmState) -> Tensor:
        """
        Advance ``state`` by one token.

        Args:
            x: Token of shape (1, width)
            state: Mutable streaming state

        Returns:
            Per-group output (1, width)
        """
        x_conv = causal_conv_step(x, state.fifo, self.conv_w, self.conv_b)
        dt, b_mod, c_mod = project_modulations(x_conv, self.w_p, self.dt_bias)
        decay = compute_decay(dt, self.a_log)
        h = update_state(Tensor(state.h), decay, dt, b_mod, x_conv)
        state.h[...] = h.data
        return emit_output(h, c_mod, x_conv, self.d_skip)
