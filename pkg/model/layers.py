"""
Model Layers.

Per-operation building blocks of the selective SSM path. Every function
works on arbitrary leading axes, so the same code serves the vectorised
batch forward (leading axes = frames, chirps, samples) and the per-tick
streaming path (leading axis of length 1). Sharing the arithmetic keeps
both paths numerically identical.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from engine import (
    Tensor, clamp, concat, exp, getitem, matmul, mean, neg, pad, reshape, silu,
    softplus, transpose, tsum,
)


def split_complex(x: np.ndarray, dtype=np.float64) -> Tensor:
    """[Re(x); Im(x)] along the last axis."""
    x = np.asarray(x)
    return Tensor(np.concatenate([x.real, x.imag], axis=-1).astype(dtype))


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ Wᵀ + b with W stored (out, in)."""
    out = matmul(x, transpose(weight))
    return out + bias if bias is not None else out


def mlp(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """One hidden layer with SiLU."""
    return linear(silu(linear(x, w1, b1)), w2, b2)


def embed_sample(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """
    Per-sample embedding: 2·n_rx -> 2·n_rx (SiLU) -> n_rx.

    Args:
        x: Stacked real/imaginary parts, shape (..., 2·n_rx)

    Returns:
        Embedded token of shape (..., n_rx)
    """
    return mlp(x, w1, b1, w2, b2)


# ---------------------------------------------------------------------------
# grouped causal convolution
# ---------------------------------------------------------------------------

def conv_taps(taps: Sequence[Tensor], weight: Tensor, bias: Tensor) -> Tensor:
    """
    Σ_k w[:, k]·taps[k] + b, where taps[k] holds z_{s-k}.

    Args:
        taps: Newest-first list of exactly weight.shape[1] tokens
        weight: Per-group kernel, shape (groups, width)
        bias: Per-group bias, shape (groups,)
    """
    acc = taps[0] * weight[:, 0]
    for k in range(1, len(taps)):
        acc = acc + taps[k] * weight[:, k]
    return acc + bias


class ConvFifo:
    """
    Ring buffer of the last ``depth`` tokens of one sequence.

    Starts zero-filled, which realises the zero padding for s < d_conv.
    """

    def __init__(self, depth: int, width: int, dtype=np.float64, rows: int = 1):
        self.depth = depth
        self.buffer = np.zeros((depth, rows, width), dtype=dtype)
        self.head = 0

    def reset(self) -> None:
        self.buffer[...] = 0.0
        self.head = 0

    def newest_first(self) -> List[Tensor]:
        """Stored tokens ordered z_{s-1}, z_{s-2}, ..."""
        return [Tensor(self.buffer[(self.head - 1 - k) % self.depth]) for k in range(self.depth)]

    def chronological(self) -> np.ndarray:
        """Stored tokens oldest first, shape (rows, depth, width)."""
        order = [(self.head + k) % self.depth for k in range(self.depth)]
        return np.transpose(self.buffer[order], (1, 0, 2)).copy()

    def load(self, history: np.ndarray) -> None:
        """Replace contents with ``history`` given oldest first as (rows, depth, width)."""
        self.buffer[...] = np.transpose(history, (1, 0, 2))
        self.head = 0

    def push(self, token: np.ndarray) -> None:
        if self.depth == 0:
            return
        self.buffer[self.head] = token
        self.head = (self.head + 1) % self.depth

    def floats(self) -> int:
        return int(self.buffer.size)


def causal_conv_step(z: Tensor, fifo: ConvFifo, weight: Tensor, bias: Tensor) -> Tensor:
    """
    One tick of the grouped causal convolution; advances ``fifo`` by one.

    Args:
        z: Current token, shape (rows, groups)
        fifo: History of the current sequence
        weight: Kernel (groups, d_conv)
        bias: Bias (groups,)
    """
    out = conv_taps([z] + fifo.newest_first(), weight, bias)
    fifo.push(z.data)
    return out


def causal_conv_sequence(
    z: Tensor,
    weight: Tensor,
    bias: Tensor,
    history: Optional[Tensor] = None
) -> Tuple[Tensor, Tensor]:
    """
    Grouped causal convolution over axis -2 of ``z`` (..., L, groups).

    Args:
        z: Token sequence
        weight: Kernel (groups, d_conv)
        bias: Bias (groups,)
        history: Tokens preceding the sequence, oldest first, shape
            (..., d_conv-1, groups); zeros when omitted

    Returns:
        (convolved sequence, the last d_conv-1 tokens of history+z)
    """
    depth = weight.shape[1] - 1
    length = z.shape[-2]
    if depth == 0:
        return conv_taps([z], weight, bias), z[..., :0, :]
    if history is None:
        widths = [(0, 0)] * z.ndim
        widths[-2] = (depth, 0)
        full = pad(z, widths)
    else:
        full = concat([history, z], axis=-2)
    taps = [full[..., depth - k:depth - k + length, :] for k in range(depth + 1)]
    return conv_taps(taps, weight, bias), full[..., full.shape[-2] - depth:, :]


# ---------------------------------------------------------------------------
# selective state space update
# ---------------------------------------------------------------------------

def project_modulations(x_conv: Tensor, w_p: Tensor, dt_bias: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Split W_p·x_conv into the dt, B and C streams.

    Returns:
        (dt, b_mod, c_mod), each (..., d_state); dt = softplus(raw + dt_bias)
    """
    d_state = w_p.shape[0] // 3
    p = matmul(x_conv, transpose(w_p))
    raw_dt = p[..., :d_state]
    b_mod = p[..., d_state:2 * d_state]
    c_mod = p[..., 2 * d_state:]
    return softplus(raw_dt + dt_bias), b_mod, c_mod


def compute_decay(dt: Tensor, a_log: Tensor) -> Tensor:
    """
    exp(dt ⊙ A) with A = -exp(A_log), strictly inside (0, 1).

    A tiny dt rounds the exponential to exactly 1.0 (in float32 already at
    dt·|A| < 3e-8); such values are pinned to the largest float below one.
    """
    decay = exp(dt * neg(exp(a_log)))
    kind = decay.data.dtype.type
    below_one = float(np.nextafter(kind(1), kind(0)))
    return clamp(decay, float(np.finfo(kind).tiny), below_one)


def _lanes(x: Tensor) -> Tensor:
    # (..., d) -> (..., 1, d)
    return reshape(x, x.shape[:-1] + (1, x.shape[-1]))


def _groups(x: Tensor) -> Tensor:
    # (..., g) -> (..., g, 1)
    return reshape(x, x.shape + (1,))


def input_term(dt: Tensor, b_mod: Tensor, x_conv: Tensor) -> Tensor:
    """x̃ ⊙ (dt ⊙ B), with x̃ the group scalar broadcast over d_state lanes."""
    return _groups(x_conv) * _lanes(dt * b_mod)


def decay_lanes(decay: Tensor) -> Tensor:
    return _lanes(decay)


def update_state(h_prev: Tensor, decay: Tensor, dt: Tensor, b_mod: Tensor, x_conv: Tensor) -> Tensor:
    """
    h = h_prev ⊙ decay + x̃ ⊙ (dt ⊙ B).

    Args:
        h_prev: Per-group states (..., groups, d_state)
        decay: (..., d_state)
        dt: (..., d_state)
        b_mod: (..., d_state)
        x_conv: Convolved tokens (..., groups)
    """
    return h_prev * _lanes(decay) + input_term(dt, b_mod, x_conv)


def emit_output(h: Tensor, c_mod: Tensor, x_conv: Tensor, d_skip: Tensor) -> Tensor:
    """
    One scalar per group: ⟨h_g, C⟩ + ⟨D[:, g], x̃_g⟩.

    Args:
        h: (..., groups, d_state)
        c_mod: (..., d_state)
        x_conv: (..., groups)
        d_skip: Skip matrix stored (d_state, groups)
    """
    readout = tsum(h * _lanes(c_mod), axis=-1)
    skip = tsum(_groups(x_conv) * transpose(d_skip), axis=-1)
    return readout + skip


def average_pool(y: Tensor) -> Tensor:
    return mean(y, axis=-2)


def final_state(y: Tensor) -> Tensor:
    return getitem(y, (Ellipsis, -1, slice(None)))
