"""
Tensor Engine.

Dense numpy-backed arrays with reverse-mode gradient accumulation.

Every primitive records its inputs and a local-gradient closure on the
output tensor; ``backward`` orders the recorded graph topologically and
walks it once in reverse. The primitive set is closed: everything the
network, the losses and the optimizer need is composed from the functions
in this module.
"""

import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.errors import ContractError, DimensionError

logger = logging.getLogger(__name__)

# exp/sigmoid/softplus arguments are clamped to this magnitude
EXP_CLAMP = 30.0

_DEFAULT_DTYPE = np.float64

_local = threading.local()


def _grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


def _active_counter() -> Optional["MacCounter"]:
    return getattr(_local, "mac_counter", None)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording for the current thread."""
    previous = _grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


@dataclass
class MacCounter:
    """Multiply-accumulate tally filled by matmul, mul and scan primitives."""

    total: int = 0
    by_op: Dict[str, int] = field(default_factory=dict)

    def add(self, op: str, count: int) -> None:
        self.total += int(count)
        self.by_op[op] = self.by_op.get(op, 0) + int(count)


@contextmanager
def mac_counter() -> Iterator[MacCounter]:
    """
    Count multiply-accumulates issued on the current thread.

    Convention: matmul counts m·k·n per batch element, mul counts one per
    output element, scan counts one per state element per step. Every
    other primitive counts zero.
    """
    previous = _active_counter()
    counter = MacCounter()
    _local.mac_counter = counter
    try:
        yield counter
    finally:
        _local.mac_counter = previous


def _count(op: str, n: int) -> None:
    counter = _active_counter()
    if counter is not None:
        counter.add(op, n)


class Tensor:
    """
    A dense real array that can take part in reverse-mode differentiation.

    ``grad`` is populated by ``backward`` for every tensor with
    ``requires_grad`` reachable from the loss, and accumulates across calls
    until ``zero_grad`` is called.
    """

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Optional[Any] = None
    ):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = _DEFAULT_DTYPE
        self.data: np.ndarray = np.asarray(data, dtype=dtype)
        self.requires_grad: bool = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.op: str = "leaf"
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None

    # --- convenience ---
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        req = ", requires_grad=True" if self.requires_grad else ""
        nm = f", name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{req}{nm})"

    def __len__(self) -> int:
        return self.shape[0]

    # --- operators ---
    def __add__(self, other: Any) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: Any) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: Any) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: Any) -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return getitem(self, index)

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: Any) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        return transpose(self, axes or None)


# alias
Array = Tensor


@dataclass
class TapeRecord:
    """One recorded primitive: its output and the inputs it consumed."""

    output: Tensor
    inputs: Tuple[Tensor, ...]
    op: str


class Tape:
    """
    Topologically ordered record of the primitives feeding one output.

    Built on demand from the parent links stored on each tensor, so no
    global mutable state is shared between model instances or threads.
    """

    def __init__(self, records: List[TapeRecord]):
        self.records = records

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def from_output(cls, root: Tensor) -> "Tape":
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return cls([TapeRecord(t, t._parents, t.op) for t in order])


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, (gs, ts) in enumerate(zip(grad.shape, shape)):
        if ts == 1 and gs != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad.reshape(shape)


def backward(loss: Tensor) -> None:
    """
    Accumulate d(loss)/d(x) into ``x.grad`` for every reachable tensor.

    Args:
        loss: Scalar tensor connected to trainable inputs

    Raises:
        ContractError: If loss is not scalar or not connected to the tape
    """
    if loss.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("backward() called on a tensor that is not connected to the tape")

    tape = Tape.from_output(loss)
    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}

    for record in reversed(tape.records):
        node = record.output
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(record.inputs, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            pg = _unbroadcast(np.asarray(pg, dtype=parent.dtype), parent.shape)
            key = id(parent)
            pending[key] = pending[key] + pg if key in pending else pg


# ---------------------------------------------------------------------------
# primitive plumbing
# ---------------------------------------------------------------------------

def _lift(value: Any, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(value, dtype=dtype)


def _pair(a: Any, b: Any) -> Tuple[Tensor, Tensor]:
    ta = a if isinstance(a, Tensor) else None
    tb = b if isinstance(b, Tensor) else None
    a = _lift(a, tb)
    b = _lift(b, ta if ta is not None else a)
    return a, b


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> Tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a.shape, b.shape))
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible")


def _make(
    data: np.ndarray,
    parents: Tuple[Tensor, ...],
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
    op: str
) -> Tensor:
    requires = _grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires, dtype=data.dtype)
    if requires:
        out._parents = parents
        out._backward = backward_fn
        out.op = op
    return out


def _clamped(x: np.ndarray) -> np.ndarray:
    return np.clip(x, -EXP_CLAMP, EXP_CLAMP)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-_clamped(x)))


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def neg(a: Any) -> Tensor:
    a = _lift(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "mul")
    data = a.data * b.data
    _count("mul", data.size)

    def _bw(g: np.ndarray):
        return (g * b.data if a.requires_grad else None,
                g * a.data if b.requires_grad else None)
    return _make(data, (a, b), _bw, "mul")


def div(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "div")
    data = a.data / b.data

    def _bw(g: np.ndarray):
        return (g / b.data if a.requires_grad else None,
                -g * a.data / (b.data * b.data) if b.requires_grad else None)
    return _make(data, (a, b), _bw, "div")


def exp(a: Any) -> Tensor:
    a = _lift(a)
    data = np.exp(_clamped(a.data))
    inside = np.abs(a.data) <= EXP_CLAMP
    return _make(data, (a,), lambda g: (g * data * inside,), "exp")


def log(a: Any) -> Tensor:
    a = _lift(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sigmoid(a: Any) -> Tensor:
    a = _lift(a)
    s = _sigmoid(a.data)
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def silu(a: Any) -> Tensor:
    """x · sigmoid(x)."""
    a = _lift(a)
    s = _sigmoid(a.data)
    return _make(a.data * s, (a,), lambda g: (g * (s + a.data * s * (1.0 - s)),), "silu")


def softplus(a: Any) -> Tensor:
    """ln(1 + e^x), linear above the clamp threshold."""
    a = _lift(a)
    x = a.data
    data = np.where(x > EXP_CLAMP, x, np.log1p(np.exp(_clamped(x))))
    return _make(data, (a,), lambda g: (g * _sigmoid(x),), "softplus")


def tabs(a: Any) -> Tensor:
    a = _lift(a)
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def clamp(a: Any, low: float, high: float) -> Tensor:
    a = _lift(a)
    inside = (a.data >= low) & (a.data <= high)
    return _make(np.clip(a.data, low, high), (a,), lambda g: (g * inside,), "clamp")


def where(condition: np.ndarray, a: Any, b: Any) -> Tensor:
    """Select from ``a`` where the constant boolean mask holds, else ``b``."""
    a, b = _pair(a, b)
    cond = np.asarray(condition, dtype=bool)
    data = np.where(cond, a.data, b.data)
    return _make(data, (a, b), lambda g: (np.where(cond, g, 0.0), np.where(cond, 0.0, g)), "where")


# ---------------------------------------------------------------------------
# linear algebra and reductions
# ---------------------------------------------------------------------------

def matmul(a: Any, b: Any) -> Tensor:
    """
    Matrix product over the last two axes, batched over leading axes.

    Raises:
        DimensionError: If inner dimensions or batch axes disagree
    """
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not agree")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: batch axes of {a.shape} and {b.shape} do not agree")
    data = np.matmul(a.data, b.data)
    _count("matmul", data.size * a.shape[-1])

    def _bw(g: np.ndarray):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return ga, gb
    return _make(data, (a, b), _bw, "matmul")


def _expand_reduced(g: np.ndarray, shape: Tuple[int, ...], axis: Any, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def tsum(a: Any, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    data = np.sum(a.data, axis=axis, keepdims=keepdims)
    return _make(np.asarray(data), (a,), lambda g: (_expand_reduced(g, a.shape, axis, keepdims),), "sum")


def mean(a: Any, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    data = np.asarray(np.mean(a.data, axis=axis, keepdims=keepdims))
    count = a.size // max(data.size, 1) if a.size else 1
    return _make(data, (a,), lambda g: (_expand_reduced(g, a.shape, axis, keepdims) / count,), "mean")


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------

def reshape(a: Any, shape: Tuple[int, ...]) -> Tensor:
    a = _lift(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {a.shape} as {tuple(shape)}")
    return _make(data, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Any, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = _lift(a)
    perm = tuple(axes) if axes else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(perm))
    return _make(np.transpose(a.data, perm), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def getitem(a: Any, index: Any) -> Tensor:
    """Basic (slice / integer / None / Ellipsis) indexing."""
    a = _lift(a)
    data = a.data[index]

    def _bw(g: np.ndarray):
        full = np.zeros_like(a.data)
        full[index] += g
        return (full,)
    return _make(np.asarray(data), (a,), _bw, "getitem")


def concat(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    parts = [_lift(t) for t in tensors]
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise DimensionError(f"concat: shapes {[p.shape for p in parts]} disagree off axis {axis}")
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def _bw(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=axis))
    return _make(data, tuple(parts), _bw, "concat")


def stack(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    parts = [_lift(t) for t in tensors]
    try:
        data = np.stack([p.data for p in parts], axis=axis)
    except ValueError:
        raise DimensionError(f"stack: shapes {[p.shape for p in parts]} differ")

    def _bw(g: np.ndarray):
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))
    return _make(data, tuple(parts), _bw, "stack")


def pad(a: Any, widths: Sequence[Tuple[int, int]]) -> Tensor:
    """Zero padding; ``widths`` has one (before, after) pair per axis."""
    a = _lift(a)
    widths = tuple((int(lo), int(hi)) for lo, hi in widths)
    data = np.pad(a.data, widths)
    index = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, a.shape))
    return _make(data, (a,), lambda g: (g[index],), "pad")


def repeat(a: Any, repeats: int, axis: int) -> Tensor:
    """Repeat every element ``repeats`` times along ``axis`` (nearest upsampling)."""
    a = _lift(a)
    axis = axis % a.ndim
    data = np.repeat(a.data, repeats, axis=axis)

    def _bw(g: np.ndarray):
        split = a.shape[:axis] + (a.shape[axis], repeats) + a.shape[axis + 1:]
        return (g.reshape(split).sum(axis=axis + 1),)
    return _make(data, (a,), _bw, "repeat")


def scan(decay: Any, inputs: Any, h0: Optional[Any] = None, axis: int = 0) -> Tensor:
    """
    Sequential linear recurrence ``h_t = h_{t-1} * decay_t + inputs_t`` along ``axis``.

    ``decay`` and ``inputs`` broadcast against each other; the result has
    the broadcast shape and holds every h_t.

    Args:
        decay: Per-step multiplicative factors
        inputs: Per-step additive terms
        h0: Initial state (zeros when omitted), shaped like one step
        axis: Time axis

    Returns:
        Stacked states h_1..h_T
    """
    decay, inputs = _pair(decay, inputs)
    full_shape = _broadcast_shape(decay, inputs, "scan")
    ndim = len(full_shape)
    axis = axis % ndim
    a_full = np.moveaxis(np.broadcast_to(decay.data, full_shape), axis, 0)
    b_full = np.moveaxis(np.broadcast_to(inputs.data, full_shape), axis, 0)
    steps = a_full.shape[0]
    step_shape = a_full.shape[1:]
    dtype = np.result_type(decay.dtype, inputs.dtype)

    parents: Tuple[Tensor, ...] = (decay, inputs)
    if h0 is not None:
        h0 = _lift(h0, decay)
        try:
            start = np.broadcast_to(h0.data, step_shape).astype(dtype)
        except ValueError:
            raise DimensionError(f"scan: initial state {h0.shape} does not fit step shape {step_shape}")
        parents = parents + (h0,)
    else:
        start = np.zeros(step_shape, dtype=dtype)

    states = np.empty((steps,) + step_shape, dtype=dtype)
    h = start
    for t in range(steps):
        h = h * a_full[t] + b_full[t]
        states[t] = h
    _count("scan", states.size)

    def _bw(g: np.ndarray):
        g = np.moveaxis(g, axis, 0)
        ga = np.empty_like(states)
        gb = np.empty_like(states)
        gh = np.zeros(step_shape, dtype=dtype)
        for t in range(steps - 1, -1, -1):
            gh = gh + g[t]
            gb[t] = gh
            ga[t] = gh * (states[t - 1] if t > 0 else start)
            gh = gh * a_full[t]
        grads = [np.moveaxis(ga, 0, axis), np.moveaxis(gb, 0, axis)]
        if h0 is not None:
            grads.append(gh)
        return tuple(grads)
    return _make(np.moveaxis(states, 0, axis), parents, _bw, "scan")


ELEMENTWISE_OPS: Dict[str, Callable[..., Tensor]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "exp": exp,
    "log": log,
    "sigmoid": sigmoid,
    "silu": silu,
    "softplus": softplus,
    "abs": tabs,
    "mean": mean,
    "sum": tsum,
}


def elementwise(op: str, *args: Any, **kwargs: Any) -> Tensor:
    """
    Dispatch an elementwise or reduction primitive by name.

    Args:
        op: One of ELEMENTWISE_OPS
        *args: Operands
        **kwargs: Reduction options (axis, keepdims)

    Returns:
        Result tensor
    """
    try:
        fn = ELEMENTWISE_OPS[op]
    except KeyError:
        raise ValueError(f"Unknown elementwise op: {op}")
    return fn(*args, **kwargs)
