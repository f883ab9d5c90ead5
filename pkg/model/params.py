"""
Model Parameters.

Named registry of every trainable tensor, with seeded initialisation.
Weights are stored (out, in) and applied as x @ Wᵀ.
"""

import logging
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from engine import Tensor
from utils.errors import ConfigError
from .config import ModelConfig

logger = logging.getLogger(__name__)

DT_MIN = 0.001
DT_MAX = 0.1


def parameter_shapes(config: ModelConfig) -> "OrderedDict[str, Tuple[int, ...]]":
    """
    Shapes of every parameter, in registration order.

    Args:
        config: Model configuration

    Returns:
        Ordered name -> shape mapping
    """
    n = config.n_rx
    t = config.token_width
    d = config.d_state
    dc = config.chirp_d_state
    k = config.d_conv
    cells = config.h0 * config.w0
    c_dec = config.c_dec

    shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()
    shapes["embed.w1"] = (2 * n, 2 * n)
    shapes["embed.b1"] = (2 * n,)
    shapes["embed.w2"] = (n, 2 * n)
    shapes["embed.b2"] = (n,)
    _ssm_shapes(shapes, "sample_ssm", n, d, k)
    if config.chirp_aggregation == "conv1d":
        shapes["aggregate.conv_w"] = (n, 3)
        shapes["aggregate.conv_b"] = (n,)
    shapes["expand.w1"] = (t, n)
    shapes["expand.b1"] = (t,)
    shapes["expand.w2"] = (t, t)
    shapes["expand.b2"] = (t,)
    _ssm_shapes(shapes, "chirp_ssm", t, dc, k)
    shapes["decoder.conv1d_w"] = (cells, t, 3)
    shapes["decoder.conv1d_b"] = (cells,)
    shapes["decoder.conv2d_1_w"] = (c_dec, 1, 3, 3)
    shapes["decoder.conv2d_1_b"] = (c_dec,)
    shapes["decoder.conv2d_2_w"] = (c_dec, c_dec, 3, 3)
    shapes["decoder.conv2d_2_b"] = (c_dec,)
    if "segmentation" in config.heads:
        shapes["heads.seg_w"] = (1, c_dec)
        shapes["heads.seg_b"] = (1,)
    if "detection" in config.heads:
        shapes["heads.det_w"] = (3, c_dec)
        shapes["heads.det_b"] = (3,)
    return shapes


def _ssm_shapes(shapes: Dict[str, Tuple[int, ...]], prefix: str, width: int, d_state: int, d_conv: int) -> None:
    shapes[f"{prefix}.conv_w"] = (width, d_conv)
    shapes[f"{prefix}.conv_b"] = (width,)
    shapes[f"{prefix}.w_p"] = (3 * d_state, width)
    shapes[f"{prefix}.a_log"] = (d_state,)
    shapes[f"{prefix}.dt_bias"] = (d_state,)
    shapes[f"{prefix}.d_skip"] = (d_state, width)


def _weight_for(name: str) -> Optional[str]:
    head, _, leaf = name.rpartition(".")
    if leaf.endswith("_b"):
        return f"{head}.{leaf[:-2]}_w"
    if leaf in ("b1", "b2"):
        return f"{head}.w{leaf[1]}"
    return None


def _fan_in(name: str, shape: Tuple[int, ...], shapes: Dict[str, Tuple[int, ...]]) -> int:
    weight = _weight_for(name)
    if weight is not None:
        # biases share the fan-in of their weight
        shape = shapes[weight]
    if name.endswith("d_skip"):
        return shape[0]
    return int(np.prod(shape[1:])) if len(shape) > 1 else int(shape[0])


class Parameters:
    """
    Ordered name -> Tensor registry.

    Every trainable array is registered exactly once; iteration order is
    the registration order, which is also the checkpoint order.
    """

    def __init__(self, tensors: "OrderedDict[str, Tensor]"):
        self._tensors = tensors

    @classmethod
    def initialize(cls, config: ModelConfig) -> "Parameters":
        """
        Seeded initialisation.

        Weights and biases are uniform in ±1/sqrt(fan_in); A_log_j = ln(j+1);
        dt_bias is the inverse softplus of a uniform draw in [0.001, 0.1].
        """
        rng = np.random.default_rng(config.seed)
        shapes = parameter_shapes(config)
        dtype = config.dtype
        tensors: "OrderedDict[str, Tensor]" = OrderedDict()
        for name, shape in shapes.items():
            if name.endswith("a_log"):
                data = np.log(np.arange(1, shape[0] + 1, dtype=np.float64))
            elif name.endswith("dt_bias"):
                dt = rng.uniform(DT_MIN, DT_MAX, size=shape)
                data = np.log(np.expm1(dt))
            else:
                bound = 1.0 / np.sqrt(_fan_in(name, shape, shapes))
                data = rng.uniform(-bound, bound, size=shape)
            tensors[name] = Tensor(data.astype(dtype), requires_grad=True, name=name)
        params = cls(tensors)
        logger.info(f"Initialized {len(tensors)} parameter tensors ({params.count()} scalars, seed={config.seed})")
        return params

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def values(self) -> List[Tensor]:
        return list(self._tensors.values())

    def names(self) -> List[str]:
        return list(self._tensors)

    def count(self) -> int:
        """Total number of trainable scalars."""
        return int(sum(t.size for t in self._tensors.values()))

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, t.data.copy()) for k, t in self._tensors.items())

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """
        Copy arrays into the registered tensors.

        Raises:
            ConfigError: Missing, unexpected or mis-shaped entries
        """
        missing = [k for k in self._tensors if k not in state]
        extra = [k for k in state if k not in self._tensors]
        if missing or extra:
            raise ConfigError(f"Parameter names differ: missing={missing}, unexpected={extra}")
        for name, tensor in self._tensors.items():
            array = np.asarray(state[name])
            if array.shape != tensor.shape:
                raise ConfigError(f"Parameter {name}: shape {array.shape} != expected {tensor.shape}")
            tensor.data = array.astype(tensor.dtype).copy()

    def astype(self, dtype) -> "Parameters":
        """Copy with every tensor cast to ``dtype``."""
        return Parameters(OrderedDict(
            (k, Tensor(t.data.astype(dtype), requires_grad=True, name=k)) for k, t in self._tensors.items()
        ))
