"""
Adam Optimizer.

Classic Adam with L2 regularisation folded into the gradient
(g ← g + weight_decay·θ before the moment updates).
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import ContractError
from .tensor import Tensor

logger = logging.getLogger(__name__)


class Adam:
    """
    Adaptive moment estimation over a fixed list of parameters.

    Moment buffers are zero-initialised on construction, one pair per
    parameter; ``step_count`` counts completed updates.
    """

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 1e-4,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0
    ):
        """
        Initialize optimizer.

        Args:
            params: Trainable tensors, updated in place
            lr: Learning rate
            betas: Decay rates of the first and second moment estimates
            eps: Denominator stabiliser
            weight_decay: L2 coefficient added to the gradient
        """
        self.params: List[Tensor] = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        """
        Apply one Adam update to every parameter.

        Raises:
            ContractError: If a parameter has no populated gradient
        """
        missing = [p.name or f"#{i}" for i, p in enumerate(self.params) if p.grad is None]
        if missing:
            raise ContractError(f"adam_step: no gradient for parameters {missing}")

        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count

        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= update.astype(p.dtype, copy=False)


def adam_step(
    params: Sequence[Tensor],
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    state: Optional[Adam] = None
) -> Adam:
    """
    Apply one Adam update to ``params``.

    Moment estimates live in an ``Adam`` instance: the first call creates
    one, later calls pass it back as ``state`` to continue from it.

    Returns:
        The Adam instance holding the updated moments

    Raises:
        ContractError: If ``state`` tracks a different parameter list, or a
            parameter has no gradient
    """
    params = list(params)
    if state is None:
        state = Adam(params, lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
    elif len(state.params) != len(params) or any(a is not b for a, b in zip(state.params, params)):
        raise ContractError("adam_step: state was built for a different parameter list")
    state.lr = lr
    state.beta1, state.beta2 = betas
    state.eps = eps
    state.weight_decay = weight_decay
    state.step()
    return state
