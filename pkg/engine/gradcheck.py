"""
Finite-difference gradient oracle.

Central differences with a per-element step h = 1e-4·max(1, |θ|),
compared against reverse-mode gradients in float64.
"""

import logging
from typing import Callable, Dict, Sequence

import numpy as np

from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


def numerical_gradient(fn: Callable[[], Tensor], param: Tensor, rel_step: float = 1e-4) -> np.ndarray:
    """
    Estimate d fn() / d param by central differences.

    Args:
        fn: Closure recomputing the scalar loss from current parameter values
        param: Tensor whose entries are perturbed in place
        rel_step: Step scale relative to max(1, |θ|)

    Returns:
        Gradient estimate shaped like ``param``
    """
    flat = param.data.reshape(-1)
    grad = np.zeros(flat.shape, dtype=np.float64)
    with no_grad():
        for i in range(flat.size):
            original = flat[i]
            h = rel_step * max(1.0, abs(float(original)))
            flat[i] = original + h
            plus = fn().item()
            flat[i] = original - h
            minus = fn().item()
            flat[i] = original
            grad[i] = (plus - minus) / (2.0 * h)
    return grad.reshape(param.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||); the absolute difference when both vanish."""
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale < 1e-12:
        return float(diff)
    return float(diff / scale)


def check_gradients(fn: Callable[[], Tensor], params: Dict[str, Tensor]) -> Dict[str, float]:
    """
    Compare reverse-mode and finite-difference gradients for each parameter.

    Args:
        fn: Closure building the scalar loss
        params: Named tensors with requires_grad set

    Returns:
        Relative error per parameter name
    """
    for p in params.values():
        p.zero_grad()
    fn().backward()

    errors = {}
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numerical_gradient(fn, p)
        errors[name] = relative_error(analytic, numeric)
        logger.debug(f"gradcheck {name}: rel_err={errors[name]:.3e}")
    return errors
