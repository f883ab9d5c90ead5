"""
Tensor engine.

Numpy-backed arrays with reverse-mode differentiation, the Adam optimizer
and a finite-difference gradient oracle.
"""

from .tensor import (
    Tensor,
    Array,
    Tape,
    MacCounter,
    backward,
    no_grad,
    mac_counter,
    add, sub, neg, mul, div, exp, log, sigmoid, silu, softplus, tabs, clamp, where,
    matmul, tsum, mean, reshape, transpose, getitem, concat, stack, pad, repeat, scan,
    elementwise,
)
from .optim import Adam, adam_step
from .gradcheck import check_gradients, numerical_gradient, relative_error

__all__ = [
    "Tensor", "Array", "Tape", "MacCounter", "backward", "no_grad", "mac_counter",
    "add", "sub", "neg", "mul", "div", "exp", "log", "sigmoid", "silu", "softplus",
    "tabs", "clamp", "where", "matmul", "tsum", "mean", "reshape", "transpose",
    "getitem", "concat", "stack", "pad", "repeat", "scan", "elementwise",
    "Adam", "adam_step", "check_gradients", "numerical_gradient", "relative_error",
]
