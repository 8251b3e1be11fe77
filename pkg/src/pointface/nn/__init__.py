"""Reverse-mode autodiff core, layers, and the Adam optimizer."""

from . import tensor
from .layers import BatchNorm, Dropout, Linear, SharedMLP, he_uniform
from .optim import ParamStore, adam_step
from .tensor import (
    Tensor,
    add_bias,
    batch_norm,
    concat,
    dropout,
    gather_points,
    matmul,
    max_axis,
    mean_all,
    relu,
    reshape,
    softmax_xent,
    sum_mul,
)

__all__ = [
    "BatchNorm",
    "Dropout",
    "Linear",
    "ParamStore",
    "SharedMLP",
    "Tensor",
    "adam_step",
    "add_bias",
    "batch_norm",
    "concat",
    "dropout",
    "gather_points",
    "he_uniform",
    "matmul",
    "max_axis",
    "mean_all",
    "relu",
    "reshape",
    "softmax_xent",
    "sum_mul",
    "tensor",
]
