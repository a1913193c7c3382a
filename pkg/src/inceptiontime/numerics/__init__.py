"""Minimal reverse-mode numeric core for 1D convolutional networks."""

from .gradcheck import finite_difference_gradient, gradient_check, max_relative_error
from .init import conv_fans, glorot_bound, glorot_uniform, make_rng
from .ops import (
    BatchNormState,
    add,
    batch_norm,
    concat,
    conv1d,
    cross_entropy,
    dense,
    global_average_pool,
    maxpool1d,
    multiply,
    relu,
    same_padding,
    softmax,
    softmax_cross_entropy,
    total,
)
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, as_tensor

__all__ = [
    "Adam", "AdamState", "BatchNormState", "Tensor", "adam_step", "add", "as_tensor",
    "batch_norm", "concat", "conv1d", "conv_fans", "cross_entropy", "dense",
    "finite_difference_gradient", "glorot_bound", "gradient_check", "glorot_uniform", "global_average_pool",
    "make_rng", "max_relative_error", "maxpool1d", "multiply", "relu", "same_padding",
    "softmax", "softmax_cross_entropy", "total",
]
