"""Differentiable op set, Adam optimizer, and gradient verification."""

from .adam import AdamState, adam_step
from .gradcheck import grad_check
from .ops import (
    BatchNormState,
    add,
    add_const,
    batchnorm,
    concat_rows,
    conv1d,
    dropout,
    embedding_bag_mean,
    exp_clamp,
    gather_rows,
    l2norm_rows,
    linear,
    matmul_nt,
    max_over_time,
    mul_const,
    reflect_pad_indices,
    relu,
    scale_by,
    softmax_xent_rows,
    sum_all,
    transpose2d,
)
from .tensor import Tensor, as_tensor

__all__ = [
    "AdamState",
    "BatchNormState",
    "Tensor",
    "adam_step",
    "add",
    "add_const",
    "as_tensor",
    "batchnorm",
    "concat_rows",
    "conv1d",
    "dropout",
    "embedding_bag_mean",
    "exp_clamp",
    "gather_rows",
    "grad_check",
    "l2norm_rows",
    "linear",
    "matmul_nt",
    "max_over_time",
    "mul_const",
    "reflect_pad_indices",
    "relu",
    "scale_by",
    "softmax_xent_rows",
    "sum_all",
    "transpose2d",
]
