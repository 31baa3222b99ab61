"""Minimal reverse-mode autodiff over numpy float64 arrays."""

from .checkpoint import CheckpointError, load_checkpoint, load_manifest, save_checkpoint
from .gradcheck import grad_check
from .nn import GRUCell, MLP, Conv2d, Linear, Module, Parameter, glorot, gru_cell
from .ops import (
    abs_sum, add, concat, conv2d, gather_rows, l2_normalize, leaky_relu, matmul,
    max_pool2d, mean_over_axis, min_over_axis, mul, neg, reshape, segment_mean,
    sigmoid, slice_, softmax, sub, sum_, tanh, track_kinks, transpose,
)
from .optim import Adam, adam_step
from .tensor import ShapeError, Tensor, as_tensor

__all__ = [
    "Adam", "CheckpointError", "Conv2d", "GRUCell", "Linear", "MLP", "Module", "Parameter",
    "ShapeError", "Tensor", "abs_sum", "adam_step", "add", "as_tensor", "concat", "conv2d",
    "gather_rows", "glorot", "grad_check", "gru_cell", "l2_normalize", "leaky_relu",
    "load_checkpoint", "load_manifest", "matmul", "max_pool2d", "mean_over_axis",
    "min_over_axis", "mul", "neg", "reshape", "save_checkpoint", "segment_mean", "sigmoid",
    "slice_", "softmax", "sub", "sum_", "tanh", "track_kinks", "transpose",
]
