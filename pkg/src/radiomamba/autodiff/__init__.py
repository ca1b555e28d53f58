"""Minimal reverse-mode autodiff over numpy arrays."""

from .conv import conv2d, conv2d_transposed
from .gradcheck import GradcheckReport, corrupt_backward, gradcheck
from .ops import (
    absolute,
    add,
    concat,
    concat_channels,
    div,
    elementwise,
    exp,
    flip,
    gelu,
    layernorm,
    linear,
    mean,
    mul,
    neg,
    pad_reflect,
    reshape,
    reverse_sequence,
    sigmoid,
    silu,
    softplus,
    split,
    split_channels,
    sqrt,
    sum,
    square,
    sub,
    transpose,
)
from .tensor import (
    ConfigurationError,
    DimensionError,
    GraphError,
    NumericError,
    Parameter,
    Tensor,
    get_default_dtype,
    no_grad,
    precision,
    record,
)

__all__ = [
    "ConfigurationError", "DimensionError", "GraphError", "GradcheckReport", "NumericError",
    "Parameter", "Tensor", "absolute", "add", "concat", "concat_channels", "conv2d",
    "conv2d_transposed", "corrupt_backward", "div", "elementwise", "exp", "flip", "gelu",
    "get_default_dtype", "gradcheck", "layernorm", "linear", "mean", "mul", "neg", "no_grad",
    "pad_reflect", "precision", "record", "reshape", "reverse_sequence", "sigmoid", "silu",
    "softplus", "split", "split_channels", "sqrt", "square", "sub", "sum", "transpose",
]
