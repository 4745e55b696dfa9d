"""Minimal reverse-mode autodiff with stop-gradient and Adam."""
from .optim import Adam, AdamState, adam_apply, global_norm
from .tensor import (
    Parameter,
    ShapeError,
    Tape,
    Tensor,
    abs_,
    add,
    as_tensor,
    backward,
    concat,
    div,
    exp,
    gru_gates,
    heaviside,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    relu,
    reshape,
    sigmoid,
    sign,
    slice_,
    softmax,
    sqrt,
    square,
    stack,
    stop_gradient,
    sub,
    sum_,
    tanh,
    tensor_op,
)

__all__ = [
    "Adam", "AdamState", "Parameter", "ShapeError", "Tape", "Tensor", "abs_", "adam_apply",
    "add", "as_tensor", "backward", "concat", "div", "exp", "global_norm", "gru_gates",
    "heaviside", "log", "log_softmax", "matmul", "mean", "mul", "neg", "relu", "reshape",
    "sigmoid", "sign", "slice_", "softmax", "sqrt", "square", "stack", "stop_gradient", "sub",
    "sum_", "tanh", "tensor_op",
]
