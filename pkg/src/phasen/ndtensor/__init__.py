from . import backend
from .gradcheck import grad_check
from .nn import (
    NormState,
    batch_norm,
    bilstm,
    conv1d,
    conv2d,
    global_layer_norm,
    linear,
    lstm,
)
from .tensor import (
    Parameter,
    Tensor,
    add,
    as_tensor,
    clip_min,
    concat,
    div,
    exp,
    matmul,
    mul,
    neg,
    permute,
    power,
    relu,
    reshape,
    sigmoid,
    sqrt,
    sub,
    take,
    tanh,
    tmean,
    tsum,
    zero_grads,
)

__all__ = [
    "Parameter", "Tensor", "NormState",
    "add", "sub", "mul", "div", "neg", "power", "sqrt", "exp", "clip_min",
    "relu", "sigmoid", "tanh", "matmul", "tsum", "tmean",
    "reshape", "permute", "concat", "take", "as_tensor", "zero_grads",
    "conv1d", "conv2d", "linear", "batch_norm", "global_layer_norm",
    "lstm", "bilstm", "grad_check", "backend",
]
