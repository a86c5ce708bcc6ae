from .tensor import (
    NARROW,
    WIDE,
    Tape,
    Tensor,
    add,
    clamp,
    concat,
    cross_entropy,
    div,
    exp,
    log,
    matmul,
    mse,
    mul,
    neg,
    reshape,
    resolve_dtype,
    sigmoid,
    sign,
    softmax,
    sqrt,
    sub,
    tanh,
    tmean,
    tsum,
)
from .checkpoint import checkpoint

__all__ = [
    "NARROW",
    "WIDE",
    "Tape",
    "Tensor",
    "add",
    "checkpoint",
    "clamp",
    "concat",
    "cross_entropy",
    "div",
    "exp",
    "log",
    "matmul",
    "mse",
    "mul",
    "neg",
    "reshape",
    "resolve_dtype",
    "sigmoid",
    "sign",
    "softmax",
    "sqrt",
    "sub",
    "tanh",
    "tmean",
    "tsum",
]
