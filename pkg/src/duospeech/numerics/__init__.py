"""Deterministic f64 tensor engine: autograd tape, layers, AdamW, RNG tree."""

from .gradcheck import grad_check
from .optim import AdamW
from .rng import Rng
from .tensor import (
    LAYER_NORM_EPS,
    NEG_FILL,
    NonFiniteError,
    ShapeError,
    Tensor,
    add,
    concat,
    conv1d,
    conv1d_out_len,
    depthwise_conv1d,
    gather_last,
    layer_norm,
    log_softmax,
    masked_fill,
    matmul,
    mul,
    pow_const,
    reshape,
    round_ste,
    scale,
    sigmoid,
    silu,
    softmax,
    sub,
    take_rows,
    tanh,
    tmean,
    transpose,
    tsum,
)

__all__ = [
    "AdamW",
    "LAYER_NORM_EPS",
    "NEG_FILL",
    "NonFiniteError",
    "Rng",
    "ShapeError",
    "Tensor",
    "add",
    "concat",
    "conv1d",
    "conv1d_out_len",
    "depthwise_conv1d",
    "gather_last",
    "grad_check",
    "layer_norm",
    "log_softmax",
    "masked_fill",
    "matmul",
    "mul",
    "pow_const",
    "reshape",
    "round_ste",
    "scale",
    "sigmoid",
    "silu",
    "softmax",
    "sub",
    "take_rows",
    "tanh",
    "tmean",
    "transpose",
    "tsum",
]
