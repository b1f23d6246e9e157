from .core import (
    GraphError,
    ShapeError,
    Tensor,
    abs_,
    add,
    apply,
    as_tensor,
    clip,
    concat,
    cumsum,
    div,
    exp,
    gelu,
    get_default_dtype,
    index_select,
    layer_norm,
    linear,
    log,
    matmul,
    maximum,
    mean,
    mul,
    no_grad,
    normalize,
    reshape,
    set_default_dtype,
    sigmoid,
    silu,
    softmax,
    softplus,
    split,
    sqrt,
    square,
    stack,
    sub,
    sum_,
    tanh,
    transpose,
)
from .optim import AdamWConfig, ParamStore, adamw_step, cosine_lr

__all__ = [
    "AdamWConfig", "GraphError", "ParamStore", "ShapeError", "Tensor", "abs_", "adamw_step", "add",
    "apply", "as_tensor", "clip", "concat", "cosine_lr", "cumsum", "div", "exp", "gelu", "get_default_dtype",
    "index_select", "layer_norm", "linear", "log", "matmul", "maximum", "mean", "mul", "no_grad", "normalize",
    "reshape", "set_default_dtype", "sigmoid", "silu", "softmax", "softplus", "split", "sqrt",
    "square", "stack", "sub", "sum_", "tanh", "transpose",
]
