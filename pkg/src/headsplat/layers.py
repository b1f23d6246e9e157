"""Parameter initialisation and the small MLP building blocks shared by the heads."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import ParamStore, Tensor


def init_linear(store: ParamStore, name: str, fan_in: int, fan_out: int, rng: np.random.Generator,
                zero: bool = False, bias_value=0.0, gain: float = 1.0) -> None:
    """Create ``{name}.w`` (fan_in x fan_out, Xavier-uniform) and ``{name}.b``."""
    if zero:
        w = np.zeros((fan_in, fan_out))
    else:
        bound = gain * np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    store.create(f"{name}.w", w)
    store.create(f"{name}.b", np.broadcast_to(np.asarray(bias_value, dtype=np.float64), (fan_out,)).copy())


def linear(store: ParamStore, name: str, x: Tensor) -> Tensor:
    return T.linear(x, store[f"{name}.w"], store[f"{name}.b"])


def init_mlp(store: ParamStore, name: str, sizes: list[int], rng: np.random.Generator, **last) -> None:
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        kw = last if i == len(sizes) - 2 else {}
        init_linear(store, f"{name}.{i}", a, b, rng, **kw)


def mlp(store: ParamStore, name: str, x: Tensor, depth: int) -> Tensor:
    """``depth`` linear layers with GELU between them (none after the last)."""
    for i in range(depth):
        x = linear(store, f"{name}.{i}", x)
        if i < depth - 1:
            x = T.gelu(x)
    return x
