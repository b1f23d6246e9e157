"""Named parameter storage, AdamW, and the cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import Tensor


class ParamStore:
    """Ordered mapping of unique names to trainable tensors.

    Shapes are fixed once a parameter is created; :meth:`assign` refuses to
    change them. Optimizer moment buffers live here too, keyed by name.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}
        self.moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self.step_count = 0

    def create(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already exists")
        t = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise KeyError(f"no parameter named {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def assign(self, name: str, value: np.ndarray) -> None:
        p = self[name]
        value = np.asarray(value)
        if value.shape != p.shape:
            raise ValueError(f"parameter {name!r}: checkpoint shape {value.shape} does not match model shape {p.shape}")
        p.data = value.astype(self.dtype, copy=True)

    def remove(self, prefix: str) -> None:
        for name in self.names(prefix):
            del self._params[name]
            self.moments.pop(name, None)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def grad_norm(self, prefix: str = "") -> float:
        total = 0.0
        for name in self.names(prefix):
            g = self._params[name].grad
            if g is not None:
                total += float(np.sum(g.astype(np.float64) ** 2))
        return math.sqrt(total)

    def num_elements(self) -> int:
        return sum(p.size for p in self._params.values())


@dataclass(frozen=True)
class AdamWConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


def adamw_step(store: ParamStore, lr: float, cfg: AdamWConfig = AdamWConfig(),
               skip_missing: tuple[str, ...] = ()) -> None:
    """Apply one decoupled-weight-decay Adam update to every parameter.

    Parameters whose name starts with one of ``skip_missing`` may lack a
    gradient (an inactive branch); any other missing gradient is an error.
    """
    store.step_count += 1
    k = store.step_count
    bc1 = 1.0 - cfg.beta1 ** k
    bc2 = 1.0 - cfg.beta2 ** k
    for name, p in store.items():
        g = p.grad
        if g is None:
            if skip_missing and name.startswith(skip_missing):
                continue
            raise RuntimeError(f"parameter {name!r} has no gradient; run backward() before the optimizer step")
        m, v = store.moments.get(name, (np.zeros_like(p.data), np.zeros_like(p.data)))
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        store.moments[name] = (m, v)
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        p.data = (p.data * (1.0 - lr * cfg.weight_decay) - lr * update).astype(p.dtype)


def cosine_lr(step: int, total_steps: int, lr_init: float, floor: float = 0.01) -> float:
    """Cosine annealing from ``lr_init`` at step 0 to ``floor * lr_init`` at the last step."""
    if total_steps <= 1:
        return lr_init
    frac = min(max(step / (total_steps - 1), 0.0), 1.0)
    lo = floor * lr_init
    return lo + 0.5 * (lr_init - lo) * (1.0 + math.cos(math.pi * frac))
