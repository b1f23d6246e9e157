"""DiT backbone with adaLN-Zero timestep conditioning, and the token-space network f_theta."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import init_linear, init_mlp, linear, mlp
from .tensor import ParamStore, Tensor
from .tokenize import assemble_sequence, split_sequence, tokenize_gaussian, tokenize_image


@dataclass(frozen=True)
class DiTConfig:
    depth: int = 2
    width: int = 64
    heads: int = 4
    mlp_ratio: int = 4
    time_dim: int = 64

    def __post_init__(self):
        if self.width % self.heads:
            raise ValueError(f"hidden width {self.width} is not divisible by {self.heads} heads")
        if self.time_dim % 2:
            raise ValueError("timestep embedding width must be even")


def timestep_features(t: float, dim: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal features of ``t`` in [0, 1] (scaled by 1000, as for discrete DiT steps)."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    args = 1000.0 * t * freqs
    return np.concatenate([np.cos(args), np.sin(args)]).astype(dtype)


def init_dit(store: ParamStore, cfg: DiTConfig, rng: np.random.Generator) -> None:
    d = cfg.width
    init_mlp(store, "t_embed", [cfg.time_dim, d, d], rng)
    for i in range(cfg.depth):
        b = f"dit.{i}"
        init_linear(store, f"{b}.adaln", d, 6 * d, rng, zero=True)
        init_linear(store, f"{b}.qkv", d, 3 * d, rng)
        init_linear(store, f"{b}.proj", d, d, rng)
        init_mlp(store, f"{b}.mlp", [d, cfg.mlp_ratio * d, d], rng)


def _modulate(x: Tensor, shift: Tensor, scale: Tensor) -> Tensor:
    return T.layer_norm(x) * (scale + 1.0) + shift


def attention(x: Tensor, store: ParamStore, block: str, heads: int, probe: list | None = None) -> Tensor:
    """Full (unmasked) multi-head self-attention over every token."""
    n, d = x.shape
    dh = d // heads
    qkv = linear(store, f"{block}.qkv", x).reshape(n, 3, heads, dh)
    qkv = T.transpose(qkv, (1, 2, 0, 3))
    q, k, v = (qkv[i] for i in range(3))
    scores = T.matmul(q, T.transpose(k, (0, 2, 1))) * (1.0 / math.sqrt(dh))
    weights = T.softmax(scores, axis=-1)
    if probe is not None:
        probe.append(weights.data)
    out = T.transpose(T.matmul(weights, v), (1, 0, 2)).reshape(n, d)
    return linear(store, f"{block}.proj", out)


def dit_forward(tokens: Tensor, t: float, cfg: DiTConfig, store: ParamStore,
                attention_probe: list | None = None) -> Tensor:
    """Run the DiT blocks on an (L, d) token matrix at flow time ``t``."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"flow time must lie in [0, 1], got {t}")
    if tokens.shape[-1] != cfg.width:
        raise ValueError(f"token width {tokens.shape[-1]} does not match DiT width {cfg.width}")
    feats = Tensor(timestep_features(t, cfg.time_dim, tokens.dtype)[None])
    cond = T.silu(mlp(store, "t_embed", feats, depth=2))
    x = tokens
    for i in range(cfg.depth):
        b = f"dit.{i}"
        mod = linear(store, f"{b}.adaln", cond)
        shift1, scale1, gate1, shift2, scale2, gate2 = T.split(mod, [cfg.width] * 6, axis=1)
        x = x + gate1 * attention(_modulate(x, shift1, scale1), store, b, cfg.heads, attention_probe)
        x = x + gate2 * mlp(store, f"{b}.mlp", _modulate(x, shift2, scale2), depth=2)
    return x


def f_theta(g_t, t: float, x_cond, store: ParamStore, cfg: DiTConfig, patch: int) -> Tensor:
    """Denoised Gaussian tokens (V * N_h * N_w, d) for state ``g_t`` at time ``t``.

    Decoding the tokens to Gaussians (or images) is left to the heads.
    """
    g_t, x_cond = T.as_tensor(g_t), T.as_tensor(x_cond)
    if g_t.shape[1:3] != x_cond.shape[1:3]:
        raise ValueError(f"state extents {g_t.shape[1:3]} differ from image extents {x_cond.shape[1:3]}")
    ctx = tokenize_image(x_cond, store, patch)
    z_g = tokenize_gaussian(g_t, store, patch)
    seq = assemble_sequence(ctx, z_g)
    seq.tokens = dit_forward(seq.tokens, t, cfg, store)
    _, z_tilde = split_sequence(seq)
    return z_tilde
