"""Patch tokenizers and DiT sequence assembly.

The image tokenizer maps the 9-channel conditioned portrait (RGB + Plücker)
to an ``N_h x N_w`` grid of width-``d`` tokens; the Gaussian tokenizer does
the same for each of the four canonical-view states with one shared set of
weights. Both are a 2-layer GELU MLP applied to each flattened p x p x 9
patch. Context tokens come first in the joint sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import init_mlp, mlp
from .tensor import ParamStore, Tensor

IMAGE_PREFIX = "tok_img"
GAUSS_PREFIX = "tok_gs"
CHANNELS = 9


class TokenizeError(ValueError):
    pass


def grid_size(height: int, width: int, patch: int) -> tuple[int, int]:
    if patch < 1 or height % patch or width % patch:
        raise TokenizeError(f"image extents {height}x{width} are not divisible by patch size {patch}")
    return height // patch, width // patch


def patchify_image(x: Tensor, patch: int) -> Tensor:
    """(C, H, W) -> (N_h * N_w, p * p * C), patches in row-major order."""
    c, h, w = x.shape
    nh, nw = grid_size(h, w, patch)
    x = T.transpose(x, (1, 2, 0)).reshape(nh, patch, nw, patch, c)
    return T.transpose(x, (0, 2, 1, 3, 4)).reshape(nh * nw, patch * patch * c)


def patchify_views(g: Tensor, patch: int) -> Tensor:
    """(V, H, W, C) -> (V * N_h * N_w, p * p * C), view-major."""
    v, h, w, c = g.shape
    nh, nw = grid_size(h, w, patch)
    g = g.reshape(v, nh, patch, nw, patch, c)
    return T.transpose(g, (0, 1, 3, 2, 4, 5)).reshape(v * nh * nw, patch * patch * c)


def unpatchify_views(tokens: Tensor, views: int, height: int, width: int, patch: int) -> Tensor:
    """Inverse of :func:`patchify_views` (pixel shuffle back to (V, H, W, C))."""
    nh, nw = grid_size(height, width, patch)
    c = tokens.shape[-1] // (patch * patch)
    x = tokens.reshape(views, nh, nw, patch, patch, c)
    return T.transpose(x, (0, 1, 3, 2, 4, 5)).reshape(views, height, width, c)


def init_tokenizers(store: ParamStore, patch: int, width: int, rng: np.random.Generator,
                    grid: tuple[int, int] | None = None) -> None:
    """Separate image and Gaussian tokenizers; optional learned positions if ``grid`` is given."""
    fan_in = patch * patch * CHANNELS
    for prefix in (IMAGE_PREFIX, GAUSS_PREFIX):
        init_mlp(store, prefix, [fan_in, width, width], rng)
    if grid is not None:
        store.create("tok_pos", rng.normal(0.0, 0.02, size=(grid[0] * grid[1], width)))


def _encode(store, prefix, patches, n_cells):
    tok = mlp(store, prefix, patches, depth=2)
    if "tok_pos" in store:
        pos = store["tok_pos"]
        reps = tok.shape[0] // n_cells
        tok = tok + (pos if reps == 1 else T.concat([pos] * reps, axis=0))
    return tok


def tokenize_image(x_cond: Tensor, store: ParamStore, patch: int) -> Tensor:
    """Context tokens ``ctx`` of shape (N_h, N_w, d) from a (9, H, W) conditioned image."""
    x_cond = T.as_tensor(x_cond)
    if x_cond.ndim != 3 or x_cond.shape[0] != CHANNELS:
        raise TokenizeError(f"conditioned image must be (9, H, W), got {x_cond.shape}")
    nh, nw = grid_size(x_cond.shape[1], x_cond.shape[2], patch)
    tok = _encode(store, IMAGE_PREFIX, patchify_image(x_cond, patch), nh * nw)
    return tok.reshape(nh, nw, tok.shape[-1])


def tokenize_gaussian(g: Tensor, store: ParamStore, patch: int) -> Tensor:
    """Gaussian tokens ``z_g`` of shape (V, N_h, N_w, d) from a (V, H, W, 9) state."""
    g = T.as_tensor(g)
    if g.ndim != 4 or g.shape[-1] != CHANNELS:
        raise TokenizeError(f"Gaussian state must be (V, H, W, 9), got {g.shape}")
    v = g.shape[0]
    nh, nw = grid_size(g.shape[1], g.shape[2], patch)
    tok = _encode(store, GAUSS_PREFIX, patchify_views(g, patch), nh * nw)
    return tok.reshape(v, nh, nw, tok.shape[-1])


@dataclass
class TokenSequence:
    """Joint token stream ``[context; gaussian]`` with the boundary index."""

    tokens: Tensor
    split: int
    grid: tuple[int, int]

    @property
    def length(self) -> int:
        return self.tokens.shape[0]


def assemble_sequence(ctx: Tensor, z_g: Tensor) -> TokenSequence:
    if ctx.shape[-1] != z_g.shape[-1]:
        raise TokenizeError(f"token widths differ: context {ctx.shape[-1]} vs Gaussian {z_g.shape[-1]}")
    nh, nw, d = ctx.shape
    if tuple(z_g.shape[1:3]) != (nh, nw):
        raise TokenizeError(f"token grids differ: context {ctx.shape[:2]} vs Gaussian {z_g.shape[1:3]}")
    c_hat = ctx.reshape(nh * nw, d)
    g_hat = z_g.reshape(z_g.shape[0] * nh * nw, d)
    return TokenSequence(T.concat([c_hat, g_hat], axis=0), nh * nw, (nh, nw))


def split_sequence(s: TokenSequence) -> tuple[Tensor, Tensor]:
    """(context part, Gaussian part) of a processed sequence."""
    if not 0 < s.split < s.length:
        raise TokenizeError(f"split index {s.split} outside sequence of length {s.length}")
    ctx, gs = T.split(s.tokens, [s.split, s.length - s.split], axis=0)
    return ctx, gs
