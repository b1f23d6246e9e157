"""Training-only image head: the same Gaussian tokens decoded to four RGB views.

A deterministic reconstruction head (no sampling, no KL term): a 2-layer
MLP per token produces a p x p x 3 patch, pixel-shuffled into the view and
squashed by a sigmoid. Its parameters live under ``vae.`` and are optional
in checkpoints.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .layers import init_mlp, mlp
from .tensor import ParamStore, Tensor
from .tokenize import unpatchify_views

PREFIX = "vae."


def init_image_decoder(store: ParamStore, width: int, patch: int, hidden: int, rng: np.random.Generator) -> None:
    init_mlp(store, "vae.head", [width, hidden, patch * patch * 3], rng)


def decode_views(z: Tensor, store: ParamStore, views: int, height: int, width: int, patch: int) -> Tensor:
    """(V * N_h * N_w, d) tokens -> (V, H, W, 3) images in [0, 1]."""
    expected = views * (height // patch) * (width // patch)
    if z.shape[0] != expected:
        raise ValueError(f"expected {expected} Gaussian tokens for {views} views, got {z.shape[0]}")
    patches = mlp(store, "vae.head", z, depth=2)
    return T.sigmoid(unpatchify_views(patches, views, height, width, patch))


def has_image_decoder(store: ParamStore) -> bool:
    return any(name.startswith(PREFIX) for name in store)
