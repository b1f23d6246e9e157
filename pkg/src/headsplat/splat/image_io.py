"""8-bit PNG encoding of [0, 1] images (values treated as already sRGB-encoded)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_png(img: np.ndarray, path) -> None:
    """Write an (H, W, 3) image; output bytes depend only on the pixel values."""
    Image.fromarray(to_uint8(img), mode="RGB").save(Path(path), format="PNG", optimize=False, compress_level=6)


def read_png(path) -> np.ndarray:
    """(H, W, 3) float64 in [0, 1]."""
    with Image.open(Path(path)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
