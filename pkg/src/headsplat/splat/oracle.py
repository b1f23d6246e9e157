"""Brute-force reference renderer.

Evaluates every Gaussian at every pixel, composites in global depth order
with no early termination, and is written entirely in autodiff tensor ops,
so its gradients come from the generic engine rather than the hand-written
rasterizer backward. Pixels are processed in chunks to bound memory.
"""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from .project import ProjectedGaussians
from .raster import ALPHA_MAX, E_FLOOR, Q_MAX, depth_order


def render_oracle(projected: ProjectedGaussians, height: int, width: int,
                  background=(1.0, 1.0, 1.0), chunk: int = 1024):
    """Returns (image Tensor (H, W, 3), alpha array (H, W))."""
    dtype = projected.geom.dtype
    bg = np.asarray(background, dtype=dtype)
    order = depth_order(projected)
    ys, xs = np.mgrid[0:height, 0:width]
    cx = (xs.reshape(-1, 1) + 0.5).astype(dtype)
    cy = (ys.reshape(-1, 1) + 0.5).astype(dtype)

    if order.size == 0:
        img = np.broadcast_to(bg, (height, width, 3)).copy()
        return T.Tensor(img, dtype=dtype), np.zeros((height, width))

    geom = projected.geom[order]
    opacity = T.as_tensor(projected.opacity).reshape(-1)[order]
    color = T.as_tensor(projected.color)[order]
    u, v = geom[:, 0], geom[:, 1]
    sxx, sxy, syy = geom[:, 2], geom[:, 3], geom[:, 4]
    det = sxx * syy - sxy * sxy
    ca, cb, cc = syy / det, -sxy / det, sxx / det

    rows, alphas = [], []
    for s in range(0, height * width, chunk):
        dx = T.Tensor(cx[s:s + chunk]) - u
        dy = T.Tensor(cy[s:s + chunk]) - v
        q = ca * dx * dx + cb * dx * dy * 2.0 + cc * dy * dy
        inside = (q.data <= Q_MAX).astype(dtype)
        w = (T.exp(q * -0.5) - E_FLOOR) * (inside / (1.0 - E_FLOOR))
        alpha = T.clip(opacity * w, None, ALPHA_MAX)
        log_keep = T.log(1.0 - alpha)
        log_t = T.cumsum(log_keep, axis=1) - log_keep
        contrib = alpha * T.exp(log_t)
        t_final = T.exp(T.sum_(log_keep, axis=1, keepdims=True))
        rows.append(T.matmul(contrib, color) + t_final * bg)
        alphas.append(1.0 - t_final.data[:, 0])
    image = T.concat(rows, axis=0).reshape(height, width, 3)
    return image, np.concatenate(alphas).reshape(height, width)
