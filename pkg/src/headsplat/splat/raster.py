"""Tiled front-to-back rasterizer (numba) with an analytic backward pass.

Per-pixel semantics shared with :mod:`.oracle`:

* density ``w = (exp(-q/2) - e^-4.5) / (1 - e^-4.5)`` for Mahalanobis
  ``q <= 9`` and 0 outside, so every Gaussian has compact 3-sigma support
  and ``w`` is continuous;
* ``alpha = min(opacity * w, 0.999)``;
* Gaussians composite in ascending camera depth, ties by point index.

The tiled path stops a pixel once its transmittance drops below ``T_MIN``,
which bounds its deviation from the oracle by ``T_MIN`` per channel.
The sorted order is treated as constant when differentiating.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .. import tensor as T
from .project import SUPPORT_SIGMA, ProjectedGaussians

ALPHA_MAX = 0.999
Q_MAX = SUPPORT_SIGMA ** 2
E_FLOOR = math.exp(-0.5 * Q_MAX)
T_MIN = 1e-6


@njit(cache=True)
def _bin(geom, valid, order, height, width, tile):
    tiles_x = (width + tile - 1) // tile
    tiles_y = (height + tile - 1) // tile
    n_tiles = tiles_x * tiles_y
    n = order.shape[0]
    lo_x = np.empty(n, np.int64)
    hi_x = np.empty(n, np.int64)
    lo_y = np.empty(n, np.int64)
    hi_y = np.empty(n, np.int64)
    counts = np.zeros(n_tiles + 1, np.int64)
    for k in range(n):
        i = order[k]
        lo_x[k] = 1
        hi_x[k] = 0
        if not valid[i]:
            continue
        ex = SUPPORT_SIGMA * math.sqrt(geom[i, 2])
        ey = SUPPORT_SIGMA * math.sqrt(geom[i, 4])
        # pixel p is covered when |p + 0.5 - u| <= ex
        px0 = max(0, int(math.ceil(geom[i, 0] - ex - 0.5)))
        px1 = min(width - 1, int(math.floor(geom[i, 0] + ex - 0.5)))
        py0 = max(0, int(math.ceil(geom[i, 1] - ey - 0.5)))
        py1 = min(height - 1, int(math.floor(geom[i, 1] + ey - 0.5)))
        if px0 > px1 or py0 > py1:
            continue
        lo_x[k] = px0 // tile
        hi_x[k] = px1 // tile
        lo_y[k] = py0 // tile
        hi_y[k] = py1 // tile
        for ty in range(lo_y[k], hi_y[k] + 1):
            for tx in range(lo_x[k], hi_x[k] + 1):
                counts[ty * tiles_x + tx + 1] += 1
    offsets = np.cumsum(counts)
    ids = np.empty(offsets[-1], np.int64)
    fill = offsets[:-1].copy()
    for k in range(n):
        if lo_x[k] > hi_x[k]:
            continue
        for ty in range(lo_y[k], hi_y[k] + 1):
            for tx in range(lo_x[k], hi_x[k] + 1):
                t = ty * tiles_x + tx
                ids[fill[t]] = order[k]
                fill[t] += 1
    return offsets, ids


@njit(cache=True)
def _conics(geom):
    """Inverse 2D covariances (a, b, c) with q = a dx^2 + 2 b dx dy + c dy^2."""
    n = geom.shape[0]
    out = np.empty((n, 3))
    for i in range(n):
        sxx, sxy, syy = geom[i, 2], geom[i, 3], geom[i, 4]
        det = sxx * syy - sxy * sxy
        out[i, 0] = syy / det
        out[i, 1] = -sxy / det
        out[i, 2] = sxx / det
    return out


@njit(cache=True)
def _forward(geom, opacity, color, background, offsets, ids, height, width, tile, t_min):
    tiles_x = (width + tile - 1) // tile
    conic = _conics(geom)
    image = np.empty((height, width, 3))
    final_t = np.empty((height, width))
    n_used = np.zeros((height, width), np.int64)
    for py in range(height):
        for px in range(width):
            t_idx = (py // tile) * tiles_x + px // tile
            start, stop = offsets[t_idx], offsets[t_idx + 1]
            cx, cy = px + 0.5, py + 0.5
            trans = 1.0
            r = 0.0
            g = 0.0
            b = 0.0
            used = 0
            for k in range(start, stop):
                i = ids[k]
                ca, cb, cc = conic[i, 0], conic[i, 1], conic[i, 2]
                dx = cx - geom[i, 0]
                dy = cy - geom[i, 1]
                q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                used = k - start + 1
                if q > Q_MAX:
                    continue
                w = (math.exp(-0.5 * q) - E_FLOOR) / (1.0 - E_FLOOR)
                a = min(opacity[i] * w, ALPHA_MAX)
                r += color[i, 0] * a * trans
                g += color[i, 1] * a * trans
                b += color[i, 2] * a * trans
                trans *= 1.0 - a
                if trans < t_min:
                    break
            image[py, px, 0] = r + trans * background[0]
            image[py, px, 1] = g + trans * background[1]
            image[py, px, 2] = b + trans * background[2]
            final_t[py, px] = trans
            n_used[py, px] = used
    return image, final_t, n_used


@njit(cache=True)
def _backward(geom, opacity, color, background, offsets, ids, height, width, tile, n_used, final_t, grad_img):
    tiles_x = (width + tile - 1) // tile
    n = geom.shape[0]
    conic = _conics(geom)
    g_geom = np.zeros((n, 5))
    g_conic = np.zeros((n, 3))
    g_opacity = np.zeros(n)
    g_color = np.zeros((n, 3))
    max_len = 0
    for t in range(offsets.shape[0] - 1):
        max_len = max(max_len, offsets[t + 1] - offsets[t])
    alphas = np.empty(max_len)
    trans_before = np.empty(max_len)
    for py in range(height):
        for px in range(width):
            used = n_used[py, px]
            if used == 0:
                continue
            t_idx = (py // tile) * tiles_x + px // tile
            start = offsets[t_idx]
            cx, cy = px + 0.5, py + 0.5
            gr, gg, gb = grad_img[py, px, 0], grad_img[py, px, 1], grad_img[py, px, 2]
            trans = 1.0
            for j in range(used):
                i = ids[start + j]
                ca, cb, cc = conic[i, 0], conic[i, 1], conic[i, 2]
                dx = cx - geom[i, 0]
                dy = cy - geom[i, 1]
                q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                trans_before[j] = trans
                if q > Q_MAX:
                    alphas[j] = -1.0
                    continue
                w = (math.exp(-0.5 * q) - E_FLOOR) / (1.0 - E_FLOOR)
                a = min(opacity[i] * w, ALPHA_MAX)
                alphas[j] = a
                trans *= 1.0 - a
            # after = sum_{later} c alpha T + T_final * background
            ar = final_t[py, px] * background[0]
            ag = final_t[py, px] * background[1]
            ab = final_t[py, px] * background[2]
            for j in range(used - 1, -1, -1):
                a = alphas[j]
                if a < 0.0:
                    continue
                i = ids[start + j]
                tb = trans_before[j]
                g_color[i, 0] += gr * a * tb
                g_color[i, 1] += gg * a * tb
                g_color[i, 2] += gb * a * tb
                inv = 1.0 / (1.0 - a)
                g_alpha = (gr * (color[i, 0] * tb - ar * inv) + gg * (color[i, 1] * tb - ag * inv)
                           + gb * (color[i, 2] * tb - ab * inv))
                ar += color[i, 0] * a * tb
                ag += color[i, 1] * a * tb
                ab += color[i, 2] * a * tb
                ca, cb, cc = conic[i, 0], conic[i, 1], conic[i, 2]
                dx = cx - geom[i, 0]
                dy = cy - geom[i, 1]
                q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                ex = math.exp(-0.5 * q)
                w = (ex - E_FLOOR) / (1.0 - E_FLOOR)
                if opacity[i] * w > ALPHA_MAX:
                    continue
                g_opacity[i] += g_alpha * w
                g_q = g_alpha * opacity[i] * (-0.5 * ex / (1.0 - E_FLOOR))
                g_geom[i, 0] += g_q * -(2.0 * ca * dx + 2.0 * cb * dy)
                g_geom[i, 1] += g_q * -(2.0 * cb * dx + 2.0 * cc * dy)
                g_conic[i, 0] += g_q * dx * dx
                g_conic[i, 1] += g_q * 2.0 * dx * dy
                g_conic[i, 2] += g_q * dy * dy
    # conic -> covariance: dL/dSigma = -A G A with G the symmetric conic gradient
    for i in range(n):
        ca, cb, cc = conic[i, 0], conic[i, 1], conic[i, 2]
        g00, g01, g11 = g_conic[i, 0], 0.5 * g_conic[i, 1], g_conic[i, 2]
        # M = G A
        m00 = g00 * ca + g01 * cb
        m01 = g00 * cb + g01 * cc
        m10 = g01 * ca + g11 * cb
        m11 = g01 * cb + g11 * cc
        s00 = -(ca * m00 + cb * m10)
        s01 = -(ca * m01 + cb * m11)
        s11 = -(cb * m01 + cc * m11)
        g_geom[i, 2] += s00
        g_geom[i, 3] += 2.0 * s01
        g_geom[i, 4] += s11
    return g_geom, g_opacity, g_color


def depth_order(projected: ProjectedGaussians) -> np.ndarray:
    """Indices of the valid Gaussians sorted by depth, ties by index."""
    idx = np.flatnonzero(projected.valid)
    return idx[np.argsort(projected.depth[idx], kind="stable")]


def render_tiled(projected: ProjectedGaussians, height: int, width: int,
                 background=(1.0, 1.0, 1.0), tile: int = 16, t_min: float = T_MIN):
    """Rasterize projected Gaussians; returns (image Tensor (H, W, 3), alpha array (H, W))."""
    if tile < 1:
        raise ValueError(f"tile size must be at least 1, got {tile}")
    geom_t, op_t, col_t = projected.geom, T.as_tensor(projected.opacity), T.as_tensor(projected.color)
    dtype = geom_t.dtype
    geom = np.ascontiguousarray(geom_t.data, dtype=np.float64)
    opacity = np.ascontiguousarray(op_t.data, dtype=np.float64).reshape(-1)
    color = np.ascontiguousarray(col_t.data, dtype=np.float64)
    bg = np.asarray(background, dtype=np.float64)
    order = depth_order(projected)
    offsets, ids = _bin(geom, projected.valid, order, height, width, tile)
    image, final_t, n_used = _forward(geom, opacity, color, bg, offsets, ids, height, width, tile, t_min)

    def backward(g):
        gg, go, gc = _backward(geom, opacity, color, bg, offsets, ids, height, width, tile, n_used, final_t,
                               np.ascontiguousarray(g, dtype=np.float64))
        return gg.astype(dtype), go.reshape(op_t.shape).astype(dtype), gc.astype(dtype)

    out = T.apply("rasterize", (geom_t, op_t, col_t), image.astype(dtype), backward)
    return out, 1.0 - final_t
