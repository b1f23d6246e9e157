"""Training objective and image-quality metrics.

The objective is ``lambda_2 * L2 + lambda_p * L_perc`` where each term sums a
mean-pooled contribution from the rendered-Gaussian views and, when present,
one from the image-head views. The perceptual term is pluggable; the
default stand-in compares image gradients over a 3-level pyramid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.ndimage import correlate1d

from . import tensor as T
from .tensor import Tensor

PSNR_CAP = 99.0


@dataclass(frozen=True)
class LossWeights:
    l2: float = 1.0
    perceptual: float = 0.5

    def __post_init__(self):
        if self.l2 < 0 or self.perceptual < 0:
            raise ValueError(f"loss weights must be non-negative, got {self}")


def _downsample(x: Tensor) -> Tensor:
    v, h, w, c = x.shape
    return T.mean(x.reshape(v, h // 2, 2, w // 2, 2, c), axis=(2, 4))


def gradient_pyramid_loss(pred: Tensor, truth, levels: int = 3) -> Tensor:
    """Mean L1 distance between horizontal/vertical image gradients, averaged over pyramid levels.

    Images are (V, H, W, 3). Levels stop early once an extent is odd or < 2.
    """
    pred, truth = T.as_tensor(pred), T.as_tensor(truth)
    terms = []
    for lvl in range(levels):
        h, w = pred.shape[1], pred.shape[2]
        if h < 2 or w < 2:
            break
        ex = pred[:, :, 1:] - pred[:, :, :-1] - (truth[:, :, 1:] - truth[:, :, :-1])
        ey = pred[:, 1:] - pred[:, :-1] - (truth[:, 1:] - truth[:, :-1])
        terms.append(T.mean(T.abs_(ex)) + T.mean(T.abs_(ey)))
        if lvl + 1 == levels or h % 2 or w % 2:
            break
        pred, truth = _downsample(pred), _downsample(truth)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


PerceptualLoss = Callable[[Tensor, object], Tensor]


def _pair(pred, truth, what: str):
    pred = T.as_tensor(pred)
    truth = np.asarray(getattr(truth, "data", truth))
    if pred.shape != truth.shape:
        raise ValueError(f"{what}: prediction shape {pred.shape} is not paired with ground truth {truth.shape}")
    return pred, Tensor(truth, dtype=pred.dtype)


def total_loss(renders, render_truth, avas=None, avas_truth=None, weights: LossWeights = LossWeights(),
               perceptual: PerceptualLoss = gradient_pyramid_loss) -> tuple[Tensor, dict]:
    """Weighted objective; returns (scalar loss, dict of float components)."""
    branches = [("render",) + _pair(renders, render_truth, "render views")]
    if avas is not None:
        if avas_truth is None:
            raise ValueError("image-head views were given without ground truth")
        branches.append(("avas",) + _pair(avas, avas_truth, "image-head views"))
    elif avas_truth is not None:
        raise ValueError("image-head ground truth was given without predictions")

    parts: dict[str, float] = {}
    total = None
    for name, pred, truth in branches:
        l2 = T.mean(T.square(pred - truth))
        term = l2 * weights.l2
        parts[f"{name}_l2"] = l2.item()
        if weights.perceptual > 0:
            perc = perceptual(pred, truth)
            parts[f"{name}_perceptual"] = perc.item()
            term = term + perc * weights.perceptual
        total = term if total is None else total + term
    parts["total"] = total.item()
    return total, parts


# -- metrics ---------------------------------------------------------------

def _check_same(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """PSNR in dB for images in [0, 1]; identical images give the 99 dB cap."""
    a, b = _check_same(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, -10.0 * math.log10(mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def luminance(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3 and img.shape[-1] == 3:
        return img @ np.array([0.299, 0.587, 0.114])
    return img


def ssim(a, b, window: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over the valid region of a Gaussian-weighted window (unit data range)."""
    a, b = _check_same(a, b)
    a, b = luminance(a), luminance(b)
    if a.shape[0] < window or a.shape[1] < window:
        raise ValueError(f"image {a.shape} is smaller than the {window}x{window} SSIM window")
    kern = gaussian_window(window, sigma)
    pad = window // 2

    def blur(x):
        y = correlate1d(correlate1d(x, kern, axis=0, mode="nearest"), kern, axis=1, mode="nearest")
        return y[pad:-pad, pad:-pad]

    c1, c2 = k1 ** 2, k2 ** 2
    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a ** 2
    var_b = blur(b * b) - mu_b ** 2
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _mean_se(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return float("nan"), float("nan")
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se


def metric_report(pairs) -> dict:
    """Per-view PSNR/SSIM plus mean and standard error.

    ``pairs`` is an iterable of ``(view_key, prediction, truth)``.
    """
    views = []
    for key, pred, truth in pairs:
        views.append({"view": key, "psnr": psnr(pred, truth), "ssim": ssim(pred, truth)})
    p_mean, p_se = _mean_se([v["psnr"] for v in views])
    s_mean, s_se = _mean_se([v["ssim"] for v in views])
    return {
        "views": views,
        "count": len(views),
        "psnr": {"mean": p_mean, "stderr": p_se},
        "ssim": {"mean": s_mean, "stderr": s_se},
        "unavailable": ["LPIPS", "DreamSim", "CSIM"],
    }
