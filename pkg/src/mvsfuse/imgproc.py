"""Small image-processing helpers: box sums, SSIM and resolution changes."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d, gaussian_filter

from .geometry import bilinear_sample

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def box_sum(a: np.ndarray, radius: int) -> np.ndarray:
    """Sum over a (2r+1)^2 window on the last two axes, zero outside the image.

    Each output is a direct sum of its window (no running sums), so results
    do not depend on position and are exact for integer-valued data.
    """
    a = np.asarray(a, dtype=np.float64)
    if radius == 0:
        return a.copy()
    ones = np.ones(2 * radius + 1)
    out = correlate1d(a, ones, axis=-1, mode="constant")
    return correlate1d(out, ones, axis=-2, mode="constant")


def ssim_map(a: np.ndarray, b: np.ndarray, radius: int = 3,
             c1: float = SSIM_C1, c2: float = SSIM_C2) -> np.ndarray:
    """Local SSIM over (2r+1)^2 windows of jointly valid pixels.

    NaN where either centre pixel is invalid.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ok = np.isfinite(a) & np.isfinite(b)
    x = np.where(ok, a, 0.0)
    y = np.where(ok, b, 0.0)
    n = box_sum(ok.astype(np.float64), radius)
    with np.errstate(invalid="ignore", divide="ignore"):
        inv = np.where(n > 0, 1.0 / n, 0.0)
    mx = box_sum(x, radius) * inv
    my = box_sum(y, radius) * inv
    vx = np.maximum(box_sum(x * x, radius) * inv - mx * mx, 0.0)
    vy = np.maximum(box_sum(y * y, radius) * inv - my * my, 0.0)
    cov = box_sum(x * y, radius) * inv - mx * my
    s = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return np.where(ok, s, np.nan)


def downsample_image(img: np.ndarray, factor: int) -> np.ndarray:
    """Gaussian pre-filter then keep every ``factor``-th pixel starting at 0.

    Decimating at offset 0 keeps pixel i at original pixel ``factor * i``,
    matching ``CameraIntrinsics.scaled(1 / factor)``.
    """
    img = np.asarray(img, dtype=np.float64)
    if factor == 1:
        return img.copy()
    sigma = (0.25 * factor, 0.25 * factor) + ((0,) if img.ndim == 3 else ())
    return gaussian_filter(img, sigma, mode="nearest")[::factor, ::factor]


def decimate(arr: np.ndarray, factor: int) -> np.ndarray:
    """Point-sample every ``factor``-th pixel (depth and confidence maps)."""
    return np.asarray(arr)[::factor, ::factor].copy()


def upsample_map(arr: np.ndarray, factor: int, shape: tuple) -> np.ndarray:
    """Bilinear upsampling back to ``shape``; NaN where the sample is invalid."""
    arr = np.asarray(arr, dtype=np.float64)
    if factor == 1:
        return arr.copy()
    v, u = np.mgrid[0 : shape[0], 0 : shape[1]]
    data = np.where(np.isfinite(arr), arr, np.nan)
    return bilinear_sample(data, u / factor, v / factor)
