"""Single-view prior: synthetic or file-loaded depth with confidence, plus
median-ratio scale alignment against reliable multi-view depth."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .dataset_io import read_pfm
from .errors import InsufficientAnchors, InvalidSpec
from .geometry import depth_valid

MIN_ANCHORS = 100
DEFAULT_FILE_CONFIDENCE = 0.5


@dataclass(eq=False)
class PriorDepth:
    depth: np.ndarray
    confidence: np.ndarray
    scale_resolved: bool = False
    scale: float = 1.0


@dataclass
class PriorSpec:
    """Corruption model for synthetic priors.

    ``smooth_err_amp`` bounds the relative error field; ``smooth_err_scale``
    is its correlation length in pixels.
    """

    scale: float = 1.0
    smooth_err_amp: float = 0.2
    smooth_err_scale: float = 24.0
    seed: int = 0


def smooth_field(shape: tuple, amplitude: float, length: float, seed: int) -> np.ndarray:
    """Seeded band-limited field with ``max |field| == amplitude`` exactly."""
    if amplitude == 0:
        return np.zeros(shape)
    rng = np.random.default_rng(seed)
    f = gaussian_filter(rng.standard_normal(shape), length, mode="wrap")
    f -= f.mean()
    return f * (amplitude / np.max(np.abs(f)))


def synth_prior(gt: np.ndarray, spec: PriorSpec) -> PriorDepth:
    if not spec.scale > 0:
        raise InvalidSpec(f"prior scale must be positive, got {spec.scale}")
    if spec.smooth_err_amp < 0 or not spec.smooth_err_amp < 1:
        raise InvalidSpec("smooth_err_amp must lie in [0, 1)")
    if spec.smooth_err_scale <= 0:
        raise InvalidSpec("smooth_err_scale must be positive")
    gt = np.asarray(gt, dtype=np.float64)
    ok = depth_valid(gt)
    field = smooth_field(gt.shape, spec.smooth_err_amp, spec.smooth_err_scale, spec.seed)
    depth = np.where(ok, gt * spec.scale * (1.0 + field), np.nan)
    if spec.smooth_err_amp > 0:
        conf = np.clip(1.0 - np.abs(field) / spec.smooth_err_amp, 0.0, 1.0)
    else:
        conf = np.ones(gt.shape)
    conf = np.where(ok, conf, np.nan)
    return PriorDepth(depth, conf, scale_resolved=spec.scale == 1.0, scale=1.0)


def align_scale(
    prior: PriorDepth,
    anchor: np.ndarray,
    anchor_conf: np.ndarray,
    conf_threshold: float = 0.5,
) -> PriorDepth:
    """Rescale the prior by the median of anchor/prior over confident pixels."""
    anchor = np.asarray(anchor, dtype=np.float64)
    conf = np.asarray(anchor_conf, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        use = depth_valid(prior.depth) & depth_valid(anchor) & (conf >= conf_threshold)
    n = int(use.sum())
    if n < MIN_ANCHORS:
        raise InsufficientAnchors(f"{n} anchor pixels qualify, need {MIN_ANCHORS}")
    scale = float(np.median(anchor[use] / prior.depth[use]))
    return replace(prior, depth=prior.depth * scale, scale_resolved=True, scale=prior.scale * scale)


def load_prior(depth_path, confidence_path=None) -> PriorDepth:
    depth = read_pfm(depth_path).astype(np.float64)
    depth = np.where(depth_valid(depth), depth, np.nan)
    if confidence_path is not None:
        conf = np.clip(read_pfm(confidence_path).astype(np.float64), 0.0, 1.0)
    else:
        conf = np.full(depth.shape, DEFAULT_FILE_CONFIDENCE)
    return PriorDepth(depth, conf, scale_resolved=False)
