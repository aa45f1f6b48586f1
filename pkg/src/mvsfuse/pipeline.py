"""One reference frame through both branches and the fusion step.

Inputs arrive at full resolution; the sweep, prior alignment and fusion run
at ``1 / downsample`` resolution and the outputs are upsampled back.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .fusion import FusionConfig, fuse, warping_confidence
from .geometry import CameraIntrinsics, Pose
from .imgproc import decimate, downsample_image, upsample_map
from .mono_prior import PriorDepth, align_scale
from .plane_sweep import MultiViewResult, SweepConfig, multi_view_depth

logger = logging.getLogger(__name__)

OUTPUT_MAPS = ("d_s", "d_m", "d_fuse", "m_m", "m_w", "weight")


@dataclass
class PipelineConfig:
    sweep: SweepConfig = field(default_factory=SweepConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    align: str = "auto"  # auto | always | never
    conf_threshold: float = 0.5


@dataclass(eq=False)
class Estimate:
    """Processing-resolution maps in ``low`` and full-resolution maps in ``full``."""

    low: dict
    full: dict
    multi_view: MultiViewResult
    prior: PriorDepth
    intrinsics: CameraIntrinsics


def estimate(
    ref: np.ndarray,
    srcs: list,
    rel_poses: list[Pose],
    k: CameraIntrinsics,
    prior: PriorDepth,
    config: PipelineConfig | None = None,
) -> Estimate:
    config = config or PipelineConfig()
    f = config.sweep.downsample
    k_low = k.scaled(1.0 / f)
    ref_low = downsample_image(ref, f)
    srcs_low = [downsample_image(s, f) for s in srcs]

    mv = multi_view_depth(ref_low, srcs_low, rel_poses, k_low, config.sweep)

    prior_low = PriorDepth(
        decimate(prior.depth, f), decimate(prior.confidence, f), prior.scale_resolved, prior.scale
    )
    if config.align == "always" or (config.align == "auto" and not prior.scale_resolved):
        prior_low = align_scale(prior_low, mv.depth, mv.confidence, config.conf_threshold)
        logger.debug("prior aligned with scale %.6f", prior_low.scale)

    fc = config.fusion
    m_w = warping_confidence(ref_low, srcs_low, mv.depth, rel_poses, k_low, fc.ssim_window, fc.reduce)
    fused = fuse(prior_low.depth, mv.depth, prior_low.confidence, mv.confidence, m_w, fc.gamma, fc.floor)

    low = {
        "d_s": prior_low.depth,
        "d_m": mv.depth,
        "d_fuse": fused.d_fuse,
        "m_s": prior_low.confidence,
        "m_m": mv.confidence,
        "m_w": m_w,
        "weight": fused.weight,
    }
    full = {name: upsample_map(arr, f, k.shape) for name, arr in low.items()}
    return Estimate(low=low, full=full, multi_view=mv, prior=prior_low, intrinsics=k_low)
