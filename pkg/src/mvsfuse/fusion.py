"""Adaptive fusion of single-view and multi-view depth.

Warping consistency (SSIM between the reference and sources warped with the
multi-view depth) vetoes multi-view depth where it is not photoconsistent;
the same SSIM test flags dynamic regions across a three-frame window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NoSources
from .geometry import CameraIntrinsics, Pose, depth_valid, relative_pose, to_gray, warp_source_to_ref
from .imgproc import ssim_map


@dataclass
class FusionConfig:
    ssim_window: int = 3  # half-width: 7x7 windows
    gamma: float = 1.0
    floor: float = 0.3
    reduce: str = "mean"
    dynamic_threshold: float = 0.7


@dataclass(eq=False)
class FusionResult:
    d_fuse: np.ndarray
    m_w: np.ndarray
    weight: np.ndarray


def _reduce(stack: list, how: str) -> np.ndarray:
    arr = np.stack(stack)
    ok = np.isfinite(arr)
    count = ok.sum(axis=0)
    if how == "mean":
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(ok, arr, 0.0).sum(axis=0) / count
    elif how == "min":
        out = np.where(ok, arr, np.inf).min(axis=0)
    else:
        raise ValueError(f"unknown reduction {how!r}")
    return np.where(count > 0, out, np.nan)


def warping_confidence(
    ref: np.ndarray,
    srcs: list,
    d_m: np.ndarray,
    rel_poses: list,
    k: CameraIntrinsics,
    ssim_window: int = 3,
    reduce: str = "mean",
) -> np.ndarray:
    """Map (1 + SSIM) / 2 between ``ref`` and each source warped with ``d_m``, reduced over sources."""
    if not srcs:
        raise NoSources("at least one source image is required")
    ref_g = to_gray(ref)
    scores = []
    for src, pose in zip(srcs, rel_poses):
        warped = warp_source_to_ref(to_gray(src), d_m, pose, k, k)
        scores.append(ssim_map(ref_g, warped, ssim_window))
    ssim = _reduce(scores, reduce)
    return np.where(np.isfinite(ssim), np.clip((1.0 + ssim) / 2.0, 0.0, 1.0), np.nan)


def fuse(
    d_s: np.ndarray,
    d_m: np.ndarray,
    m_s: np.ndarray,
    m_m: np.ndarray,
    m_w: np.ndarray,
    gamma: float = 1.0,
    floor: float = 0.3,
) -> FusionResult:
    """Per-pixel convex blend ``w * d_m + (1 - w) * d_s``.

    ``w = (m_m * m_w) ** gamma`` where ``m_w >= floor`` and zero otherwise.
    Where the two depths disagree by more than 100% of ``d_s`` and the prior
    is more confident than the multi-view evidence, ``w`` is forced to zero.
    """
    maps = [np.asarray(x, dtype=np.float64) for x in (d_s, d_m, m_s, m_m, m_w)]
    if len({m.shape for m in maps}) != 1:
        raise DimensionMismatch(f"map shapes differ: {[m.shape for m in maps]}")
    d_s, d_m, m_s, m_m, m_w = maps

    ds_ok = depth_valid(d_s)
    mv_ok = depth_valid(d_m) & np.isfinite(m_m) & np.isfinite(m_w)
    mm = np.where(mv_ok, m_m, 0.0)
    mw = np.where(mv_ok, m_w, 0.0)
    support = mm * mw
    passes = mv_ok & (mw >= floor)

    weight = np.where(passes, np.clip(support, 0.0, 1.0) ** gamma, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel_gap = np.abs(d_s - d_m) / d_s
    ms = np.where(np.isfinite(m_s), m_s, 0.0)
    veto = ds_ok & mv_ok & (rel_gap > 1.0) & (ms > support)
    weight = np.where(veto, 0.0, weight)
    # no prior: take multi-view depth outright where it passes the floor
    weight = np.where(~ds_ok & passes, 1.0, weight)
    weight = np.clip(weight, 0.0, 1.0)

    blend = weight * np.where(mv_ok, d_m, 0.0) + (1.0 - weight) * np.where(ds_ok, d_s, 0.0)
    d_fuse = np.where(weight == 0.0, d_s, np.where(weight == 1.0, d_m, blend))
    valid = (ds_ok & (weight < 1.0)) | (mv_ok & (weight > 0.0))
    valid &= ~(~ds_ok & ~passes)
    d_fuse = np.where(valid, d_fuse, np.nan)
    return FusionResult(d_fuse=d_fuse, m_w=m_w, weight=np.where(valid | ds_ok, weight, np.nan))


def dynamic_mask(
    prev,
    cur,
    nxt,
    candidate_mask: np.ndarray,
    depth: np.ndarray,
    k: CameraIntrinsics,
    threshold: float = 0.7,
    poses: tuple[Pose, Pose] | None = None,
    ssim_window: int = 3,
) -> np.ndarray:
    """Flag candidate pixels whose appearance is not explained by a static warp.

    ``prev``/``cur``/``nxt`` are frames with ``image`` and ``cam_to_world``.
    ``poses`` optionally overrides the current-to-previous and current-to-next
    relative poses. A candidate pixel is dynamic when the lower of the two
    SSIM scores is below ``threshold``, or when neither warp is valid.
    """
    cand = np.asarray(candidate_mask, dtype=bool)
    if cand.shape != k.shape or np.shape(depth) != k.shape:
        raise DimensionMismatch("mask, depth and intrinsics must share one shape")
    if poses is None:
        poses = (
            relative_pose(cur.cam_to_world, prev.cam_to_world),
            relative_pose(cur.cam_to_world, nxt.cam_to_world),
        )
    cur_g = to_gray(cur.image)
    scores = []
    for frame, pose in zip((prev, nxt), poses):
        warped = warp_source_to_ref(to_gray(frame.image), depth, pose, k, k)
        scores.append(ssim_map(cur_g, warped, ssim_window))
    worst = _reduce(scores, "min")
    with np.errstate(invalid="ignore"):
        flagged = ~np.isfinite(worst) | (worst < threshold)
    return cand & flagged
