"""Multi-view branch: log-uniform depth hypotheses, plane-sweep cost volume,
box aggregation, softmax probabilities, soft-argmin depth and matching confidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatch, InvalidRange, NonPositiveTemperature, NoSources
from .geometry import CameraIntrinsics, Pose, reprojection_rays, to_gray
from .imgproc import box_sum


@dataclass(frozen=True, eq=False)
class HypothesisSet:
    bins: np.ndarray
    d_min: float
    d_max: float

    def __len__(self):
        return len(self.bins)

    def local_spacing(self, depth: np.ndarray) -> np.ndarray:
        """Width of the bin interval containing each depth (edge intervals outside the range)."""
        depth = np.asarray(depth, dtype=np.float64)
        if len(self.bins) < 2:
            return np.zeros_like(depth)
        gaps = np.diff(self.bins)
        idx = np.clip(np.searchsorted(self.bins, depth, side="right") - 1, 0, len(gaps) - 1)
        return gaps[idx]


def sample_hypotheses(d_min: float, d_max: float, n: int) -> HypothesisSet:
    """``n`` depths uniformly spaced in log depth from ``d_min`` to ``d_max`` inclusive."""
    if not (d_min > 0 and math.isfinite(d_max)):
        raise InvalidRange(f"need 0 < d_min, got d_min={d_min}, d_max={d_max}")
    if n == 1 and d_min == d_max:
        return HypothesisSet(np.array([float(d_min)]), float(d_min), float(d_max))
    if n < 2 or not d_min < d_max:
        raise InvalidRange(f"need d_min < d_max and n >= 2, got ({d_min}, {d_max}, {n})")
    lo, hi = math.log(d_min), math.log(d_max)
    bins = np.exp(lo + np.arange(n) * ((hi - lo) / (n - 1)))
    bins[0], bins[-1] = d_min, d_max
    return HypothesisSet(bins, float(d_min), float(d_max))


@dataclass(eq=False)
class CostVolume:
    """Per-pixel, per-bin cost (N, H, W); NaN where ``valid_count`` is zero."""

    cost: np.ndarray
    valid_count: np.ndarray

    @property
    def shape(self):
        return self.cost.shape

    @property
    def valid(self) -> np.ndarray:
        return self.valid_count > 0


@dataclass(eq=False)
class ProbabilityVolume:
    """Per-pixel distribution over bins (N, H, W); ``valid`` marks pixels with any valid bin."""

    prob: np.ndarray
    valid: np.ndarray

    @property
    def shape(self):
        return self.prob.shape


def _patch_mean_strict(values: np.ndarray, radius: int) -> np.ndarray:
    """Patch mean that is NaN unless every sample in the patch is valid."""
    ok = np.isfinite(values)
    n = (2 * radius + 1) ** 2
    total = box_sum(np.where(ok, values, 0.0), radius)
    count = box_sum(ok.astype(np.float64), radius)
    return np.where(count == n, total / n, np.nan)


def _ncc_cost(ref: np.ndarray, warped: np.ndarray, radius: int, eps: float = 1e-12) -> np.ndarray:
    ok = np.isfinite(warped) & np.isfinite(ref)
    n = (2 * radius + 1) ** 2
    r = np.where(ok, ref, 0.0)
    w = np.where(ok, warped, 0.0)
    count = box_sum(ok.astype(np.float64), radius)
    mr = box_sum(r, radius) / n
    mw = box_sum(w, radius) / n
    var_r = box_sum(r * r, radius) / n - mr * mr
    var_w = box_sum(w * w, radius) / n - mw * mw
    cov = box_sum(r * w, radius) / n - mr * mw
    denom = np.maximum(var_r, 0.0) * np.maximum(var_w, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ncc = np.where(denom > eps, cov / np.sqrt(denom), 0.0)
    return np.where(count == n, 1.0 - np.clip(ncc, -1.0, 1.0), np.nan)


def _warp_stack(src: np.ndarray, ray: np.ndarray, offset: np.ndarray, bins: np.ndarray) -> np.ndarray:
    s = bins[:, None, None, None] * ray[None] + offset[None, :, None, None]
    front = s[:, 2] > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        us = np.where(front, s[:, 0] / s[:, 2], np.nan)
        vs = np.where(front, s[:, 1] / s[:, 2], np.nan)
    return kernels.gather_bilinear(src, us, vs)


def build_cost_volume(
    ref: np.ndarray,
    srcs: list,
    rel_poses: list,
    k: CameraIntrinsics,
    hyp: HypothesisSet,
    cost: str = "ssd",
    patch_radius: int | None = None,
) -> CostVolume:
    """Fronto-parallel plane sweep of every source against ``ref``.

    For each bin the source is warped at that constant depth and compared to
    the reference with an SSD or NCC patch cost; the per-bin cost is the mean
    over the sources that produced a valid patch.
    """
    if not srcs:
        raise NoSources("at least one source image is required")
    if len(srcs) != len(rel_poses):
        raise DimensionMismatch(f"{len(srcs)} sources but {len(rel_poses)} poses")
    if cost not in ("ssd", "ncc"):
        raise ValueError(f"unknown cost {cost!r}")
    if patch_radius is None:
        patch_radius = 1 if cost == "ssd" else 2
    ref_g = to_gray(ref)
    if ref_g.shape != k.shape:
        raise DimensionMismatch(f"reference shape {ref_g.shape} != intrinsics {k.shape}")

    bins = np.asarray(hyp.bins, dtype=np.float64)
    total = np.zeros((len(bins),) + k.shape)
    count = np.zeros((len(bins),) + k.shape, dtype=np.int32)
    for src, pose in zip(srcs, rel_poses):
        src_g = to_gray(src)
        if src_g.shape != k.shape:
            raise DimensionMismatch(f"source shape {src_g.shape} != intrinsics {k.shape}")
        ray, offset = reprojection_rays(pose, k, k)
        if cost == "ssd":
            sq = kernels.sweep_sq_diff(ref_g, src_g, ray, offset, bins)
            c = _patch_mean_strict(sq, patch_radius)
        else:
            warped = _warp_stack(src_g, ray, offset, bins)
            c = _ncc_cost(ref_g[None], warped, patch_radius)
        ok = np.isfinite(c)
        # sources accumulate in list order for bit-determinism
        total += np.where(ok, c, 0.0)
        count += ok
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return CostVolume(mean, count)


def aggregate(volume: CostVolume, radius: int) -> CostVolume:
    """Per-bin box mean over valid entries; entries invalid at the centre stay invalid."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if radius == 0:
        return volume
    ok = volume.valid
    num = box_sum(np.where(ok, volume.cost, 0.0), radius)
    den = box_sum(ok.astype(np.float64), radius)
    with np.errstate(invalid="ignore", divide="ignore"):
        cost = np.where(ok, num / den, np.nan)
    return CostVolume(cost, volume.valid_count)


FLAT_COST = 1e-12


def auto_temperature(volume: CostVolume, factor: float = 0.01) -> float:
    """``factor`` times the mean valid cost; 1.0 for a flat volume.

    A mean cost at or below ``FLAT_COST`` is rounding noise from warps that
    should be exact (identity poses), so it is not allowed to set the scale.
    """
    vals = volume.cost[volume.valid]
    mean = float(vals.mean()) if vals.size else 0.0
    return factor * mean if mean > FLAT_COST else 1.0


def cost_to_probability(volume: CostVolume, temperature: float) -> ProbabilityVolume:
    if not temperature > 0:
        raise NonPositiveTemperature(f"temperature must be positive, got {temperature}")
    ok = volume.valid
    logits = np.where(ok, -volume.cost / temperature, -np.inf)
    pix_valid = ok.any(axis=0)
    peak = np.max(logits, axis=0)
    peak = np.where(pix_valid, peak, 0.0)
    e = np.where(ok, np.exp(logits - peak), 0.0)
    z = e.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        prob = np.where(pix_valid, e / np.where(pix_valid, z, 1.0), 0.0)
    return ProbabilityVolume(prob, pix_valid)


def regress_depth(p: ProbabilityVolume, hyp: HypothesisSet) -> np.ndarray:
    """Soft-argmin depth: sum over bins of depth times probability; NaN where invalid."""
    if p.prob.shape[0] != len(hyp):
        raise DimensionMismatch(f"{p.prob.shape[0]} probability bins vs {len(hyp)} hypotheses")
    bins = np.asarray(hyp.bins, dtype=np.float64)
    depth = np.zeros(p.prob.shape[1:])
    for b, pk in zip(bins, p.prob):
        depth += b * pk
    # rounding can push a convex combination a hair outside the bin range
    depth = np.clip(depth, bins[0], bins[-1])
    return np.where(p.valid, depth, np.nan)


def central_argmax(prob: np.ndarray) -> np.ndarray:
    """Argmax over axis 0; exact ties resolve to the middle tied bin."""
    peak = prob.max(axis=0)
    tied = prob == peak
    n_tied = tied.sum(axis=0)
    rank = np.cumsum(tied, axis=0)
    target = n_tied // 2 + 1
    return np.argmax(tied & (rank == target), axis=0)


def matching_confidence(p: ProbabilityVolume, window: int = 1) -> np.ndarray:
    """Probability mass within +-window bins of the argmax, in [0, 1]; NaN where invalid."""
    if window < 0:
        raise ValueError("window must be non-negative")
    n = p.prob.shape[0]
    best = central_argmax(p.prob)
    idx = np.arange(n)[:, None, None]
    near = np.abs(idx - best[None]) <= window
    conf = np.clip(np.where(near, p.prob, 0.0).sum(axis=0), 0.0, 1.0)
    return np.where(p.valid, conf, np.nan)


@dataclass
class SweepConfig:
    d_min: float = 1.0
    d_max: float = 100.0
    n_bins: int = 128
    cost: str = "ssd"
    patch_radius: int | None = None
    aggregate_radius: int = 2
    temperature: float | str = "auto"
    temperature_factor: float = 0.01
    window: int = 1
    downsample: int = 4


@dataclass(eq=False)
class MultiViewResult:
    depth: np.ndarray
    confidence: np.ndarray
    prob: ProbabilityVolume
    hypotheses: HypothesisSet
    temperature: float


def multi_view_depth(
    ref: np.ndarray,
    srcs: list,
    rel_poses: list[Pose],
    k: CameraIntrinsics,
    config: SweepConfig | None = None,
) -> MultiViewResult:
    """Run the whole multi-view branch at the resolution of the given images."""
    config = config or SweepConfig()
    hyp = sample_hypotheses(config.d_min, config.d_max, config.n_bins)
    vol = build_cost_volume(ref, srcs, rel_poses, k, hyp, config.cost, config.patch_radius)
    vol = aggregate(vol, config.aggregate_radius)
    if config.temperature == "auto":
        temp = auto_temperature(vol, config.temperature_factor)
    else:
        temp = float(config.temperature)
    prob = cost_to_probability(vol, temp)
    return MultiViewResult(
        depth=regress_depth(prob, hyp),
        confidence=matching_confidence(prob, config.window),
        prob=prob,
        hypotheses=hyp,
        temperature=temp,
    )
