"""Depth metrics, confidence calibration, the robustness score and the
noise-level benchmark with its CSV/SVG report."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset_io import read_csv, write_csv
from .errors import EmptyList, EmptyMask, NoValidPixels
from .geometry import depth_valid
from .mono_prior import PriorDepth, PriorSpec, load_prior, synth_prior
from .pipeline import PipelineConfig, estimate
from .pose_bench import DEFAULT_LEVELS, NoiseAssignment, NoiseLevel, apply_noise_level, sample_windows
from .scene_synth import sub_seed

BRANCHES = ("d_s", "d_m", "d_fuse")
REPORT_HEADER = ["level", "branch", "abs_rel", "sq_rel", "rmse", "n_pixels", "mean_weight", "mean_mw"]
SUMMARY_HEADER = ["branch", "r_rel"]


@dataclass(frozen=True)
class MetricSet:
    abs_rel: float
    sq_rel: float
    rmse: float
    n_pixels: int


def _eval_mask(pred, gt, min_depth, max_depth) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return depth_valid(pred) & depth_valid(gt) & (gt >= min_depth) & (gt <= max_depth)


def depth_metrics(pred, gt, min_depth: float = 0.5, max_depth: float = 100.0, mask=None) -> MetricSet:
    """AbsRel, SqRel and RMSE over pixels where both maps are valid and gt is within the caps."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    sel = _eval_mask(pred, gt, min_depth, max_depth)
    if mask is not None:
        sel &= np.asarray(mask, dtype=bool)
    n = int(sel.sum())
    if n == 0:
        raise NoValidPixels("no pixel qualifies for evaluation")
    d, g = pred[sel], gt[sel]
    err = d - g
    return MetricSet(
        abs_rel=float(np.mean(np.abs(err) / g)),
        sq_rel=float(np.mean(err * err / g)),
        rmse=float(np.sqrt(np.mean(err * err))),
        n_pixels=n,
    )


def valid_mask(pred, gt) -> np.ndarray:
    """Pixels whose relative error is below 1."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    ok = depth_valid(gt) & np.isfinite(pred)
    with np.errstate(invalid="ignore"):
        return ok & (np.abs(pred - gt) < gt)


def confidence_calibration(conf, pred, gt) -> float:
    """Mean |conf - (1 - relative error)| over the valid mask."""
    conf = np.asarray(conf, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    omega = valid_mask(pred, gt) & np.isfinite(conf)
    if not omega.any():
        raise EmptyMask("no pixel has relative error below 1")
    g = gt[omega]
    target = 1.0 - np.abs(pred[omega] - g) / g
    return float(np.mean(np.abs(conf[omega] - target)))


def r_rel(abs_rels) -> float:
    """Mean plus population standard deviation of the AbsRel values across noise levels."""
    xs = np.asarray(list(abs_rels), dtype=np.float64)
    if xs.size == 0:
        raise EmptyList("r_rel needs at least one value")
    return float(xs.mean() + xs.std())


# --- benchmark ------------------------------------------------------------


@dataclass
class PriorConfig:
    source: str = "synthetic"  # synthetic | file
    scale: float = 1.0
    smooth_err_amp: float = 0.2
    smooth_err_scale: float = 24.0
    align: str = "auto"  # auto | always | never; applied through PipelineConfig
    conf_threshold: float = 0.5


@dataclass
class EvalConfig:
    min_depth: float = 0.5
    max_depth: float = 100.0


@dataclass
class LevelRow:
    level: str
    metrics: dict
    mean_weight: float
    mean_mw: float


@dataclass
class BenchmarkReport:
    rows: list
    r_rel: dict
    config: dict = field(default_factory=dict)
    seed: int = 0


def frame_prior(seq, index: int, prior_cfg: PriorConfig, seed: int) -> PriorDepth:
    """Single-view prior for one frame; identical for every noise level."""
    frame = seq.frames[index]
    if prior_cfg.source == "file":
        if frame.prior_depth is None:
            raise ValueError(f"frame {index} has no prior depth file")
        return PriorDepth(
            np.where(depth_valid(frame.prior_depth), frame.prior_depth.astype(np.float64), np.nan),
            np.full(frame.prior_depth.shape, 0.5),
            scale_resolved=False,
        )
    if frame.gt_depth is None:
        raise ValueError(f"frame {index} has no ground truth to synthesise a prior from")
    spec = PriorSpec(
        scale=prior_cfg.scale,
        smooth_err_amp=prior_cfg.smooth_err_amp,
        smooth_err_scale=prior_cfg.smooth_err_scale,
        seed=sub_seed(seed, "prior", index),
    )
    return synth_prior(frame.gt_depth, spec)


def _mean_valid(arr) -> tuple:
    arr = np.asarray(arr, dtype=np.float64)
    ok = np.isfinite(arr)
    return float(arr[ok].sum()), int(ok.sum())


def _run_sample(seq, sample, priors, pipe_cfg, eval_cfg):
    est = estimate(sample.ref, sample.srcs, sample.rel_poses, seq.intrinsics, priors[sample.ref_index], pipe_cfg)
    gt = seq.frames[sample.ref_index].gt_depth
    metrics = {
        b: depth_metrics(est.full[b], gt, eval_cfg.min_depth, eval_cfg.max_depth) for b in BRANCHES
    }
    return metrics, _mean_valid(est.low["weight"]), _mean_valid(est.low["m_w"])


def run_benchmark(
    seq,
    prior_cfg: PriorConfig | None = None,
    pipe_cfg: PipelineConfig | None = None,
    levels=DEFAULT_LEVELS,
    seed: int = 0,
    eval_cfg: EvalConfig | None = None,
    jobs: int | None = 1,
    config_snapshot: dict | None = None,
    noise_seed: int | None = None,
) -> BenchmarkReport:
    """Evaluate every 3-frame sample of ``seq`` under each noise level.

    Per-level metrics are means of per-sample metrics; ``n_pixels`` is the
    total. Samples may run on several threads; results are reduced in
    sample order, so the report does not depend on ``jobs``. The +/- split
    of the coefficient levels is drawn from ``noise_seed`` (derived from
    ``seed`` when omitted).
    """
    prior_cfg = prior_cfg or PriorConfig()
    pipe_cfg = pipe_cfg or PipelineConfig()
    eval_cfg = eval_cfg or EvalConfig()
    levels = [NoiseLevel.parse(x) for x in levels]
    if not levels:
        raise EmptyList("at least one noise level is required")

    refs = sample_windows(len(seq.frames))
    priors = {r: frame_prior(seq, r, prior_cfg, seed) for r in refs}
    assignment = NoiseAssignment.balanced(
        len(refs), sub_seed(seed, "noise") if noise_seed is None else noise_seed
    )
    tasks = [(li, s) for li, lvl in enumerate(levels) for s in apply_noise_level(seq, lvl, assignment)]

    def work(task):
        return _run_sample(seq, task[1], priors, pipe_cfg, eval_cfg)

    workers = jobs or os.cpu_count() or 1
    if workers == 1:
        results = [work(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, tasks))

    rows = []
    for li, lvl in enumerate(levels):
        res = [r for (lj, _), r in zip(tasks, results) if lj == li]
        metrics = {}
        for b in BRANCHES:
            ms = [r[0][b] for r in res]
            metrics[b] = MetricSet(
                abs_rel=float(np.mean([m.abs_rel for m in ms])),
                sq_rel=float(np.mean([m.sq_rel for m in ms])),
                rmse=float(np.mean([m.rmse for m in ms])),
                n_pixels=int(sum(m.n_pixels for m in ms)),
            )
        w_sum, w_n = map(sum, zip(*[r[1] for r in res]))
        mw_sum, mw_n = map(sum, zip(*[r[2] for r in res]))
        rows.append(
            LevelRow(
                level=lvl.label,
                metrics=metrics,
                mean_weight=w_sum / w_n if w_n else float("nan"),
                mean_mw=mw_sum / mw_n if mw_n else float("nan"),
            )
        )
    scores = {b: r_rel([row.metrics[b].abs_rel for row in rows]) for b in ("d_m", "d_fuse")}
    return BenchmarkReport(rows=rows, r_rel=scores, config=config_snapshot or {}, seed=seed)


# --- reporting ------------------------------------------------------------


def report_rows(report: BenchmarkReport) -> list:
    out = []
    for row in report.rows:
        for b in BRANCHES:
            m = row.metrics[b]
            out.append([row.level, b, m.abs_rel, m.sq_rel, m.rmse, m.n_pixels, row.mean_weight, row.mean_mw])
    return out


def write_report(report: BenchmarkReport, out_dir) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out_dir / "report.csv",
        "summary": out_dir / "summary.csv",
        "plot": out_dir / "plot.svg",
    }
    write_csv(paths["report"], REPORT_HEADER, report_rows(report))
    write_csv(paths["summary"], SUMMARY_HEADER, [[b, v] for b, v in report.r_rel.items()])
    series = {b: [(row.level, row.metrics[b].abs_rel) for row in report.rows] for b in BRANCHES}
    paths["plot"].write_text(render_svg(series), encoding="utf-8")
    return paths


def series_from_csv(path) -> dict:
    series = {}
    for rec in read_csv(path):
        series.setdefault(rec["branch"], []).append((rec["level"], float(rec["abs_rel"])))
    return series


_COLORS = {"d_s": "#1f77b4", "d_m": "#d62728", "d_fuse": "#2ca02c"}


def render_svg(series: dict, width: int = 480, height: int = 320) -> str:
    """AbsRel against noise level, one polyline per branch."""
    levels = []
    for pts in series.values():
        for lvl, _ in pts:
            if lvl not in levels:
                levels.append(lvl)
    values = [v for pts in series.values() for _, v in pts if math.isfinite(v)]
    vmax = max(values) * 1.1 if values and max(values) > 0 else 1.0
    left, right, top, bottom = 60, 20, 20, 40
    pw, ph = width - left - right, height - top - bottom

    def x(i):
        return left + (pw * i / (len(levels) - 1) if len(levels) > 1 else pw / 2)

    def y(v):
        return top + ph * (1.0 - v / vmax)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left - 45}" y="{top + 10}" font-size="11">AbsRel</text>',
        f'<text x="{left}" y="{top - 5}" font-size="11">max {vmax:.3f}</text>',
    ]
    for i, lvl in enumerate(levels):
        parts.append(f'<text x="{x(i):.1f}" y="{height - 15}" font-size="11" text-anchor="middle">{lvl}</text>')
    for j, (branch, pts) in enumerate(series.items()):
        coords = " ".join(f"{x(levels.index(lvl)):.1f},{y(v):.1f}" for lvl, v in pts if math.isfinite(v))
        color = _COLORS.get(branch, "black")
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        parts.append(
            f'<text x="{left + pw - 60}" y="{top + 15 + 14 * j}" font-size="11" fill="{color}">{branch}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
