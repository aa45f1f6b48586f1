"""Command-line entry point: gen, depth, bench, eval, report.

Exit codes: 0 success, 1 operational error, 2 usage or precondition error.
Any ``--block.key=value`` flag overrides the matching config field.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import kernels
from .config import ConfigError, load_config
from .dataset_io import load_sequence, read_csv, read_pfm, save_sequence, write_pfm
from .errors import MvsFuseError
from .evalbench import depth_metrics, frame_prior, render_svg, run_benchmark, series_from_csv, write_report
from .pipeline import OUTPUT_MAPS, estimate
from .pose_bench import make_sample
from .scene_synth import generate, spec_from_dict, suite_spec

logger = logging.getLogger("mvsfuse")

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad invocation or unmet precondition (exit code 2)."""


def _split_overrides(extra: list) -> list:
    overrides = []
    i = 0
    while i < len(extra):
        arg = extra[i]
        if not arg.startswith("--") or "." not in arg.split("=", 1)[0]:
            raise UsageError(f"unrecognised argument {arg!r}")
        body = arg[2:]
        if "=" not in body:
            if i + 1 >= len(extra):
                raise UsageError(f"override {arg} needs a value")
            body = f"{body}={extra[i + 1]}"
            i += 1
        overrides.append(body)
        i += 1
    return overrides


def _config(args):
    cfg = load_config(args.config, args.overrides, args.seed)
    if args.jobs is not None:
        cfg.jobs = args.jobs
    return cfg


def _out_dir(args, cfg) -> Path:
    out = args.out_dir or cfg.output_dir
    if not out:
        raise UsageError("no output directory: pass OUT_DIR or set output_dir in the config")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_gen(args) -> int:
    cfg = _config(args)
    if args.suite and args.spec:
        raise UsageError("give either --suite or --spec, not both")
    if args.suite:
        spec = suite_spec(args.suite, cfg.seed)
    elif args.spec:
        spec = spec_from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8")))
    elif cfg.scene:
        spec = spec_from_dict({"seed": cfg.seed, **cfg.scene})
    else:
        raise UsageError("gen needs --suite NAME, --spec FILE or a scene block in the config")
    out = _out_dir(args, cfg)
    manifest = save_sequence(generate(spec), out)
    print(manifest)
    return EXIT_OK


def cmd_depth(args) -> int:
    cfg = _config(args)
    seq = load_sequence(args.manifest)
    n = len(seq.frames)
    if not 1 <= args.frame <= n - 2:
        raise UsageError(f"frame {args.frame} has no 3-frame window in a {n}-frame sequence")
    out = _out_dir(args, cfg)
    sample = make_sample(seq, 0, args.frame)
    prior = frame_prior(seq, args.frame, cfg.prior, cfg.seed)
    est = estimate(sample.ref, sample.srcs, sample.rel_poses, seq.intrinsics, prior, cfg.pipeline())
    for name in OUTPUT_MAPS:
        write_pfm(out / f"{name}.pfm", est.full[name])
    cfg.write_resolved(out)
    gt = seq.frames[args.frame].gt_depth
    if gt is not None:
        m = depth_metrics(est.full["d_fuse"], gt, cfg.eval.min_depth, cfg.eval.max_depth)
        logger.info("d_fuse abs_rel=%.6f over %d pixels", m.abs_rel, m.n_pixels)
    print(out)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    if args.levels:
        cfg.noise.levels = list(args.levels)
    try:
        levels = cfg.levels()
    except ValueError as exc:
        raise UsageError(f"bad noise level: {exc}") from None
    seq = load_sequence(args.manifest)
    out = _out_dir(args, cfg)
    report = run_benchmark(
        seq,
        prior_cfg=cfg.prior,
        pipe_cfg=cfg.pipeline(),
        levels=levels,
        seed=cfg.seed,
        eval_cfg=cfg.eval,
        jobs=cfg.jobs,
        config_snapshot=cfg.to_dict(),
        noise_seed=cfg.noise.seed,
    )
    paths = write_report(report, out)
    cfg.write_resolved(out)
    for p in paths.values():
        print(p)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    pred = read_pfm(args.pred)
    gt = read_pfm(args.gt)
    if pred.shape != gt.shape:
        raise MvsFuseError(f"shape mismatch: prediction {pred.shape} vs ground truth {gt.shape}")
    lo = cfg.eval.min_depth if args.min_depth is None else args.min_depth
    hi = cfg.eval.max_depth if args.max_depth is None else args.max_depth
    m = depth_metrics(pred, gt, lo, hi)
    print("abs_rel,sq_rel,rmse,n_pixels")
    print(f"{m.abs_rel:.9g},{m.sq_rel:.9g},{m.rmse:.9g},{m.n_pixels}")
    return EXIT_OK


def cmd_report(args) -> int:
    src = Path(args.report_csv)
    rows = read_csv(src)
    if not rows:
        raise MvsFuseError(f"{src} has no data rows")
    out = Path(args.out) if args.out else src.with_name("plot.svg")
    out.write_text(render_svg(series_from_csv(src)), encoding="utf-8")
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed and MVSFUSE_SEED")
    common.add_argument("--jobs", type=int, help="worker threads (default: hardware parallelism)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mvsfuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="render a synthetic scene to a manifest")
    p.add_argument("--suite", help="standard scene name")
    p.add_argument("--spec", help="JSON scene description")
    p.add_argument("out_dir", nargs="?")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("depth", parents=[common], help="estimate depth for one reference frame")
    p.add_argument("manifest")
    p.add_argument("out_dir", nargs="?")
    p.add_argument("--frame", type=int, required=True)
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("bench", parents=[common], help="pose-noise robustness benchmark")
    p.add_argument("manifest")
    p.add_argument("out_dir", nargs="?")
    p.add_argument("--levels", nargs="+", help='noise levels, e.g. 0 0.01 identity')
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", parents=[common], help="depth metrics between two PFM files")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--min-depth", type=float)
    p.add_argument("--max-depth", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="regenerate plot.svg from report.csv")
    p.add_argument("report_csv")
    p.add_argument("--out", help="SVG path (default: plot.svg next to the CSV)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    logger.debug("kernel backend: %s", kernels.BACKEND)
    try:
        args.overrides = _split_overrides(extra)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"mvsfuse {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MvsFuseError, OSError, ValueError) as exc:
        print(f"mvsfuse {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
