"""Compare the compiled and pure-Python plane-sweep kernels.

Runs each kernel on a processing-resolution frame (80x60, 128 depth bins by
default), checks that both backends agree, and prints the best-of-N wall
time and the speed-up.

    python3 benchmarks/bench_kernels.py --repeat 5
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from mvsfuse import _pykernels
from mvsfuse.geometry import CameraIntrinsics, Pose, reprojection_rays
from mvsfuse.plane_sweep import sample_hypotheses

try:
    from mvsfuse import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def make_inputs(width: int, height: int, n_bins: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    k = CameraIntrinsics(fx=width, fy=width, cx=width / 2, cy=height / 2, width=width, height=height)
    ref = rng.random((height, width))
    src = rng.random((height, width))
    pose = Pose(np.eye(3), [0.3, 0.0, 0.05])
    ray, offset = reprojection_rays(pose, k, k)
    bins = sample_hypotheses(1.0, 100.0, n_bins).bins
    us = rng.uniform(-2, width + 1, size=(n_bins, height, width))
    vs = rng.uniform(-2, height + 1, size=(n_bins, height, width))
    return ref, src, ray, offset, bins, us, vs


def best_time(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--width", type=int, default=80)
    parser.add_argument("--height", type=int, default=60)
    parser.add_argument("--bins", type=int, default=128)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    ref, src, ray, offset, bins, us, vs = make_inputs(args.width, args.height, args.bins)
    cases = {
        "sweep_sq_diff": lambda m: m.sweep_sq_diff(ref, src, ray, offset, bins),
        "gather_bilinear": lambda m: m.gather_bilinear(src, us, vs),
    }
    print(f"frame {args.width}x{args.height}, {args.bins} bins, best of {args.repeat}")
    if _ckernels is None:
        print("compiled extension not available; timing the Python backend only")
    for name, call in cases.items():
        t_py = best_time(lambda: call(_pykernels), args.repeat)
        line = f"{name:16s} python {t_py * 1e3:8.2f} ms"
        if _ckernels is not None:
            a, b = call(_pykernels), call(_ckernels)
            agree = np.array_equal(np.isnan(a), np.isnan(b)) and np.allclose(a, b, equal_nan=True, atol=1e-12)
            t_c = best_time(lambda: call(_ckernels), args.repeat)
            line += f"   cython {t_c * 1e3:8.2f} ms   speed-up {t_py / t_c:5.1f}x   agree={agree}"
        print(line)


if __name__ == "__main__":
    main()
