"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import math
import timeit

import numpy as np

from midas import _kernels_py
from midas.compress import gaussian_survival

try:
    from midas import _kernels as compiled
except ImportError:
    compiled = None


def _workloads(rng):
    levels = np.linspace(20.0, 160.0, 7)
    segs = rng.normal(80, 30, (45 * 50, 200))
    params = rng.uniform([1, 50, 10], [5, 110, 40], (45 * 50, 3))
    dwell = np.array([gaussian_survival(levels, *p) for p in params])
    rows = rng.standard_normal((2000, 90))
    return {
        "cumulative_counts (2250 segments)": lambda k: k.cumulative_counts(segs, levels, 0.025),
        "fit_cdf_batch (2250 curves)": lambda k: k.fit_cdf_batch(levels, dwell, 200, 1e-8, 5.0),
        "spirit_track (2000 x 90)": lambda k: k.spirit_track(rows, np.eye(90, 2), np.full(2, 1e-3), 0.995),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s}")
    for name, fn in _workloads(rng).items():
        py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat))
        if compiled is None:
            print(f"{name:36s} {py:10.4f} {'n/a':>11s} {'n/a':>8s}")
            continue
        c = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat))
        speed = py / c if c > 0 else math.inf
        print(f"{name:36s} {py:10.4f} {c:11.4f} {speed:7.1f}x")


if __name__ == "__main__":
    main()
