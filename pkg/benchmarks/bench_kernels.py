"""Compiled vs pure-Python kernels, per call and end to end.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import math
import os
import subprocess
import sys
import timeit

import numpy as np

from crystalsym import _kernels_py as py

try:
    from crystalsym import _kernels as cy
except ImportError:
    cy = None


def _poly(rng, n, centre):
    th = np.sort(rng.uniform(0, 2 * math.pi, n))
    return np.ascontiguousarray(centre + np.column_stack([np.cos(th), np.sin(th)]))


def _cases(rng):
    P = _poly(rng, 4, np.zeros(2))
    Q = _poly(rng, 4, np.array([2.3, 0.4]))
    X = rng.uniform(-2, 2, (64, 2))
    S = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    perms = np.array([np.roll(range(4), k) for k in range(4)] + [np.roll(range(4)[::-1], k) for k in range(4)],
                     dtype=np.int64)
    T = S + rng.normal(scale=0.03, size=S.shape)
    fa = np.zeros(4, np.int8)
    SA = np.ascontiguousarray(rng.normal(size=(6, 4, 3)))
    SB = np.ascontiguousarray(rng.normal(size=(6, 4, 3)) + 0.5)
    X3 = rng.normal(size=(64, 3))
    return {
        "polygon_distance": lambda m: m.polygon_distance(P, Q),
        "points_polygon_distance": lambda m: m.points_polygon_distance(X, P),
        "pair_conflict_2d": lambda m: m.pair_conflict_2d(P, Q, fa, fa, False, 0.3, 1e-9),
        "match_2d": lambda m: m.match_2d(T, S, perms),
        "tetra_overlap": lambda m: m.tetra_overlap(SA, SB),
        "points_tetra_distance": lambda m: m.points_tetra_distance(X3, SA),
    }


def _per_call(fn, mod, repeat):
    n, _ = timeit.Timer(lambda: fn(mod)).autorange()
    return min(timeit.Timer(lambda: fn(mod)).repeat(repeat, n)) / n


END_TO_END = """
import time, numpy as np
from crystalsym.energetics import standard_configuration
from crystalsym.extraction import PointConfig, extract
from crystalsym.tessellation import build
tri = build("triangular")
P = standard_configuration(tri, 8)
rng = np.random.default_rng(0)
P = PointConfig(P.dom, P.points + rng.uniform(-0.01, 0.01, P.points.shape))
t = time.perf_counter()
extract(P, tri, 0.05, 0.1)
print(time.perf_counter() - t)
"""


def _end_to_end(pure: bool) -> float:
    env = dict(os.environ, CRYSTALSYM_PURE="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if cy is None:
        sys.exit("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
    print(f"{'kernel':26s} {'pure (us)':>12s} {'compiled (us)':>14s} {'speedup':>9s}")
    for name, fn in _cases(np.random.default_rng(0)).items():
        tp = _per_call(fn, py, args.repeat) * 1e6
        tc = _per_call(fn, cy, args.repeat) * 1e6
        print(f"{name:26s} {tp:12.2f} {tc:14.2f} {tp / tc:8.1f}x")
    tp, tc = _end_to_end(True), _end_to_end(False)
    print(f"{'extract (tri N=8)':26s} {tp * 1e6:12.0f} {tc * 1e6:14.0f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
