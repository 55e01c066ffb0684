#!/usr/bin/env python3
"""Timing comparison of the compiled voxel kernels against the NumPy
fallback. Run after `pip install -e .` (the extension builds during install):

    python benchmarks/bench_kernels.py [--sizes 32,64,128] [--repeats 5]
"""

import argparse
import time

import numpy as np

from segalarm.volumetric import _kernels_py

try:
    from segalarm.volumetric import _kernels as compiled
except ImportError:
    compiled = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_affine(impl, src, out_shape):
    angle = 10.0 * np.pi / 180.0
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    center = (np.array(src.shape) - 1) / 2.0
    offset = center - rot @ center
    return lambda: impl.affine_nearest_u8(src, rot, offset, out_shape)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="32,64,128")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if compiled is None:
        print("compiled kernels not available; showing NumPy fallback only")
    rng = np.random.default_rng(0)

    header = f"{'kernel':<28} {'size':>6} {'numpy':>10} {'compiled':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for n in sizes:
        src = rng.integers(0, 3, size=(n, n, n), dtype=np.uint8)
        rows = [
            ("affine_nearest_u8 (rotate)", bench_affine(_kernels_py, src, (n, n, n)),
             None if compiled is None else bench_affine(compiled, src, (n, n, n))),
            ("label_overlap_counts",
             lambda: _kernels_py.label_overlap_counts(src, src, 3),
             None if compiled is None else
             (lambda: compiled.label_overlap_counts(src, src, 3))),
        ]
        a = rng.random(n ** 3, dtype=np.float32)
        b = rng.random(n ** 3, dtype=np.float32)
        rows.append(("soft_dice_sums",
                     lambda: _kernels_py.soft_dice_sums(a, b),
                     None if compiled is None else
                     (lambda: compiled.soft_dice_sums(a, b))))
        for name, py_fn, c_fn in rows:
            t_py = timeit(py_fn, args.repeats)
            if c_fn is None:
                print(f"{name:<28} {n:>5}^3 {t_py * 1e3:>8.2f}ms {'-':>10} {'-':>8}")
            else:
                t_c = timeit(c_fn, args.repeats)
                print(f"{name:<28} {n:>5}^3 {t_py * 1e3:>8.2f}ms "
                      f"{t_c * 1e3:>8.2f}ms {t_py / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
