#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Also verifies on each case that both backends produce bit-identical output,
since backend selection must not change results.
"""

import argparse
import time

import numpy as np

from nframe.kernels import BICUBIC, BILINEAR, NEAREST, _pykernels

try:
    from nframe.kernels import _ckernels
except ImportError:
    _ckernels = None


def _timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if _ckernels is None:
        print("compiled backend not built; install with the Cython extension to compare")
        return 1

    rng = np.random.default_rng(0)
    img224 = np.ascontiguousarray(rng.random((224, 224, 3)))
    img896 = np.ascontiguousarray(rng.random((896, 896, 3)))
    theta = np.radians(2.0)
    c = (896 - 1) / 2.0
    rot = np.array(
        [
            [np.cos(theta), np.sin(theta), c - np.cos(theta) * c - np.sin(theta) * c],
            [-np.sin(theta), np.cos(theta), c + np.sin(theta) * c - np.cos(theta) * c],
        ]
    )
    kern = rng.standard_normal((3, 3))

    cases = [
        ("resize 224->896 bilinear", lambda m: m.resize(img224, 896, 896, BILINEAR)),
        ("resize 224->896 bicubic", lambda m: m.resize(img224, 896, 896, BICUBIC)),
        ("resize 896->224 nearest", lambda m: m.resize(img896, 224, 224, NEAREST)),
        ("rotate 896x896 bilinear", lambda m: m.warp_affine(img896, rot, 896, 896, BILINEAR)),
        ("rotate 896x896 bicubic", lambda m: m.warp_affine(img896, rot, 896, 896, BICUBIC)),
        ("conv3x3 896x896", lambda m: m.conv3x3_reflect(img896, kern)),
    ]

    print(f"{'case':28s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s}  bit-equal")
    for name, fn in cases:
        t_py, out_py = _timeit(lambda: fn(_pykernels), args.repeats)
        t_c, out_c = _timeit(lambda: fn(_ckernels), args.repeats)
        equal = np.array_equal(out_py, out_c)
        print(
            f"{name:28s} {t_py * 1e3:9.1f}ms {t_c * 1e3:9.1f}ms {t_py / t_c:7.2f}x  {equal}"
        )
        if not equal:
            raise SystemExit(f"backend mismatch on {name}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
