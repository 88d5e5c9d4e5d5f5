"""Benchmark the numba kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py
The numpy path can also be forced package-wide with GEOM4D_NO_NUMBA=1.
"""
from __future__ import annotations

import time

import numpy as np

from geom4d import _kernels


def time_fn(fn, *args, warmup=2, runs=7):
    for _ in range(warmup):
        fn(*args)
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return np.mean(times) * 1000, np.std(times) * 1000


def report(name, numba_stats, numpy_stats):
    nb_mean, nb_std = numba_stats
    np_mean, np_std = numpy_stats
    speedup = np_mean / nb_mean if nb_mean > 0 else float("inf")
    print(f"{name:28s} numba {nb_mean:8.3f} +- {nb_std:.3f} ms   "
          f"numpy {np_mean:8.3f} +- {np_std:.3f} ms   "
          f"speedup {speedup:5.2f}x")


def main():
    if not _kernels.HAS_NUMBA:
        print("numba backend inactive (GEOM4D_NO_NUMBA set or numba missing); "
              "nothing to compare.")
        return
    rng = np.random.default_rng(0)

    img = rng.normal(size=(1080, 1920))
    report("bilinear_resize /8 (1080p)",
           time_fn(_kernels._bilinear_resize_nb, img, 135, 240),
           time_fn(_kernels._bilinear_resize_np, img, 135, 240))
    report("bilinear_resize x8 (135p)",
           time_fn(_kernels._bilinear_resize_nb, img[:135, :240], 1080, 1920),
           time_fn(_kernels._bilinear_resize_np, img[:135, :240], 1080, 1920))

    kernel = np.exp(-np.linspace(-2, 2, 11) ** 2)
    kernel /= kernel.sum()
    small = rng.normal(size=(256, 256))
    report("gaussian 11x11 (256^2)",
           time_fn(_kernels._gaussian_filter_valid_nb, small, kernel),
           time_fn(_kernels._gaussian_filter_valid_np, small, kernel))
    big = rng.normal(size=(1024, 1024))
    report("gaussian 11x11 (1024^2)",
           time_fn(_kernels._gaussian_filter_valid_nb, big, kernel),
           time_fn(_kernels._gaussian_filter_valid_np, big, kernel))

    # numerical parity between the two paths
    a = _kernels._bilinear_resize_nb(img, 135, 240)
    b = _kernels._bilinear_resize_np(img, 135, 240)
    print(f"resize parity: max |diff| = {np.abs(a - b).max():.3e}")
    a = _kernels._gaussian_filter_valid_nb(small, kernel)
    b = _kernels._gaussian_filter_valid_np(small, kernel)
    print(f"gaussian parity: max |diff| = {np.abs(a - b).max():.3e}")


if __name__ == "__main__":
    main()
