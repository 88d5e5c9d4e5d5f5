"""Hot per-pixel kernels: numba-compiled with a pure-numpy fallback.

The numba path is used whenever numba imports successfully; set the
environment variable ``GEOM4D_NO_NUMBA=1`` to force the numpy fallback
(useful for debugging and for the benchmark in benchmarks/bench_kernels.py).
Both paths evaluate the same per-element formulas.
"""
from __future__ import annotations

import os

import numpy as np

_USE_NUMBA = os.environ.get("GEOM4D_NO_NUMBA", "0") != "1"
if _USE_NUMBA:
    try:
        from numba import njit
    except ImportError:
        _USE_NUMBA = False

HAS_NUMBA = _USE_NUMBA


def _bilinear_resize_np(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel bilinear sampling (non-align-corners), edges clamped."""
    in_h, in_w = src.shape
    sy = in_h / out_h
    sx = in_w / out_w
    ys = (np.arange(out_h) + 0.5) * sy - 0.5
    xs = (np.arange(out_w) + 0.5) * sx - 0.5
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    wy = ys - y0
    wx = xs - x0
    y0c = np.clip(y0, 0, in_h - 1)
    y1c = np.clip(y0 + 1, 0, in_h - 1)
    x0c = np.clip(x0, 0, in_w - 1)
    x1c = np.clip(x0 + 1, 0, in_w - 1)
    # lerp in difference form so constant fields survive bit-exactly
    v00 = src[y0c[:, None], x0c[None, :]]
    v01 = src[y0c[:, None], x1c[None, :]]
    v10 = src[y1c[:, None], x0c[None, :]]
    v11 = src[y1c[:, None], x1c[None, :]]
    top = v00 + wx[None, :] * (v01 - v00)
    bot = v10 + wx[None, :] * (v11 - v10)
    return top + wy[:, None] * (bot - top)


def _gaussian_filter_valid_np(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with a 1-D kernel along both axes."""
    k = kernel.size
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=1) @ kernel
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=0) @ kernel


if _USE_NUMBA:

    @njit(cache=True)
    def _bilinear_resize_nb(src, out_h, out_w):  # pragma: no cover - numba
        in_h, in_w = src.shape
        sy = in_h / out_h
        sx = in_w / out_w
        out = np.empty((out_h, out_w), dtype=np.float64)
        for i in range(out_h):
            y = (i + 0.5) * sy - 0.5
            y0 = int(np.floor(y))
            wy = y - y0
            y0c = min(max(y0, 0), in_h - 1)
            y1c = min(max(y0 + 1, 0), in_h - 1)
            for j in range(out_w):
                x = (j + 0.5) * sx - 0.5
                x0 = int(np.floor(x))
                wx = x - x0
                x0c = min(max(x0, 0), in_w - 1)
                x1c = min(max(x0 + 1, 0), in_w - 1)
                top = src[y0c, x0c] + wx * (src[y0c, x1c] - src[y0c, x0c])
                bot = src[y1c, x0c] + wx * (src[y1c, x1c] - src[y1c, x0c])
                out[i, j] = top + wy * (bot - top)
        return out

    @njit(cache=True)
    def _gaussian_filter_valid_nb(img, kernel):  # pragma: no cover - numba
        h, w = img.shape
        k = kernel.size
        oh = h - k + 1
        ow = w - k + 1
        rows = np.empty((h, ow), dtype=np.float64)
        for i in range(h):
            for j in range(ow):
                acc = 0.0
                for m in range(k):
                    acc += img[i, j + m] * kernel[m]
                rows[i, j] = acc
        out = np.empty((oh, ow), dtype=np.float64)
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for m in range(k):
                    acc += rows[i + m, j] * kernel[m]
                out[i, j] = acc
        return out


def bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a 2-D array with half-pixel bilinear sampling."""
    src = np.ascontiguousarray(src, dtype=np.float64)
    if _USE_NUMBA:
        return _bilinear_resize_nb(src, out_h, out_w)
    return _bilinear_resize_np(src, out_h, out_w)


def gaussian_filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Valid-mode separable Gaussian correlation of a 2-D array."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    kernel = np.ascontiguousarray(kernel, dtype=np.float64)
    if _USE_NUMBA:
        return _gaussian_filter_valid_nb(img, kernel)
    return _gaussian_filter_valid_np(img, kernel)


def warmup() -> None:
    """Trigger JIT compilation so later calls are not charged compile time."""
    bilinear_resize(np.zeros((4, 4)), 2, 2)
    gaussian_filter_valid(np.zeros((4, 4)), np.full(3, 1.0 / 3.0))
