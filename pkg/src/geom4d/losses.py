"""Deterministic image/depth/pointmap quality metrics.

These are the refinement-stage objectives computed as plain metrics:
multi-scale SSIM, scale-shift-invariant depth alignment and loss, and the
inverse-depth-weighted pointmap distance, plus the depth+raymap to
pointmap projection they operate on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .depth_codec import DepthVideo
from .errors import DegenerateGeometry, Geom4dError
from .raymap import Raymap

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
SSI_ALPHA = 0.5
SSI_NUM_SCALES = 4
POINTMAP_DEPTH_EPS = 1e-6


@dataclass
class PointMap:
    """T x H x W x 3 world-frame points with validity and source depth."""

    points: np.ndarray
    valid: np.ndarray = None
    depths: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 4 or self.points.shape[-1] != 3:
            raise ValueError(f"pointmap must be T x H x W x 3, got {self.points.shape}")
        if self.valid is None:
            self.valid = np.isfinite(self.points).all(axis=-1)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.points.shape[:3]:
            raise ValueError("validity mask shape must match points")
        if self.depths is not None:
            self.depths = np.asarray(self.depths, dtype=np.float64)
            if self.depths.shape != self.points.shape[:3]:
                raise ValueError("depths shape must match points")


@dataclass
class SsiAlignment:
    """Optimal scale/shift mapping a prediction onto its reference."""

    s: float
    t: float


def project_pointmap(depth: DepthVideo, r: Raymap) -> PointMap:
    """Per pixel: point = depth * ray_direction + ray_origin.

    `depth` must be disparity-normalized and the raymap origins already
    decoded, so both live in the same normalized scene scale.
    """
    t, h, w = depth.shape
    if r.shape != (t, 6, h, w):
        raise Geom4dError(f"raymap shape {r.shape} does not match depth {depth.shape}")
    dirs = np.moveaxis(r.directions, 1, -1)
    origins = np.moveaxis(r.origins, 1, -1)
    valid = depth.valid
    d = np.where(valid, depth.frames, 0.0)
    points = d[..., None] * dirs + origins
    points[~valid] = np.nan
    return PointMap(points, valid, depth.frames.copy())


def _joint_mask(pred: DepthVideo, gt: DepthVideo, mask) -> np.ndarray:
    joint = pred.valid & gt.valid
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != joint.shape:
            raise Geom4dError(f"mask shape {m.shape} does not match depth {joint.shape}")
        joint &= m
    return joint


def ssi_align(pred: DepthVideo, gt: DepthVideo, mask=None) -> SsiAlignment:
    """Closed-form argmin over (s, t) of ||mask * (s*pred + t - gt)||^2."""
    joint = _joint_mask(pred, gt, mask)
    p = pred.frames[joint]
    g = gt.frames[joint]
    if p.size < 2:
        raise DegenerateGeometry("scale/shift alignment needs at least 2 valid pixels")
    pm = p.mean()
    gm = g.mean()
    pc = p - pm
    denom = float(pc @ pc)
    if denom <= p.size * (1e-10 * (abs(pm) + 1.0)) ** 2:
        raise DegenerateGeometry("prediction is constant under the mask")
    s = float(pc @ (g - gm)) / denom
    t = gm - s * pm
    return SsiAlignment(s, float(t))


def ssi_loss(pred: DepthVideo, gt: DepthVideo, mask=None,
             alpha: float = SSI_ALPHA, num_scales: int = SSI_NUM_SCALES) -> float:
    """Mean absolute aligned residual plus a multi-scale gradient term.

    The gradient term sums, over dyadic decimations of the aligned
    residual, the mean absolute x and y finite differences (a difference
    counts only when both pixels are valid).
    """
    joint = _joint_mask(pred, gt, mask)
    align = ssi_align(pred, gt, mask)
    resid = np.where(joint, align.s * pred.frames + align.t - gt.frames, 0.0)
    data = float(np.abs(resid[joint]).mean())
    grad = 0.0
    for k in range(num_scales):
        step = 2**k
        r_k = resid[:, ::step, ::step]
        m_k = joint[:, ::step, ::step]
        for axis in (1, 2):
            d = np.abs(np.diff(r_k, axis=axis))
            ok = np.logical_and(
                np.take(m_k, range(0, m_k.shape[axis] - 1), axis=axis),
                np.take(m_k, range(1, m_k.shape[axis]), axis=axis))
            if ok.any():
                grad += float(d[ok].mean())
    return data + alpha * grad


def pointmap_loss(pred: PointMap, gt: PointMap, norm_p: int = 2) -> float:
    """Weighted mean point distance, weights inversely proportional to depth.

    Weights 1/max(gt_depth, eps) are normalized to mean 1 over the jointly
    valid points, so magnitudes stay comparable across scenes.
    """
    if norm_p not in (1, 2):
        raise Geom4dError(f"norm_p must be 1 or 2, got {norm_p}")
    if pred.points.shape != gt.points.shape:
        raise Geom4dError("pointmap shapes do not match")
    if gt.depths is None:
        raise Geom4dError("ground-truth pointmap carries no depths for weighting")
    joint = pred.valid & gt.valid
    if not joint.any():
        raise Geom4dError("no jointly valid points")
    diff = pred.points[joint] - gt.points[joint]
    if norm_p == 1:
        dist = np.abs(diff).sum(axis=-1)
    else:
        dist = np.sqrt((diff**2).sum(axis=-1))
    w = 1.0 / np.maximum(gt.depths[joint], POINTMAP_DEPTH_EPS)
    return float((w * dist).sum() / w.sum())


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    xs = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(xs**2) / (2.0 * sigma**2))
    return k / k.sum()


def _ssim_mean(a: np.ndarray, b: np.ndarray, c1: float, c2: float,
               kernel: np.ndarray) -> float:
    mu1 = _kernels.gaussian_filter_valid(a, kernel)
    mu2 = _kernels.gaussian_filter_valid(b, kernel)
    s11 = _kernels.gaussian_filter_valid(a * a, kernel) - mu1 * mu1
    s22 = _kernels.gaussian_filter_valid(b * b, kernel) - mu2 * mu2
    s12 = _kernels.gaussian_filter_valid(a * b, kernel) - mu1 * mu2
    num = (2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return float((num / den).mean())


def _avg_pool2(x: np.ndarray) -> np.ndarray:
    h2, w2 = x.shape[0] // 2, x.shape[1] // 2
    return x[: 2 * h2, : 2 * w2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def ms_ssim(a: np.ndarray, b: np.ndarray,
            weights=MS_SSIM_WEIGHTS, dynamic_range: float = 1.0) -> float:
    """Multi-scale SSIM: product of per-scale SSIM means raised to weights.

    11x11 Gaussian window with sigma 1.5, C1 = (0.01 L)^2, C2 = (0.03 L)^2,
    2x2 average pooling between scales.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise Geom4dError(f"images must be 2-D with equal shapes, got {a.shape} vs {b.shape}")
    weights = np.asarray(weights, dtype=np.float64)
    scales = weights.size
    needed = 2 ** (scales - 1) * 11
    if min(a.shape) < needed:
        raise Geom4dError(
            f"image min dimension {min(a.shape)} too small for {scales} scales (needs {needed})")
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    kernel = _gaussian_kernel()
    result = 1.0
    for s in range(scales):
        val = _ssim_mean(a, b, c1, c2, kernel)
        if val <= 0.0:
            raise Geom4dError(f"non-positive SSIM at scale {s}; weighted product undefined")
        result *= val ** weights[s]
        if s + 1 < scales:
            a = _avg_pool2(a)
            b = _avg_pool2(b)
    return float(result)
