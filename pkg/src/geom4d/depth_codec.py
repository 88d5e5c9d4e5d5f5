"""Scale-invariant disparity codec.

Depth is clipped to [d_min, d_max], square-rooted and inverted into
disparity, normalized by the per-clip maximum disparity, then mapped
linearly from [0, 1] to [-1, 1]. The per-clip maximum (ClipScale) is the
same normalizer later used for camera translations, which is what makes
the two representations share one scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Geom4dError

DEFAULT_D_MIN = 1e-2
DEFAULT_D_MAX = 1e2
DECODE_EPS = 1e-6


@dataclass
class DepthVideo:
    """T x H x W depth grid; values <= 0 or non-finite are invalid."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3:
            raise ValueError(f"depth video must be T x H x W, got shape {self.frames.shape}")
        if min(self.frames.shape) < 1:
            raise ValueError("all depth video dimensions must be >= 1")

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.frames) & (self.frames > 0)

    @property
    def shape(self):
        return self.frames.shape


@dataclass
class ClipScale:
    """Per-clip maximum disparity, shared by depth and raymap codecs."""

    max_disparity: float

    def __post_init__(self):
        if not (self.max_disparity > 0 and math.isfinite(self.max_disparity)):
            raise Geom4dError(
                f"max_disparity must be positive and finite, got {self.max_disparity}")


@dataclass
class NormalizedDisparityVideo:
    """T x H x W grid in [-1, 1]; invalid pixels are NaN and masked out."""

    frames: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3:
            raise ValueError(
                f"normalized disparity must be T x H x W, got shape {self.frames.shape}")
        if self.mask is None:
            self.mask = np.isfinite(self.frames)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.frames.shape:
            raise ValueError("mask shape must match frames")

    @property
    def shape(self):
        return self.frames.shape


def encode_disparity(depth: DepthVideo,
                     d_min: float = DEFAULT_D_MIN,
                     d_max: float = DEFAULT_D_MAX):
    """Encode depth into normalized disparity; returns the per-clip scale."""
    if not (d_min > 0):
        raise Geom4dError(f"d_min must be positive, got {d_min}")
    if not (d_min < d_max):
        raise Geom4dError(f"need d_min < d_max, got [{d_min}, {d_max}]")
    valid = depth.valid
    if not valid.any():
        raise Geom4dError("depth clip has no valid pixels")
    disp = np.full(depth.shape, np.nan)
    clipped = np.clip(depth.frames[valid], d_min, d_max)
    disp[valid] = 1.0 / np.sqrt(clipped)
    scale = float(np.max(disp[valid]))
    out = np.full(depth.shape, np.nan)
    out[valid] = 2.0 * (disp[valid] / scale) - 1.0
    return NormalizedDisparityVideo(out, valid), ClipScale(scale)


def decode_disparity(norm: NormalizedDisparityVideo,
                     scale: ClipScale | None = None) -> DepthVideo:
    """Invert the disparity encoding.

    Without a scale the result is defined only up to one global factor
    (scale = 1 is assumed). Near-zero disparities become invalid pixels
    rather than infinite depths.
    """
    s = scale.max_disparity if scale is not None else 1.0
    disp = ((norm.frames + 1.0) / 2.0) * s
    ok = norm.mask & np.isfinite(disp) & (disp > DECODE_EPS)
    depth = np.full(norm.shape, np.nan)
    depth[ok] = 1.0 / disp[ok] ** 2
    return DepthVideo(depth)
