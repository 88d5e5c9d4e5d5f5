"""Camera parameters <-> raymap conversion and latent-shape rearrangement.

A raymap stores, per frame, 3 channels of world-frame ray directions
(unit z in the camera frame, not unit-normalized) and 3 channels of
log-scaled ray origins (the camera center after disparity normalization
and a signed log(1+.) squash), constant across the frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .depth_codec import ClipScale
from .errors import ConventionMismatch, DegenerateGeometry, Geom4dError
from .geometry import Convention, Intrinsics, Pose, Quaternion, inverse

DEFAULT_S_RAY = 2.0
_EXP_LIMIT = 709.0  # exp() overflows float64 just above this


@dataclass
class RayEncodingConfig:
    """Constant factor applied to translations before the log squash."""

    s_ray: float = DEFAULT_S_RAY

    def __post_init__(self):
        if not (self.s_ray > 0 and math.isfinite(self.s_ray)):
            raise Geom4dError(f"s_ray must be positive and finite, got {self.s_ray}")


@dataclass
class Raymap:
    """T x 6 x H x W grid; channels 0-2 ray directions, 3-5 ray origins."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 4 or self.frames.shape[1] != 6:
            raise ValueError(f"raymap must be T x 6 x H x W, got shape {self.frames.shape}")
        if not np.isfinite(self.frames).all():
            raise ValueError("raymap values must be finite")

    @property
    def directions(self) -> np.ndarray:
        return self.frames[:, 0:3]

    @property
    def origins(self) -> np.ndarray:
        return self.frames[:, 3:6]

    @property
    def shape(self):
        return self.frames.shape


@dataclass
class LatentRaymap:
    """ceil(T/4) x 24 x H/8 x W/8 grid aligned with video latents."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 4 or self.frames.shape[1] != 24:
            raise ValueError(
                f"latent raymap must be G x 24 x h x w, got shape {self.frames.shape}")

    @property
    def shape(self):
        return self.frames.shape


def encode_translation(t: np.ndarray, scale: ClipScale,
                       cfg: RayEncodingConfig) -> np.ndarray:
    """Disparity-normalize, scale by s_ray, then signed log(1 + |.|)."""
    t = np.asarray(t, dtype=np.float64)
    if not np.isfinite(t).all():
        raise Geom4dError("translation must be finite")
    scaled = (t / scale.max_disparity) * cfg.s_ray
    return np.sign(scaled) * np.log1p(np.abs(scaled))


def decode_translation(t_log: np.ndarray, cfg: RayEncodingConfig) -> np.ndarray:
    """Invert encode_translation up to the (irrecoverable) metric scale.

    Returns the disparity-normalized translation t / max_disparity.
    """
    t_log = np.asarray(t_log, dtype=np.float64)
    if not np.isfinite(t_log).all():
        raise Geom4dError("log translation must be finite")
    if np.any(np.abs(t_log) > _EXP_LIMIT):
        raise Geom4dError(
            f"log translation magnitude exceeds representable range ({_EXP_LIMIT})")
    return np.sign(t_log) * np.expm1(np.abs(t_log)) / cfg.s_ray


def _pixel_directions(k: Intrinsics) -> np.ndarray:
    """Camera-frame directions at pixel centers, unit z. Shape 3 x H x W."""
    us = (np.arange(k.width) + 0.5 - k.cx) / k.fx
    vs = (np.arange(k.height) + 0.5 - k.cy) / k.fy
    dirs = np.empty((3, k.height, k.width))
    dirs[0] = us[None, :]
    dirs[1] = vs[:, None]
    dirs[2] = 1.0
    return dirs


def build_raymap(extrinsics: list, k: Intrinsics, scale: ClipScale,
                 cfg: RayEncodingConfig) -> Raymap:
    """Build the 6-channel raymap from camera_from_world extrinsics.

    Ray directions are sampled at pixel centers (u+0.5, v+0.5), rotated
    into the world frame by the pose (= inverse extrinsic) rotation and
    kept at unit z rather than unit norm. Origin channels hold the
    log-encoded camera center, broadcast spatially.
    """
    frames = np.empty((len(extrinsics), 6, k.height, k.width))
    cam_dirs = _pixel_directions(k)
    for i, ext in enumerate(extrinsics):
        if ext.convention is not Convention.CAMERA_FROM_WORLD:
            raise ConventionMismatch("build_raymap expects camera_from_world extrinsics")
        pose = inverse(ext)
        r_wc = pose.rotation.matrix()
        frames[i, 0:3] = np.einsum("ab,bhw->ahw", r_wc, cam_dirs)
        t_log = encode_translation(pose.translation, scale, cfg)
        frames[i, 3:6] = t_log[:, None, None]
    return Raymap(frames)


def decode_origin_channels(r: Raymap, cfg: RayEncodingConfig) -> Raymap:
    """Apply decode_translation elementwise to the origin channels."""
    frames = r.frames.copy()
    frames[:, 3:6] = decode_translation(r.frames[:, 3:6], cfg)
    return Raymap(frames)


def frame_axes(r: Raymap, i: int):
    """Camera axes, center and look-at of frame i by the direct mean-ray rule.

    Returns (x, y, z, center, look_at): z points from the mean ray origin
    to the mean ray endpoint, x follows the first-to-last column direction,
    and y/x are re-orthogonalized by two cross products.
    """
    dirs = r.frames[i, 0:3].reshape(3, -1)
    origins = r.frames[i, 3:6].reshape(3, -1)
    c = origins.mean(axis=1)
    p = (origins + dirs).mean(axis=1)
    fwd = p - c
    dist = float(np.linalg.norm(fwd))
    if dist < 1e-9:
        raise DegenerateGeometry(f"frame {i}: mean ray direction is null")
    z = fwd / dist
    col_last = r.frames[i, 0:3, :, -1].mean(axis=1)
    col_first = r.frames[i, 0:3, :, 0].mean(axis=1)
    x = col_last - col_first
    xn = float(np.linalg.norm(x))
    if xn < 1e-9:
        raise DegenerateGeometry(f"frame {i}: degenerate column directions")
    x = x / xn
    y = np.cross(z, x)
    y = y / np.linalg.norm(y)
    x = np.cross(y, z)
    x = x / np.linalg.norm(x)
    return x, y, z, c, p


def raymap_to_camera(r: Raymap):
    """Recover per-frame extrinsics and intrinsics by the direct mean-ray rule.

    Expects origin channels already decoded (decode_origin_channels).
    Focal is set to ||look_at - center|| with the principal point at the
    image center, exactly as the direct rule states (which is ~1 for
    unit-z rays; see recover_intrinsics_lsq for a round-trip-consistent
    alternative).
    """
    n, _, h, w = r.shape
    extrinsics = []
    intrinsics = []
    for i in range(n):
        x, y, z, c, p = frame_axes(r, i)
        dist = float(np.linalg.norm(p - c))
        rot = np.stack([x, y, z], axis=1)
        pose = Pose(Quaternion.from_matrix(rot), c, Convention.WORLD_FROM_CAMERA)
        extrinsics.append(inverse(pose))
        intrinsics.append(Intrinsics(dist, dist, w / 2.0, h / 2.0, w, h))
    return extrinsics, intrinsics


def recover_intrinsics_lsq(r: Raymap, extrinsics: list) -> list:
    """Per-frame least-squares (fx, fy, cx, cy) from the pixel model.

    Rotates directions back into the camera frame with the given
    extrinsics, divides by z, and fits u+0.5 = fx * x/z + cx (same for v)
    in closed form. Exact whenever the extrinsic rotations are.
    """
    n, _, h, w = r.shape
    us = np.arange(w) + 0.5
    vs = np.arange(h) + 0.5
    uu = np.broadcast_to(us[None, :], (h, w)).ravel()
    vv = np.broadcast_to(vs[:, None], (h, w)).ravel()
    out = []
    for i in range(n):
        ext = extrinsics[i]
        if ext.convention is not Convention.CAMERA_FROM_WORLD:
            raise ConventionMismatch("recover_intrinsics_lsq expects camera_from_world")
        r_cw = ext.rotation.matrix()
        d_cam = np.einsum("ab,bk->ak", r_cw, r.frames[i, 0:3].reshape(3, -1))
        xz = d_cam[0] / d_cam[2]
        yz = d_cam[1] / d_cam[2]
        fx, cx = _fit_axis(xz, uu, f"frame {i} x")
        fy, cy = _fit_axis(yz, vv, f"frame {i} y")
        out.append(Intrinsics(fx, fy, cx, cy, w, h))
    return out


def _fit_axis(ratio: np.ndarray, pix: np.ndarray, label: str):
    a = np.stack([ratio, np.ones_like(ratio)], axis=1)
    ata = a.T @ a
    if np.linalg.matrix_rank(ata) < 2:
        raise DegenerateGeometry(f"{label}: constant directions, focal unobservable")
    sol = np.linalg.solve(ata, a.T @ pix)
    return float(sol[0]), float(sol[1])


def rearrange_raymap(r: Raymap) -> LatentRaymap:
    """Downsample x8 bilinearly and fold groups of 4 frames into channels."""
    t, c, h, w = r.shape
    if h % 8 != 0 or w % 8 != 0:
        raise Geom4dError(f"raymap spatial dims must be divisible by 8, got {h}x{w}")
    oh, ow = h // 8, w // 8
    groups = (t + 3) // 4
    out = np.zeros((groups, 24, oh, ow))
    for f in range(t):
        g, slot = divmod(f, 4)
        for ch in range(c):
            out[g, slot * 6 + ch] = _kernels.bilinear_resize(r.frames[f, ch], oh, ow)
    return LatentRaymap(out)


def unrearrange_raymap(latent: LatentRaymap, t: int, h: int, w: int) -> Raymap:
    """Invert the channel grouping and bilinearly upsample back to H x W."""
    groups, _, lh, lw = latent.shape
    if h % 8 != 0 or w % 8 != 0 or lh != h // 8 or lw != w // 8:
        raise Geom4dError(
            f"latent {lh}x{lw} does not match requested raymap size {h}x{w}")
    if groups != (t + 3) // 4:
        raise Geom4dError(f"latent has {groups} groups, expected {(t + 3) // 4} for T={t}")
    out = np.empty((t, 6, h, w))
    for f in range(t):
        g, slot = divmod(f, 4)
        for ch in range(6):
            out[f, ch] = _kernels.bilinear_resize(latent.frames[g, slot * 6 + ch], h, w)
    return Raymap(out)
