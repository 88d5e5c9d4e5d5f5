"""Zero-shot evaluation metrics: video depth and camera pose errors.

Depth metrics are computed after a per-sequence alignment (none, scale,
or scale+shift). Pose metrics follow the SLAM benchmark recipe: ATE is
the RMSE of camera-center differences after similarity alignment, RPE
compares frame-to-frame relative transforms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .depth_codec import DepthVideo
from .errors import DegenerateGeometry, Geom4dError
from .geometry import (Pose, Quaternion, Trajectory,
                       rotation_geodesic_error, umeyama_sim3)
from .losses import _joint_mask, ssi_align

DEFAULT_MAX_DT = 0.02
DELTA_THRESHOLD = 1.25


@dataclass
class DepthMetrics:
    abs_rel: float
    delta_125: float


@dataclass
class PoseMetrics:
    ate_rmse: float
    rpe_trans: float
    rpe_rot: float


def depth_metrics(pred: DepthVideo, gt: DepthVideo, mask=None,
                  alignment: str = "scale",
                  scale_estimator: str = "lsq") -> DepthMetrics:
    """Abs Rel and the delta < 1.25 percentage after per-sequence alignment."""
    if alignment not in ("none", "scale", "scale_shift"):
        raise Geom4dError(f"unknown alignment '{alignment}'")
    if scale_estimator not in ("lsq", "median"):
        raise Geom4dError(f"unknown scale estimator '{scale_estimator}'")
    joint = _joint_mask(pred, gt, mask)
    if not joint.any():
        raise Geom4dError("no valid pixels to evaluate")
    p = pred.frames[joint]
    g = gt.frames[joint]
    if alignment == "scale":
        if scale_estimator == "median":
            s = float(np.median(g / p))
        else:
            denom = float(p @ p)
            if denom == 0.0:
                raise DegenerateGeometry("prediction is zero under the mask")
            s = float(p @ g) / denom
        p = s * p
    elif alignment == "scale_shift":
        align = ssi_align(pred, gt, mask)
        p = align.s * p + align.t
    abs_rel = float(np.mean(np.abs(p - g) / g))
    ratio = np.where(p > 0, np.maximum(p / g, g / p), np.inf)
    delta = 100.0 * float(np.mean(ratio < DELTA_THRESHOLD))
    return DepthMetrics(abs_rel, delta)


def associate(pred: Trajectory, gt: Trajectory,
              max_dt: float = DEFAULT_MAX_DT) -> list:
    """Greedy nearest-timestamp matching; each entry used at most once."""
    if len(pred) == 0 or len(gt) == 0:
        raise Geom4dError("cannot associate empty trajectories")
    candidates = []
    for i, tp in enumerate(pred.timestamps):
        for j, tg in enumerate(gt.timestamps):
            dt = abs(tp - tg)
            if dt <= max_dt:
                candidates.append((dt, i, j))
    candidates.sort()
    used_p, used_g = set(), set()
    pairs = []
    for dt, i, j in candidates:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        pairs.append((i, j))
    if not pairs:
        raise Geom4dError(f"no timestamp pairs within {max_dt} s")
    pairs.sort()
    return pairs


def ate(pred: Trajectory, gt: Trajectory, align: str = "sim3",
        max_dt: float = DEFAULT_MAX_DT) -> float:
    """RMSE of camera-center differences after the requested alignment."""
    if align not in ("sim3", "se3", "none"):
        raise Geom4dError(f"unknown alignment '{align}'")
    pairs = associate(pred, gt, max_dt)
    pc = pred.centers()[[i for i, _ in pairs]]
    gc = gt.centers()[[j for _, j in pairs]]
    if align != "none":
        if len(pairs) < 3:
            raise DegenerateGeometry("similarity alignment needs at least 3 pairs")
        sim = umeyama_sim3(pc, gc, with_scale=(align == "sim3"))
        pc = sim.apply(pc)
    return float(np.sqrt(np.mean(np.sum((pc - gc) ** 2, axis=1))))


def _relative(a: Pose, b: Pose):
    """a^-1 * b on raw (R, t), ignoring convention tags."""
    conj = a.rotation.conjugate()
    rot = (conj * b.rotation).normalized()
    trans = conj.rotate(b.translation - a.translation)
    return rot, trans


def rpe(pred: Trajectory, gt: Trajectory, delta: int = 1,
        max_dt: float = DEFAULT_MAX_DT):
    """Relative pose error over associated frames `delta` apart.

    Translation residuals are taken after a global scale alignment of the
    predicted centers; rotation residuals are geodesic angles in degrees.
    """
    if delta < 1:
        raise Geom4dError(f"delta must be >= 1, got {delta}")
    pairs = associate(pred, gt, max_dt)
    if len(pairs) < delta + 1:
        raise Geom4dError(f"need at least {delta + 1} associated pairs, got {len(pairs)}")
    pred_w = pred.as_world_from_camera()
    gt_w = gt.as_world_from_camera()
    p_poses = [pred_w.poses[i] for i, _ in pairs]
    g_poses = [gt_w.poses[j] for _, j in pairs]
    pc = np.array([p.center() for p in p_poses])
    gc = np.array([p.center() for p in g_poses])
    try:
        scale = umeyama_sim3(pc, gc).scale
    except DegenerateGeometry:
        scale = 1.0
    p_scaled = [Pose(p.rotation, scale * p.translation, p.convention) for p in p_poses]
    trans_sq = []
    rot_sq = []
    for i in range(len(pairs) - delta):
        rot_g, t_g = _relative(g_poses[i], g_poses[i + delta])
        rot_p, t_p = _relative(p_scaled[i], p_scaled[i + delta])
        conj = rot_g.conjugate()
        err_rot = (conj * rot_p).normalized()
        err_t = conj.rotate(t_p - t_g)
        trans_sq.append(float(err_t @ err_t))
        ang = rotation_geodesic_error(err_rot, Quaternion.identity())
        rot_sq.append(math.degrees(ang) ** 2)
    rpe_trans = math.sqrt(sum(trans_sq) / len(trans_sq))
    rpe_rot = math.sqrt(sum(rot_sq) / len(rot_sq))
    return rpe_trans, rpe_rot


def pose_metrics(pred: Trajectory, gt: Trajectory, align: str = "sim3",
                 delta: int = 1, max_dt: float = DEFAULT_MAX_DT) -> PoseMetrics:
    """Bundle ATE and RPE into one report."""
    ate_rmse = ate(pred, gt, align, max_dt)
    rpe_trans, rpe_rot = rpe(pred, gt, delta, max_dt)
    return PoseMetrics(ate_rmse, rpe_trans, rpe_rot)
