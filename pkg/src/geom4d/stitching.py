"""Sliding-window stitching and trajectory smoothing.

Depth windows are harmonized by a relative scale (mean of element-wise
division over the jointly valid overlap) then blended with linear ramp
weights. Pose windows are aligned into the accumulated frame with a
similarity fit on the overlapping camera centers, translations blended
with the same ramp and rotations blended by slerp. A constant-velocity
Kalman filter plus RTS backward pass smooths translations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .depth_codec import DepthVideo
from .errors import DegenerateGeometry, Geom4dError
from .geometry import (Convention, Pose, Sim3, Trajectory, slerp,
                       umeyama_sim3)

DEFAULT_PROCESS_SIGMA = 0.01
DEFAULT_OBS_SIGMA = 0.05


@dataclass
class WindowSet:
    """Sliding windows (start_frame, payload) with a fixed stride."""

    windows: list
    stride: int

    def __post_init__(self):
        if not self.windows:
            raise Geom4dError("window set is empty")
        starts = [s for s, _ in self.windows]
        for k in range(1, len(starts)):
            if starts[k] - starts[k - 1] != self.stride:
                raise Geom4dError(
                    f"window starts must increase by stride {self.stride}, got {starts}")
        for k in range(1, len(self.windows)):
            prev_start, prev_payload = self.windows[k - 1]
            if prev_start + _payload_len(prev_payload) - starts[k] < 1:
                raise Geom4dError(f"windows {k - 1} and {k} do not overlap")


def _payload_len(payload) -> int:
    if isinstance(payload, DepthVideo):
        return payload.shape[0]
    return len(payload)


def _ramp(n: int) -> np.ndarray:
    """Incoming-side blend weights over an n-frame overlap (endpoints included)."""
    if n == 1:
        return np.array([1.0])
    return np.linspace(0.0, 1.0, n)


def stitch_depth(ws: WindowSet) -> DepthVideo:
    """Left-to-right sweep harmonizing each incoming window's scale."""
    start0, first = ws.windows[0]
    frames = first.frames.copy()
    valid = first.valid.copy()
    for start, win in ws.windows[1:]:
        offset = start - start0
        overlap = frames.shape[0] - offset
        acc_olap = frames[offset:]
        acc_ok = valid[offset:]
        new = win.frames
        new_ok = win.valid
        joint = acc_ok & new_ok[:overlap]
        if not joint.any():
            raise Geom4dError("overlap region has no jointly valid pixels")
        ratio = float(np.mean(acc_olap[joint] / new[:overlap][joint]))
        new = new * ratio
        w_in = _ramp(overlap)
        blended = np.full_like(acc_olap, np.nan)
        for k in range(overlap):
            both = acc_ok[k] & new_ok[k]
            only_acc = acc_ok[k] & ~new_ok[k]
            only_new = new_ok[k] & ~acc_ok[k]
            out = blended[k]
            out[both] = (1.0 - w_in[k]) * acc_olap[k][both] + w_in[k] * new[k][both]
            out[only_acc] = acc_olap[k][only_acc]
            out[only_new] = new[k][only_new]
        frames = np.concatenate([frames[:offset], blended, new[overlap:]], axis=0)
        valid = np.concatenate(
            [valid[:offset], acc_ok | new_ok[:overlap], new_ok[overlap:]], axis=0)
    frames = frames.copy()
    frames[~valid] = np.nan
    return DepthVideo(frames)


def _se3_from_pose_pair(acc: Pose, new: Pose) -> Sim3:
    """Rigid world transform G with G(new) = acc, for world_from_camera poses."""
    rot = (acc.rotation * new.rotation.conjugate()).normalized()
    trans = acc.translation - rot.rotate(new.translation)
    return Sim3(1.0, rot, trans)


def stitch_poses(ws: WindowSet):
    """Align and blend overlapping trajectory windows.

    Returns (trajectory, info) where info lists, per incoming window, the
    similarity scale used and whether the degenerate-overlap SE(3)
    fallback fired.
    """
    start0, first = ws.windows[0]
    first = first.as_world_from_camera()
    times = list(first.timestamps)
    poses = list(first.poses)
    info = {"scales": [], "se3_fallbacks": []}
    for widx, (start, win) in enumerate(ws.windows[1:], start=1):
        win = win.as_world_from_camera()
        offset = start - start0
        overlap = len(poses) - offset
        if overlap < 2:
            raise Geom4dError(f"window {widx}: pose stitching needs >= 2 overlap frames")
        acc_olap = poses[offset:]
        new_centers = np.array([p.center() for p in win.poses[:overlap]])
        acc_centers = np.array([p.center() for p in acc_olap])
        try:
            sim = umeyama_sim3(new_centers, acc_centers)
        except DegenerateGeometry:
            sim = _se3_from_pose_pair(acc_olap[0], win.poses[0])
            info["se3_fallbacks"].append(widx)
        info["scales"].append(sim.scale)
        aligned = [sim.apply_pose(p) for p in win.poses]
        w_in = _ramp(overlap)
        for k in range(overlap):
            rot = slerp(acc_olap[k].rotation, aligned[k].rotation, float(w_in[k]))
            trans = (1.0 - w_in[k]) * acc_olap[k].translation \
                + w_in[k] * aligned[k].translation
            poses[offset + k] = Pose(rot, trans, Convention.WORLD_FROM_CAMERA)
        poses.extend(aligned[overlap:])
        times.extend(win.timestamps[overlap:])
    return Trajectory(np.asarray(times), poses), info


def kalman_smooth(traj: Trajectory,
                  process_sigma: float = DEFAULT_PROCESS_SIGMA,
                  obs_sigma: float = DEFAULT_OBS_SIGMA) -> Trajectory:
    """Constant-velocity Kalman filter + RTS smoother on translations.

    Rotations and timestamps pass through unchanged. Each translation
    axis is filtered independently with a [position, velocity] state.
    """
    if not (process_sigma > 0 and obs_sigma > 0):
        raise Geom4dError("process and observation sigmas must be positive")
    n = len(traj)
    if n < 2:
        raise Geom4dError("smoothing needs at least 2 entries")
    ts = traj.timestamps
    dts = np.diff(ts)
    obs = np.array([p.translation for p in traj.poses])
    q = process_sigma**2
    r = obs_sigma**2
    smoothed = np.empty_like(obs)
    for axis in range(3):
        z = obs[:, axis]
        x = np.empty((n, 2))
        p_f = np.empty((n, 2, 2))
        x_pred = np.empty((n, 2))
        p_pred = np.empty((n, 2, 2))
        fs = np.empty((n - 1, 2, 2))
        x[0] = [z[0], (z[1] - z[0]) / dts[0]]
        p_f[0] = np.diag([r, (2.0 * obs_sigma / dts[0]) ** 2 + q])
        x_pred[0] = x[0]
        p_pred[0] = p_f[0]
        for k in range(1, n):
            dt = dts[k - 1]
            f = np.array([[1.0, dt], [0.0, 1.0]])
            fs[k - 1] = f
            qk = q * np.array([[dt**3 / 3.0, dt**2 / 2.0], [dt**2 / 2.0, dt]])
            xp = f @ x[k - 1]
            pp = f @ p_f[k - 1] @ f.T + qk
            x_pred[k] = xp
            p_pred[k] = pp
            innov = z[k] - xp[0]
            s_k = pp[0, 0] + r
            gain = pp[:, 0] / s_k
            x[k] = xp + gain * innov
            p_f[k] = pp - np.outer(gain, pp[0, :])
        xs = x.copy()
        ps = p_f.copy()
        for k in range(n - 2, -1, -1):
            c = p_f[k] @ fs[k].T @ np.linalg.inv(p_pred[k + 1])
            xs[k] = x[k] + c @ (xs[k + 1] - x_pred[k + 1])
            ps[k] = p_f[k] + c @ (ps[k + 1] - p_pred[k + 1]) @ c.T
        smoothed[:, axis] = xs[:, 0]
    out_poses = [
        Pose(p.rotation, smoothed[i], p.convention) for i, p in enumerate(traj.poses)
    ]
    return Trajectory(ts.copy(), out_poses)
