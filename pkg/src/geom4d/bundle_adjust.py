"""Robust bundle adjustment over camera poses and one shared focal length.

Structure comes from dense depth: each observation is anchored to the 3D
point obtained by unprojecting it with its frame's (bilinear) depth, and
only the per-frame poses plus a shared log-focal are optimized. For every
ordered observation pair (i, j) within a track the residual block holds
the forward reprojection (anchor of i projected into j) and its mirrored
backward counterpart, 4 pixel components per pair, ordered
[fwd_u, fwd_v, bwd_u, bwd_v]; pairs are enumerated per track in frame
order. A Levenberg-Marquardt loop minimizes the sum of Cauchy-robustified
squared block norms; the first frame is gauge-fixed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .depth_codec import DepthVideo
from .errors import Geom4dError
from .geometry import Convention, Intrinsics, Pose, Quaternion

BEHIND_EPS = 1e-8
DEFAULT_CAUCHY_SCALE = 2.0


@dataclass
class Track:
    """One feature track: (frame, u, v) observations in pixel coordinates."""

    id: int
    observations: list

    def __post_init__(self):
        if len(self.observations) < 2:
            raise Geom4dError(f"track {self.id}: needs at least 2 observations")
        frames = [f for f, _, _ in self.observations]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise Geom4dError(f"track {self.id}: frames must be strictly increasing")


@dataclass
class BASolverConfig:
    robust: str = "cauchy"
    cauchy_scale: float = DEFAULT_CAUCHY_SCALE
    max_iters: int = 100
    grad_tol: float = 1e-10
    step_tol: float = 1e-10

    def __post_init__(self):
        if self.robust not in ("cauchy", "none"):
            raise Geom4dError(f"unknown robust loss '{self.robust}'")


@dataclass
class BAProblem:
    """Preprocessed observations and anchor depths ready for solving."""

    n_frames: int
    init_poses: list
    init_intrinsics: Intrinsics
    obs_frame: np.ndarray      # (M,) frame index per retained observation
    obs_uv: np.ndarray         # (M, 2) pixel coordinates
    obs_depth: np.ndarray      # (M,) bilinear depth at the observation
    pair_a: np.ndarray         # (P,) anchor-side observation index
    pair_b: np.ndarray         # (P,) target-side observation index
    dropped_observations: int = 0

    @property
    def n_pairs(self) -> int:
        return len(self.pair_a)


@dataclass
class BAReport:
    iterations: int
    initial_cost: float
    final_cost: float
    converged: bool
    dropped_observations: int


def _bilinear_depth(frame: np.ndarray, valid: np.ndarray, u: float, v: float):
    """Depth at continuous pixel coords; None when any support pixel is invalid."""
    h, w = frame.shape
    x = u - 0.5
    y = v - 0.5
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    wx = x - x0
    wy = y - y0
    x0c, x1c = np.clip([x0, x0 + 1], 0, w - 1)
    y0c, y1c = np.clip([y0, y0 + 1], 0, h - 1)
    if not (valid[y0c, x0c] and valid[y0c, x1c] and valid[y1c, x0c] and valid[y1c, x1c]):
        return None
    top = frame[y0c, x0c] * (1.0 - wx) + frame[y0c, x1c] * wx
    bot = frame[y1c, x0c] * (1.0 - wx) + frame[y1c, x1c] * wx
    return float(top * (1.0 - wy) + bot * wy)


def build_problem(tracks: list, depths: DepthVideo, init_poses: list,
                  init_intrinsics: Intrinsics, static_masks=None) -> BAProblem:
    """Filter observations onto valid static depth and precompute anchors."""
    n_frames = len(init_poses)
    if depths.shape[0] != n_frames:
        raise Geom4dError(
            f"{depths.shape[0]} depth frames vs {n_frames} poses")
    for p in init_poses:
        if p.convention is not Convention.CAMERA_FROM_WORLD:
            raise Geom4dError("initial poses must be camera_from_world extrinsics")
    k = init_intrinsics
    valid = depths.valid
    obs_frame, obs_uv, obs_depth = [], [], []
    pair_a, pair_b = [], []
    dropped = 0
    for track in tracks:
        retained = []
        for f, u, v in track.observations:
            if not (0 <= f < n_frames):
                raise Geom4dError(f"track {track.id}: frame {f} out of range")
            if not (0.0 <= u < k.width and 0.0 <= v < k.height):
                raise Geom4dError(
                    f"track {track.id}: observation ({u}, {v}) outside image bounds")
            if static_masks is not None and not static_masks[f][int(v), int(u)]:
                dropped += 1
                continue
            d = _bilinear_depth(depths.frames[f], valid[f], u, v)
            if d is None or d <= 0:
                dropped += 1
                continue
            retained.append(len(obs_frame))
            obs_frame.append(f)
            obs_uv.append((u, v))
            obs_depth.append(d)
        for ai in range(len(retained)):
            for bi in range(ai + 1, len(retained)):
                pair_a.append(retained[ai])
                pair_b.append(retained[bi])
    if not pair_a:
        raise Geom4dError("no usable observation pairs after filtering")
    return BAProblem(
        n_frames=n_frames,
        init_poses=list(init_poses),
        init_intrinsics=init_intrinsics,
        obs_frame=np.asarray(obs_frame, dtype=np.int64),
        obs_uv=np.asarray(obs_uv, dtype=np.float64),
        obs_depth=np.asarray(obs_depth, dtype=np.float64),
        pair_a=np.asarray(pair_a, dtype=np.int64),
        pair_b=np.asarray(pair_b, dtype=np.int64),
        dropped_observations=dropped,
    )


def anchor_points_world(problem: BAProblem, poses: list, k: Intrinsics) -> np.ndarray:
    """World-frame anchor points for the retained observations."""
    x_cam = _anchors_camera(problem, 0.5 * (k.fx + k.fy), k.cx, k.cy)
    out = np.empty_like(x_cam)
    for f in range(problem.n_frames):
        sel = problem.obs_frame == f
        if not sel.any():
            continue
        r = poses[f].rotation.matrix()
        t = poses[f].translation
        out[sel] = (x_cam[sel] - t) @ r
    return out


def _anchors_camera(problem: BAProblem, focal: float, cx: float, cy: float):
    x = problem.obs_depth * (problem.obs_uv[:, 0] - cx) / focal
    y = problem.obs_depth * (problem.obs_uv[:, 1] - cy) / focal
    return np.stack([x, y, problem.obs_depth], axis=1)


def _pose_arrays(poses: list):
    r = np.stack([p.rotation.matrix() for p in poses])
    t = np.stack([p.translation for p in poses])
    return r, t


def _skew_batch(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _directed_blocks(problem, r_all, t_all, focal, cx, cy, anchor_idx, target_idx):
    """Residuals and Jacobian blocks for one direction of every pair.

    Returns (res (P,2), j_anchor (P,2,6), j_target (P,2,6), j_focal (P,2),
    behind (P,)). Parameter blocks are [translation(3), rotation(3)]
    increments applied as Exp(delta) o E on the respective frame, plus the
    shared log-focal.
    """
    fi = problem.obs_frame[anchor_idx]
    fj = problem.obs_frame[target_idx]
    x_cam = _anchors_camera(problem, focal, cx, cy)[anchor_idx]
    r_i = r_all[fi]
    r_j = r_all[fj]
    # M = E_j o E_i^-1
    r_ij = np.einsum("pab,pcb->pac", r_j, r_i)
    t_ij = t_all[fj] - np.einsum("pab,pb->pa", r_ij, t_all[fi])
    y = np.einsum("pab,pb->pa", r_ij, x_cam) + t_ij
    z = y[:, 2]
    behind = z <= BEHIND_EPS
    z_safe = np.where(behind, 1.0, z)
    gx = y[:, 0] / z_safe
    gy = y[:, 1] / z_safe
    res = np.stack([focal * gx + cx, focal * gy + cy], axis=1) \
        - problem.obs_uv[target_idx]
    # d(projection)/dY, scaled by focal
    jg = np.zeros((len(z), 2, 3))
    jg[:, 0, 0] = focal / z_safe
    jg[:, 0, 2] = -focal * gx / z_safe
    jg[:, 1, 1] = focal / z_safe
    jg[:, 1, 2] = -focal * gy / z_safe
    j_target = np.concatenate([jg, -np.einsum("prc,pcb->prb", jg, _skew_batch(y))],
                              axis=2)
    jg_rij = np.einsum("prc,pcb->prb", jg, r_ij)
    j_anchor = np.concatenate(
        [-jg_rij, np.einsum("prc,pcb->prb", jg_rij, _skew_batch(x_cam))], axis=2)
    dxc = np.stack([-x_cam[:, 0], -x_cam[:, 1], np.zeros(len(z))], axis=1)
    j_focal = np.stack([focal * gx, focal * gy], axis=1) \
        + np.einsum("prc,pc->pr", jg_rij, dxc)
    res[behind] = 0.0
    j_target[behind] = 0.0
    j_anchor[behind] = 0.0
    j_focal[behind] = 0.0
    return res, j_anchor, j_target, j_focal, behind


def _all_blocks(problem: BAProblem, poses: list, focal: float):
    """Forward+backward residual rows and Jacobian blocks for every pair."""
    cx, cy = problem.init_intrinsics.cx, problem.init_intrinsics.cy
    r_all, t_all = _pose_arrays(poses)
    f_res, f_ja, f_jt, f_jf, f_behind = _directed_blocks(
        problem, r_all, t_all, focal, cx, cy, problem.pair_a, problem.pair_b)
    b_res, b_ja, b_jt, b_jf, b_behind = _directed_blocks(
        problem, r_all, t_all, focal, cx, cy, problem.pair_b, problem.pair_a)
    res = np.concatenate([f_res, b_res], axis=1)            # (P, 4)
    j_i = np.concatenate([f_ja, b_jt], axis=1)              # (P, 4, 6) frame of a
    j_j = np.concatenate([f_jt, b_ja], axis=1)              # (P, 4, 6) frame of b
    j_f = np.concatenate([f_jf, b_jf], axis=1)              # (P, 4)
    return res, j_i, j_j, j_f, f_behind | b_behind


def residuals(problem: BAProblem, poses: list, intrinsics: Intrinsics) -> np.ndarray:
    """Flat residual vector, 4 components per pair (see module docstring)."""
    res, _, _, _, _ = _all_blocks(problem, poses, 0.5 * (intrinsics.fx + intrinsics.fy))
    return res.reshape(-1)


def dense_jacobian(problem: BAProblem, poses: list, intrinsics: Intrinsics):
    """Residuals and the dense Jacobian over [6 params/frame ..., log-focal].

    Intended for verification at test scale; the solver accumulates
    normal equations from the same per-pair blocks without materializing
    this matrix.
    """
    focal = 0.5 * (intrinsics.fx + intrinsics.fy)
    res, j_i, j_j, j_f, _ = _all_blocks(problem, poses, focal)
    n_params = 6 * problem.n_frames + 1
    jac = np.zeros((4 * problem.n_pairs, n_params))
    rows = np.arange(problem.n_pairs) * 4
    fi = problem.obs_frame[problem.pair_a]
    fj = problem.obs_frame[problem.pair_b]
    for p in range(problem.n_pairs):
        jac[rows[p]:rows[p] + 4, 6 * fi[p]:6 * fi[p] + 6] += j_i[p]
        jac[rows[p]:rows[p] + 4, 6 * fj[p]:6 * fj[p] + 6] += j_j[p]
        jac[rows[p]:rows[p] + 4, -1] += j_f[p]
    return res.reshape(-1), jac


def cauchy_rho(s: np.ndarray, c: float) -> np.ndarray:
    return c * c * np.log1p(s / (c * c))


def cauchy_weight(s: np.ndarray, c: float) -> np.ndarray:
    return 1.0 / (1.0 + s / (c * c))


def _robust_cost_weights(res4: np.ndarray, cfg: BASolverConfig):
    """Cost and per-block IRLS weights for the (P, 4) residual rows."""
    s = np.stack([(res4[:, 0:2] ** 2).sum(axis=1),
                  (res4[:, 2:4] ** 2).sum(axis=1)], axis=1)
    if cfg.robust == "cauchy":
        cost = float(cauchy_rho(s, cfg.cauchy_scale).sum())
        w = cauchy_weight(s, cfg.cauchy_scale)
    else:
        cost = float(s.sum())
        w = np.ones_like(s)
    w_rows = np.repeat(w, 2, axis=1)  # (P, 4)
    return cost, w_rows


def _rodrigues(w: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(w))
    k = _skew_batch(w.reshape(1, 3))[0]
    if theta < 1e-12:
        return np.eye(3) + k + 0.5 * (k @ k)
    return (np.eye(3) + math.sin(theta) / theta * k
            + (1.0 - math.cos(theta)) / theta**2 * (k @ k))


def _apply_step(poses: list, focal: float, delta: np.ndarray, n_frames: int):
    new_poses = [poses[0]]
    for f in range(1, n_frames):
        d = delta[6 * (f - 1):6 * f]
        r_inc = _rodrigues(d[3:6])
        e = poses[f]
        r_new = r_inc @ e.rotation.matrix()
        t_new = r_inc @ e.translation + d[0:3]
        new_poses.append(Pose(Quaternion.from_matrix(r_new), t_new,
                              Convention.CAMERA_FROM_WORLD))
    return new_poses, focal * math.exp(float(delta[-1]))


def _normal_equations(problem, res, j_i, j_j, j_f, w_rows):
    """Accumulate J^T W J and J^T W r over pair blocks (frame 0 included)."""
    n = 6 * problem.n_frames + 1
    h = np.zeros((n, n))
    g = np.zeros(n)
    fi = problem.obs_frame[problem.pair_a]
    fj = problem.obs_frame[problem.pair_b]
    wj_i = w_rows[:, :, None] * j_i
    wj_j = w_rows[:, :, None] * j_j
    wj_f = w_rows * j_f
    n_f = problem.n_frames
    h_ii = np.einsum("pra,prb->pab", wj_i, j_i)
    h_jj = np.einsum("pra,prb->pab", wj_j, j_j)
    h_ij = np.einsum("pra,prb->pab", wj_i, j_j)
    h_if = np.einsum("pra,pr->pa", wj_i, j_f)
    h_jf = np.einsum("pra,pr->pa", wj_j, j_f)
    g_i = np.einsum("pra,pr->pa", wj_i, res)
    g_j = np.einsum("pra,pr->pa", wj_j, res)
    blocks = np.zeros((n_f, n_f, 6, 6))
    np.add.at(blocks, (fi, fi), h_ii)
    np.add.at(blocks, (fj, fj), h_jj)
    np.add.at(blocks, (fi, fj), h_ij)
    np.add.at(blocks, (fj, fi), np.swapaxes(h_ij, 1, 2))
    h[:6 * n_f, :6 * n_f] = blocks.transpose(0, 2, 1, 3).reshape(6 * n_f, 6 * n_f)
    vf = np.zeros((n_f, 6))
    np.add.at(vf, fi, h_if)
    np.add.at(vf, fj, h_jf)
    h[:6 * n_f, -1] = vf.reshape(-1)
    h[-1, :6 * n_f] = vf.reshape(-1)
    h[-1, -1] = float((wj_f * j_f).sum())
    gv = np.zeros((n_f, 6))
    np.add.at(gv, fi, g_i)
    np.add.at(gv, fj, g_j)
    g[:6 * n_f] = gv.reshape(-1)
    g[-1] = float((wj_f * res).sum())
    return h, g


def solve(problem: BAProblem, cfg: BASolverConfig | None = None):
    """Levenberg-Marquardt refinement of poses and the shared focal.

    Returns (poses, intrinsics, report). The first frame is held fixed;
    accepted steps never increase the robust cost.
    """
    if cfg is None:
        cfg = BASolverConfig()
    if problem.n_frames < 2:
        raise Geom4dError("need at least 2 frames")
    poses = list(problem.init_poses)
    k0 = problem.init_intrinsics
    focal = 0.5 * (k0.fx + k0.fy)
    free = np.r_[np.arange(6, 6 * problem.n_frames), 6 * problem.n_frames]

    res4, j_i, j_j, j_f, _ = _all_blocks(problem, poses, focal)
    cost, w_rows = _robust_cost_weights(res4, cfg)
    initial_cost = cost
    lam = 1e-4
    iterations = 0
    converged = False
    while iterations < cfg.max_iters:
        h_full, g_full = _normal_equations(problem, res4.copy(), j_i, j_j, j_f, w_rows)
        h = h_full[np.ix_(free, free)]
        g = g_full[free]
        if float(np.abs(g).max()) < cfg.grad_tol:
            converged = True
            break
        iterations += 1
        diag = np.maximum(np.diag(h), 1e-12)
        try:
            delta = np.linalg.solve(h + lam * np.diag(diag), -g)
        except np.linalg.LinAlgError:
            lam *= 4.0
            continue
        cand_poses, cand_focal = _apply_step(poses, focal, delta, problem.n_frames)
        cand_res4, cand_ji, cand_jj, cand_jf, _ = _all_blocks(
            problem, cand_poses, cand_focal)
        cand_cost, cand_w = _robust_cost_weights(cand_res4, cfg)
        if cand_cost < cost:
            poses, focal = cand_poses, cand_focal
            res4, j_i, j_j, j_f, w_rows = cand_res4, cand_ji, cand_jj, cand_jf, cand_w
            cost = cand_cost
            lam = max(lam / 3.0, 1e-12)
            if float(np.linalg.norm(delta)) < cfg.step_tol:
                converged = True
                break
        else:
            lam *= 4.0
            if lam > 1e12:
                break
    report = BAReport(
        iterations=iterations,
        initial_cost=initial_cost,
        final_cost=cost,
        converged=converged,
        dropped_observations=problem.dropped_observations,
    )
    out_k = Intrinsics(focal, focal, k0.cx, k0.cy, k0.width, k0.height)
    return poses, out_k, report
