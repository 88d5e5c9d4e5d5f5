"""Command-line interface: one subcommand per pipeline stage.

All subcommands print a deterministic JSON report on stdout (sorted keys,
floats at 9 significant digits) and diagnostics on stderr. Exit codes:
0 success, 1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bundle_adjust as ba
from . import depth_codec, evaluation, fileio, losses, raymap, slicing, stitching
from .errors import Geom4dError
from .geometry import Intrinsics, inverse


def _fmt_float(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        raise Geom4dError(f"non-finite value {x} in report")
    s = f"{x:.9g}"
    if "." not in s and "e" not in s and "E" not in s:
        s += ".0"
    return s


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, fixed float formatting."""
    if isinstance(obj, dict):
        items = ", ".join(
            f"{json.dumps(str(k))}: {dumps(v)}" for k, v in sorted(obj.items()))
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if obj is None:
        return "null"
    return json.dumps(obj)


def _emit(obj) -> None:
    sys.stdout.write(dumps(obj) + "\n")


def _read_depth(path) -> depth_codec.DepthVideo:
    dims, data = fileio.read_tensor(path)
    if len(dims) != 3:
        raise Geom4dError(f"{path}: depth tensor must be T x H x W, got {dims}")
    return depth_codec.DepthVideo(data.astype(np.float64))


def _read_mask(path, shape) -> np.ndarray:
    dims, data = fileio.read_tensor(path)
    if tuple(dims) != tuple(shape):
        raise Geom4dError(f"{path}: mask shape {dims} does not match data {shape}")
    return data > 0.5


def _read_raymap(path) -> raymap.Raymap:
    dims, data = fileio.read_tensor(path)
    if len(dims) != 4 or dims[1] != 6:
        raise Geom4dError(f"{path}: raymap tensor must be T x 6 x H x W, got {dims}")
    return raymap.Raymap(data.astype(np.float64))


def _read_manifest(path):
    with open(path, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    if not isinstance(entries, list) or not entries:
        raise Geom4dError(f"{path}: manifest must be a non-empty JSON array")
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for e in entries:
        out.append((int(e["start"]), os.path.join(base, e["path"])))
    return out


def _window_set(entries, payloads, stride):
    if stride is None:
        stride = entries[1][0] - entries[0][0] if len(entries) > 1 else 1
    return stitching.WindowSet(
        [(s, p) for (s, _), p in zip(entries, payloads)], stride)


def _cmd_encode_depth(args) -> None:
    depth = _read_depth(args.depths)
    norm, scale = depth_codec.encode_disparity(depth, args.d_min, args.d_max)
    fileio.write_tensor(args.out, norm.shape, norm.frames)
    _emit({"frames": norm.shape[0], "max_disparity": scale.max_disparity})


def _cmd_decode_depth(args) -> None:
    dims, data = fileio.read_tensor(args.depths)
    if len(dims) != 3:
        raise Geom4dError(f"{args.depths}: expected T x H x W, got {dims}")
    norm = depth_codec.NormalizedDisparityVideo(data.astype(np.float64))
    scale = depth_codec.ClipScale(args.scale) if args.scale is not None else None
    depth = depth_codec.decode_disparity(norm, scale)
    fileio.write_tensor(args.out, depth.shape, depth.frames)
    _emit({"frames": depth.shape[0],
           "invalid_pixels": int((~depth.valid).sum())})


def _intrinsics_from_args(args, width, height) -> Intrinsics:
    fy = args.fy if args.fy is not None else args.fx
    cx = args.cx if args.cx is not None else width / 2.0
    cy = args.cy if args.cy is not None else height / 2.0
    return Intrinsics(args.fx, fy, cx, cy, width, height)


def _cmd_build_raymap(args) -> None:
    traj = fileio.read_tum(args.init_traj)
    extr = [inverse(p) for p in traj.poses]
    k = _intrinsics_from_args(args, args.width, args.height)
    rm = raymap.build_raymap(extr, k, depth_codec.ClipScale(args.scale),
                             raymap.RayEncodingConfig(args.s_ray))
    fileio.write_tensor(args.out, rm.shape, rm.frames)
    _emit({"frames": rm.shape[0], "height": k.height, "width": k.width})


def _cmd_raymap_to_camera(args) -> None:
    rm = _read_raymap(args.raymap)
    decoded = raymap.decode_origin_channels(rm, raymap.RayEncodingConfig(args.s_ray))
    extr, intr = raymap.raymap_to_camera(decoded)
    if args.intrinsics == "lsq":
        intr = raymap.recover_intrinsics_lsq(decoded, extr)
    from .geometry import Trajectory
    traj = Trajectory(np.arange(len(extr), dtype=np.float64),
                      [inverse(e) for e in extr])
    fileio.write_tum(args.out, traj)
    _emit({
        "frames": len(extr),
        "intrinsics": [
            {"cx": k.cx, "cy": k.cy, "fx": k.fx, "fy": k.fy} for k in intr
        ],
    })


def _cmd_project_pointmap(args) -> None:
    depth = _read_depth(args.depths)
    rm = _read_raymap(args.raymap)
    decoded = raymap.decode_origin_channels(rm, raymap.RayEncodingConfig(args.s_ray))
    pm = losses.project_pointmap(depth, decoded)
    fileio.write_tensor(args.out, pm.points.shape, pm.points)
    _emit({"frames": pm.points.shape[0], "valid_points": int(pm.valid.sum())})


def _cmd_eval_depth(args) -> None:
    pred = _read_depth(args.pred)
    gt = _read_depth(args.gt)
    mask = _read_mask(args.mask, gt.shape) if args.mask else None
    m = evaluation.depth_metrics(pred, gt, mask, args.align, args.scale_estimator)
    _emit({"abs_rel": m.abs_rel, "delta_125": m.delta_125})


def _cmd_eval_pose(args) -> None:
    pred = fileio.read_tum(args.pred)
    gt = fileio.read_tum(args.gt)
    m = evaluation.pose_metrics(pred, gt, args.align, args.delta, args.max_dt)
    _emit({"ate_rmse": m.ate_rmse, "rpe_rot_deg": m.rpe_rot, "rpe_trans": m.rpe_trans})


def _cmd_stitch_depth(args) -> None:
    entries = _read_manifest(args.windows)
    payloads = [_read_depth(p) for _, p in entries]
    ws = _window_set(entries, payloads, args.stride)
    out = stitching.stitch_depth(ws)
    fileio.write_tensor(args.out, out.shape, out.frames)
    _emit({"frames": out.shape[0], "windows": len(entries)})


def _cmd_stitch_pose(args) -> None:
    entries = _read_manifest(args.windows)
    payloads = [fileio.read_tum(p) for _, p in entries]
    ws = _window_set(entries, payloads, args.stride)
    traj, info = stitching.stitch_poses(ws)
    fileio.write_tum(args.out, traj)
    _emit({"entries": len(traj), "scales": info["scales"],
           "se3_fallbacks": info["se3_fallbacks"], "windows": len(entries)})


def _cmd_smooth(args) -> None:
    traj = fileio.read_tum(args.traj)
    out = stitching.kalman_smooth(traj, args.process_sigma, args.obs_sigma)
    fileio.write_tum(args.out, out)
    _emit({"entries": len(out)})


def _cmd_slice(args) -> None:
    stats = slicing.read_frame_stats(args.stats)
    cfg = slicing.SliceConfig(
        min_keypoints=args.min_keypoints,
        max_low_texture_ratio=args.max_low_texture_ratio,
        max_dynamic_ratio=args.max_dynamic_ratio,
        max_flow_mag=args.max_flow_mag,
        max_fb_err_ratio=args.max_fb_err_ratio,
        min_segment_len=args.min_segment_len,
    )
    segments = slicing.slice_video(stats, cfg)
    payload = [[s.start, s.end] for s in segments]
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dumps(payload) + "\n")
    _emit(payload)


def _cmd_refine(args) -> None:
    depths = _read_depth(args.depths)
    t, h, w = depths.shape
    traj = fileio.read_tum(args.init_traj)
    if len(traj) != t:
        raise Geom4dError(f"{len(traj)} trajectory entries vs {t} depth frames")
    init_poses = [inverse(p) for p in traj.poses]
    k = _intrinsics_from_args(args, w, h)
    tracks = _read_tracks(args.tracks)
    masks = None
    if args.masks:
        masks = _read_mask(args.masks, depths.shape)
    problem = ba.build_problem(tracks, depths, init_poses, k, masks)
    cfg = ba.BASolverConfig(robust=args.robust, cauchy_scale=args.cauchy_scale,
                            max_iters=args.max_iters)
    poses, out_k, report = ba.solve(problem, cfg)
    from .geometry import Trajectory
    out_traj = Trajectory(traj.timestamps.copy(), [inverse(p) for p in poses])
    fileio.write_tum(args.out, out_traj)
    _emit({
        "converged": report.converged,
        "dropped_observations": report.dropped_observations,
        "final_cost": report.final_cost,
        "focal": out_k.fx,
        "initial_cost": report.initial_cost,
        "iterations": report.iterations,
    })


def _read_tracks(path) -> list:
    tracks = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                obj = json.loads(line)
                obs = [(int(o["frame"]), float(o["u"]), float(o["v"]))
                       for o in obj["obs"]]
                tracks.append(ba.Track(int(obj["id"]), obs))
            except (KeyError, ValueError, TypeError) as exc:
                raise Geom4dError(f"{path}:{lineno}: bad track record: {exc}") from exc
    if not tracks:
        raise Geom4dError(f"{path}: no tracks")
    return tracks


def _cmd_losses(args) -> None:
    if args.metric == "ms-ssim":
        _, a = fileio.read_tensor(args.pred)
        _, b = fileio.read_tensor(args.gt)
        a = a.astype(np.float64)
        b = b.astype(np.float64)
        if a.ndim == 3:
            vals = [losses.ms_ssim(a[i], b[i], dynamic_range=args.dynamic_range)
                    for i in range(a.shape[0])]
            _emit({"ms_ssim": float(np.mean(vals))})
        else:
            _emit({"ms_ssim": losses.ms_ssim(a, b, dynamic_range=args.dynamic_range)})
    elif args.metric == "ssi":
        pred = _read_depth(args.pred)
        gt = _read_depth(args.gt)
        mask = _read_mask(args.mask, gt.shape) if args.mask else None
        align = losses.ssi_align(pred, gt, mask)
        loss = losses.ssi_loss(pred, gt, mask, args.alpha, args.num_scales)
        _emit({"loss": loss, "s": align.s, "t": align.t})
    else:  # pointmap
        pdims, pdata = fileio.read_tensor(args.pred)
        gdims, gdata = fileio.read_tensor(args.gt)
        if len(pdims) != 4 or pdims[-1] != 3:
            raise Geom4dError(f"{args.pred}: pointmap must be T x H x W x 3")
        if args.gt_depth is None:
            raise Geom4dError("pointmap loss requires --gt-depth for weighting")
        gt_depth = _read_depth(args.gt_depth)
        pred_pm = losses.PointMap(pdata.astype(np.float64))
        gt_pm = losses.PointMap(gdata.astype(np.float64),
                                depths=gt_depth.frames)
        _emit({"pointmap_loss": losses.pointmap_loss(pred_pm, gt_pm, args.norm_p)})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geom4d",
        description="Geometry toolbox: depth/raymap codecs, pose evaluation, "
                    "stitching, slicing and bundle adjustment.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(
            name, help=help_,
            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(fn=fn)
        p.add_argument("--threads", type=int, default=1,
                       help="bound on internal data parallelism; "
                            "output is identical for any value")
        return p

    p = add("encode-depth", _cmd_encode_depth,
            "encode depth into normalized disparity")
    p.add_argument("--depths", required=True, help="input depth tensor (T x H x W)")
    p.add_argument("--d-min", type=float, default=depth_codec.DEFAULT_D_MIN,
                   help="lower clip depth")
    p.add_argument("--d-max", type=float, default=depth_codec.DEFAULT_D_MAX,
                   help="upper clip depth")
    p.add_argument("--out", required=True, help="output disparity tensor")

    p = add("decode-depth", _cmd_decode_depth,
            "decode normalized disparity back to depth")
    p.add_argument("--depths", required=True, help="input disparity tensor")
    p.add_argument("--scale", type=float, default=None,
                   help="max disparity from encode-depth (default: up-to-scale)")
    p.add_argument("--out", required=True, help="output depth tensor")

    p = add("build-raymap", _cmd_build_raymap, "camera trajectory to raymap")
    p.add_argument("--init-traj", required=True, help="TUM trajectory (camera poses)")
    p.add_argument("--fx", type=float, required=True, help="focal length, pixels")
    p.add_argument("--fy", type=float, default=None, help="default: fx")
    p.add_argument("--cx", type=float, default=None, help="default: width/2")
    p.add_argument("--cy", type=float, default=None, help="default: height/2")
    p.add_argument("--width", type=int, required=True, help="image width, pixels")
    p.add_argument("--height", type=int, required=True, help="image height, pixels")
    p.add_argument("--scale", type=float, required=True,
                   help="max disparity normalizer shared with the depth codec")
    p.add_argument("--s-ray", type=float, default=raymap.DEFAULT_S_RAY,
                   help="translation scaling factor")
    p.add_argument("--out", required=True, help="output raymap tensor")

    p = add("raymap-to-camera", _cmd_raymap_to_camera,
            "recover camera parameters from a raymap")
    p.add_argument("--raymap", required=True, help="input raymap tensor")
    p.add_argument("--s-ray", type=float, default=raymap.DEFAULT_S_RAY,
                   help="translation scaling factor")
    p.add_argument("--intrinsics", choices=["direct", "lsq"], default="lsq",
                   help="mean-ray rule (direct) or least-squares fit (lsq)")
    p.add_argument("--out", required=True, help="output TUM trajectory")

    p = add("project-pointmap", _cmd_project_pointmap,
            "project disparity-normalized depth through a raymap")
    p.add_argument("--depths", required=True, help="depth tensor (normalized scale)")
    p.add_argument("--raymap", required=True, help="raymap tensor (encoded origins)")
    p.add_argument("--s-ray", type=float, default=raymap.DEFAULT_S_RAY,
                   help="translation scaling factor")
    p.add_argument("--out", required=True, help="output pointmap tensor (T x H x W x 3)")

    p = add("eval-depth", _cmd_eval_depth, "video depth metrics")
    p.add_argument("--pred", required=True, help="predicted depth tensor")
    p.add_argument("--gt", required=True, help="ground-truth depth tensor")
    p.add_argument("--mask", default=None, help="optional validity mask tensor")
    p.add_argument("--align", choices=["none", "scale", "scale_shift"],
                   default="scale", help="per-sequence alignment mode")
    p.add_argument("--scale-estimator", choices=["lsq", "median"], default="lsq",
                   help="how the per-sequence scale is fit")

    p = add("eval-pose", _cmd_eval_pose, "trajectory ATE/RPE metrics")
    p.add_argument("--pred", required=True, help="predicted TUM trajectory")
    p.add_argument("--gt", required=True, help="ground-truth TUM trajectory")
    p.add_argument("--align", choices=["sim3", "se3", "none"], default="sim3",
                   help="trajectory alignment before ATE")
    p.add_argument("--delta", type=int, default=1, help="RPE frame delta")
    p.add_argument("--max-dt", type=float, default=evaluation.DEFAULT_MAX_DT,
                   help="association window in seconds")

    p = add("stitch-depth", _cmd_stitch_depth, "stitch overlapping depth windows")
    p.add_argument("--windows", required=True,
                   help="JSON manifest: [{start, path}, ...] of depth tensors")
    p.add_argument("--stride", type=int, default=None,
                   help="default: inferred from the manifest starts")
    p.add_argument("--out", required=True)

    p = add("stitch-pose", _cmd_stitch_pose, "stitch overlapping pose windows")
    p.add_argument("--windows", required=True,
                   help="JSON manifest: [{start, path}, ...] of TUM files")
    p.add_argument("--stride", type=int, default=None,
                   help="default: inferred from the manifest starts")
    p.add_argument("--out", required=True)

    p = add("smooth", _cmd_smooth, "Kalman-smooth trajectory translations")
    p.add_argument("--traj", required=True, help="input TUM trajectory")
    p.add_argument("--process-sigma", type=float,
                   default=stitching.DEFAULT_PROCESS_SIGMA,
                   help="constant-velocity process noise")
    p.add_argument("--obs-sigma", type=float, default=stitching.DEFAULT_OBS_SIGMA,
                   help="translation observation noise")
    p.add_argument("--out", required=True)

    p = add("slice", _cmd_slice, "split a frame-stat stream into clean segments")
    p.add_argument("--stats", required=True, help="JSONL frame statistics")
    p.add_argument("--min-keypoints", type=int, default=50,
                   help="frame-level keypoint floor")
    p.add_argument("--max-low-texture-ratio", type=float, default=0.5,
                   help="frame-level low-texture ceiling")
    p.add_argument("--max-dynamic-ratio", type=float, default=0.5,
                   help="frame-level dynamic-area ceiling")
    p.add_argument("--max-flow-mag", type=float, default=60.0,
                   help="boundary-level flow magnitude ceiling, pixels")
    p.add_argument("--max-fb-err-ratio", type=float, default=2.0,
                   help="boundary-level forward-backward error ceiling")
    p.add_argument("--min-segment-len", type=int, default=8,
                   help="segments shorter than this are dropped")
    p.add_argument("--out", default=None, help="also write segments to this file")

    p = add("refine", _cmd_refine, "bundle-adjust camera poses against tracks")
    p.add_argument("--tracks", required=True, help="JSONL tracks {id, obs}")
    p.add_argument("--depths", required=True, help="depth tensor (T x H x W)")
    p.add_argument("--init-traj", required=True, help="initial TUM trajectory")
    p.add_argument("--masks", default=None, help="static-region masks (1 = static)")
    p.add_argument("--fx", type=float, required=True,
                   help="initial focal length, pixels")
    p.add_argument("--fy", type=float, default=None, help="default: fx")
    p.add_argument("--cx", type=float, default=None, help="default: width/2")
    p.add_argument("--cy", type=float, default=None, help="default: height/2")
    p.add_argument("--robust", choices=["cauchy", "none"], default="cauchy",
                   help="robust loss on residual blocks")
    p.add_argument("--cauchy-scale", type=float, default=ba.DEFAULT_CAUCHY_SCALE,
                   help="cauchy scale c, pixels")
    p.add_argument("--max-iters", type=int, default=100,
                   help="LM iteration cap")
    p.add_argument("--out", required=True, help="refined TUM trajectory")

    p = add("losses", _cmd_losses, "image/depth/pointmap quality metrics")
    p.add_argument("--metric", choices=["ms-ssim", "ssi", "pointmap"],
                   required=True, help="which metric to compute")
    p.add_argument("--pred", required=True, help="predicted tensor")
    p.add_argument("--gt", required=True, help="reference tensor")
    p.add_argument("--mask", default=None, help="optional validity mask tensor")
    p.add_argument("--gt-depth", default=None,
                   help="depth tensor weighting the pointmap loss")
    p.add_argument("--alpha", type=float, default=losses.SSI_ALPHA,
                   help="gradient-term weight of the ssi loss")
    p.add_argument("--num-scales", type=int, default=losses.SSI_NUM_SCALES,
                   help="dyadic scales in the ssi gradient term")
    p.add_argument("--norm-p", type=int, choices=[1, 2], default=2,
                   help="pointmap distance norm")
    p.add_argument("--dynamic-range", type=float, default=1.0,
                   help="ms-ssim dynamic range L")

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads < 1:
        sys.stderr.write("error: usage: --threads must be >= 1\n")
        return 2
    try:
        args.fn(args)
    except Geom4dError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1
    return 0


def main() -> None:
    sys.exit(run())
