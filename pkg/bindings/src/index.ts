/**
 * Array-in/array-out bindings over the geom4d core.
 *
 * Every operation writes its float32 inputs into the core's file formats
 * inside a temp directory, invokes the corresponding CLI subcommand, and
 * returns the parsed report plus any output arrays. Outputs are therefore
 * numerically identical to the core by construction, and `stdout` carries
 * the exact report bytes for parity checking.
 */
import { join } from "node:path";
import { writeFileSync } from "node:fs";

import { runCli, withTempDir } from "./runner.js";
import {
  BindingError,
  BoundArray,
  boundArray,
  readTensor,
  requireArray,
  writeTensor,
} from "./tensor.js";
import { readTum, writeTum } from "./trajectory.js";

export { BindingError, BoundArray, boundArray, readTensor, writeTensor } from "./tensor.js";
export { CoreError } from "./runner.js";
export { readTum, writeTum } from "./trajectory.js";

export interface BindResult {
  report: unknown;
  stdout: string;
  arrays: Record<string, BoundArray>;
}

export type Kwargs = Record<string, unknown>;

const OPS = [
  "encode_disparity", "decode_disparity", "build_raymap", "raymap_to_camera",
  "project_pointmap", "ssi_align", "ms_ssim", "depth_metrics", "ate", "rpe",
  "stitch_depth", "stitch_poses", "slice",
] as const;

export type OpName = (typeof OPS)[number];

function flag(name: string): string {
  return "--" + name.replace(/_/g, "-");
}

function kwargFlags(kwargs: Kwargs, allowed: string[]): string[] {
  const out: string[] = [];
  for (const [key, value] of Object.entries(kwargs)) {
    if (!allowed.includes(key)) {
      throw new BindingError(`unknown option '${key}' (allowed: ${allowed.join(", ")})`);
    }
    if (value === undefined || value === null) continue;
    out.push(flag(key), String(value));
  }
  return out;
}

function run(dir: string, args: string[]) {
  return runCli([...args], dir);
}

function opEncodeDisparity(arrays: Record<string, BoundArray>, kwargs: Kwargs): BindResult {
  const depth = requireArray(arrays.depth, "depth", 3);
  return withTempDir((dir) => {
    writeTensor(join(dir, "depth.aetr"), depth);
    const flags = kwargFlags(kwargs, ["d_min", "d_max", "threads"]);
    const res = run(dir, ["encode-depth", "--depths", "depth.aetr",
                          "--out", "disp.aetr", ...flags]);
    return { ...res, arrays: { disparity: readTensor(join(dir, "disp.aetr")) } };
  });
}

function opDecodeDisparity(arrays: Record<string, BoundArray>, kwargs: Kwargs): BindResult {
  const disparity = requireArray(arrays.disparity, "disparity", 3);
  return withTempDir((dir) => {
    writeTensor(join(dir, "disp.aetr"), disparity);
    const flags = kwargFlags(kwargs, ["scale", "threads"]);
    const res = run(dir, ["decode-depth", "--depths", "disp.aetr",
                          "--out", "depth.aetr", ...flags]);
    return { ...res, arrays: { depth: readTensor(join(dir, "depth.aetr")) } };
  });
}

function opBuildRaymap(arrays: Record<string, BoundArray>, kwargs: Kwargs): BindResult {
  const traj = requireArray(arrays.trajectory, "trajectory", 2);
  return withTempDir((dir) => {
    writeTum(join(dir, "traj.tum"), traj);
    const flags = kwargFlags(kwargs, ["fx", "fy", "cx", "cy", "width", "height",
                                      "scale", "s_ray", "threads"]);
    const res = run(dir, ["build-raymap", "--init-traj", "traj.tum",
                          "--out", "raymap.aetr", ...flags]);
    return { ...res, arrays: { raymap: readTensor(join(dir, "raymap.aetr")) } };
  });
}

function opRaymapToCamera(arrays: Record<string, BoundArray>, kwargs: Kwargs): BindResult {
  const raymap = requireArray(arrays.raymap, "raymap", 4);
  return withTempDir((dir) => {
    writeTensor(join(dir, "raymap.aetr"), raymap);
    const flags = kwargFlags(kwargs, ["s_ray", "intrinsics", "threads"]);
    const res = run(dir, ["raymap-to-camera", "--raymap", "raymap.aetr",
                          "--out", "traj.tum", ...flags]);
    return { ...res, arrays: { trajectory: readTum(join(dir, "traj.tum")) } };
  });
}

function opProjectPointmap(arrays: Record<string, BoundArray>, kwargs: Kwargs): BindResult {
  const depth = requireArray(arrays.depth, "depth", 3);
  const raymap = requireArray(arrays.raymap, "raymap", 4);
  return withTempDir((dir) => {
    writeTensor(join(dir, "depth.aetr"), depth);
    writeTensor(join(dir, "raymap.aetr"), raymap);
    const flags = kwargFlags(kwargs, ["s_ray", "threads"]);
    const res = run(dir, ["project-pointmap", "--depths", "depth.aetr",
                          "--raymap", "raymap.aetr", "--out", "pm.aetr", ...flags]);
    return { ...res, arrays: { pointmap: readTensor(join(dir, "pm.aetr")) } };
  });
}

function writeOptionalMask(dir: string, arrays: Record<string, BoundArray>): string[] {
  if (arrays.mask === undefined) return [];
  writeTensor(join(dir, "mask.aetr"), requireArray(arrays.mask, "mask"));
  return ["--mask", "mask.aetr"];
}

function opSsiAlign(arrays: Record<string, BoundArray>, kwargs: Kwargs): BindResult {
  const pred = requireArray(arrays.pred, "pred", 3);
  const gt = requireArray(arrays.gt, "gt", 3);
  return withTempDir((dir) => {
    writeTensor(join(dir, "pred.aetr"), pred);
    writeTensor(join(dir, "gt.aetr"), gt);
    const maskFlags = writeOptionalMask(dir, arrays);
    const flags = kwargFlags(kwargs, ["alpha", "num_scales", "threads"]);
    const res = run(dir, ["losses", "--metric", "ssi", "--pred", "pred.aetr",
                          "--gt", "gt.aetr", ...maskFlags, ...flags]);
    return { ...res, arrays: {} };
  });
}

function opMsSsim(arrays: Record<string, BoundArray>, kwargs: Kwargs): BindResult {
  const pred = requireArray(arrays.pred, "pred");
  const gt = requireArray(arrays.gt, "gt");
  return withTempDir((dir) => {
    writeTensor(join(dir, "pred.aetr"), pred);
    writeTensor(join(dir, "gt.aetr"), gt);
    const flags = kwargFlags(kwargs, ["dynamic_range", "threads"]);
    const res = run(dir, ["losses", "--metric", "ms-ssim", "--pred", "pred.aetr",
                          "--gt", "gt.aetr", ...flags]);
    return { ...res, arrays: {} };
  });
}

function opDepthMetrics(arrays: Record<string, BoundArray>, kwargs: Kwargs): BindResult {
  const pred = requireArray(arrays.pred, "pred", 3);
  const gt = requireArray(arrays.gt, "gt", 3);
  return withTempDir((dir) => {
    writeTensor(join(dir, "pred.aetr"), pred);
    writeTensor(join(dir, "gt.aetr"), gt);
    const maskFlags = writeOptionalMask(dir, arrays);
    const flags = kwargFlags(kwargs, ["align", "scale_estimator", "threads"]);
    const res = run(dir, ["eval-depth", "--pred", "pred.aetr", "--gt", "gt.aetr",
                          ...maskFlags, ...flags]);
    return { ...res, arrays: {} };
  });
}

function opEvalPose(arrays: Record<string, BoundArray>, kwargs: Kwargs): BindResult {
  const pred = requireArray(arrays.pred, "pred", 2);
  const gt = requireArray(arrays.gt, "gt", 2);
  return withTempDir((dir) => {
    writeTum(join(dir, "pred.tum"), pred);
    writeTum(join(dir, "gt.tum"), gt);
    const flags = kwargFlags(kwargs, ["align", "delta", "max_dt", "threads"]);
    const res = run(dir, ["eval-pose", "--pred", "pred.tum", "--gt", "gt.tum",
                          ...flags]);
    return { ...res, arrays: {} };
  });
}

interface WindowInput {
  starts: number[];
  windows: BoundArray[];
}

function windowInputs(arrays: Record<string, BoundArray>, kwargs: Kwargs): WindowInput {
  const starts = kwargs.starts as number[] | undefined;
  if (!Array.isArray(starts) || starts.length === 0) {
    throw new BindingError("stitching needs kwargs.starts: number[]");
  }
  const windows = starts.map((_, i) =>
    requireArray(arrays[`window${i}`], `window${i}`));
  return { starts, windows };
}

function opStitchDepth(arrays: Record<string, BoundArray>, kwargs: Kwargs): BindResult {
  const { starts, windows } = windowInputs(arrays, kwargs);
  const rest = { ...kwargs };
  delete rest.starts;
  return withTempDir((dir) => {
    const manifest = starts.map((start, i) => {
      writeTensor(join(dir, `w${i}.aetr`), windows[i]);
      return { start, path: `w${i}.aetr` };
    });
    writeFileSync(join(dir, "windows.json"), JSON.stringify(manifest));
    const flags = kwargFlags(rest, ["stride", "threads"]);
    const res = run(dir, ["stitch-depth", "--windows", "windows.json",
                          "--out", "out.aetr", ...flags]);
    return { ...res, arrays: { depth: readTensor(join(dir, "out.aetr")) } };
  });
}

function opStitchPoses(arrays: Record<string, BoundArray>, kwargs: Kwargs): BindResult {
  const { starts, windows } = windowInputs(arrays, kwargs);
  const rest = { ...kwargs };
  delete rest.starts;
  return withTempDir((dir) => {
    const manifest = starts.map((start, i) => {
      writeTum(join(dir, `w${i}.tum`), windows[i]);
      return { start, path: `w${i}.tum` };
    });
    writeFileSync(join(dir, "windows.json"), JSON.stringify(manifest));
    const flags = kwargFlags(rest, ["stride", "threads"]);
    const res = run(dir, ["stitch-pose", "--windows", "windows.json",
                          "--out", "out.tum", ...flags]);
    return { ...res, arrays: { trajectory: readTum(join(dir, "out.tum")) } };
  });
}

export interface FrameStats {
  frame: number;
  keypoint_count: number;
  low_texture_ratio: number;
  dynamic_ratio: number;
  flow_mag: number;
  fb_err_ratio: number;
}

function opSlice(_arrays: Record<string, BoundArray>, kwargs: Kwargs): BindResult {
  const stats = kwargs.stats as FrameStats[] | undefined;
  if (!Array.isArray(stats) || stats.length === 0) {
    throw new BindingError("slice needs kwargs.stats: FrameStats[]");
  }
  return withTempDir((dir) => {
    writeFileSync(join(dir, "stats.jsonl"),
                  stats.map((s) => JSON.stringify(s)).join("\n") + "\n");
    const rest = { ...kwargs };
    delete rest.stats;
    const flags = kwargFlags(rest, [
      "min_keypoints", "max_low_texture_ratio", "max_dynamic_ratio",
      "max_flow_mag", "max_fb_err_ratio", "min_segment_len", "threads",
    ]);
    const res = run(dir, ["slice", "--stats", "stats.jsonl", ...flags]);
    return { ...res, arrays: {} };
  });
}

const DISPATCH: Record<OpName, (a: Record<string, BoundArray>, k: Kwargs) => BindResult> = {
  encode_disparity: opEncodeDisparity,
  decode_disparity: opDecodeDisparity,
  build_raymap: opBuildRaymap,
  raymap_to_camera: opRaymapToCamera,
  project_pointmap: opProjectPointmap,
  ssi_align: opSsiAlign,
  ms_ssim: opMsSsim,
  depth_metrics: opDepthMetrics,
  ate: opEvalPose,
  rpe: opEvalPose,
  stitch_depth: opStitchDepth,
  stitch_poses: opStitchPoses,
  slice: opSlice,
};

/** Dispatch an operation by name; see the typed wrappers below. */
export function bind(
  opName: string,
  arrays: Record<string, BoundArray> = {},
  kwargs: Kwargs = {},
): BindResult {
  const fn = DISPATCH[opName as OpName];
  if (!fn) {
    throw new BindingError(`unknown operation '${opName}' (one of: ${OPS.join(", ")})`);
  }
  return fn(arrays, kwargs);
}

export const encodeDisparity = (depth: BoundArray, kwargs: Kwargs = {}) =>
  bind("encode_disparity", { depth }, kwargs);
export const decodeDisparity = (disparity: BoundArray, kwargs: Kwargs = {}) =>
  bind("decode_disparity", { disparity }, kwargs);
export const buildRaymap = (trajectory: BoundArray, kwargs: Kwargs) =>
  bind("build_raymap", { trajectory }, kwargs);
export const raymapToCamera = (raymap: BoundArray, kwargs: Kwargs = {}) =>
  bind("raymap_to_camera", { raymap }, kwargs);
export const projectPointmap = (depth: BoundArray, raymap: BoundArray,
                                kwargs: Kwargs = {}) =>
  bind("project_pointmap", { depth, raymap }, kwargs);
export const ssiAlign = (pred: BoundArray, gt: BoundArray, mask?: BoundArray,
                         kwargs: Kwargs = {}) =>
  bind("ssi_align", mask ? { pred, gt, mask } : { pred, gt }, kwargs);
export const msSsim = (pred: BoundArray, gt: BoundArray, kwargs: Kwargs = {}) =>
  bind("ms_ssim", { pred, gt }, kwargs);
export const depthMetrics = (pred: BoundArray, gt: BoundArray,
                             mask?: BoundArray, kwargs: Kwargs = {}) =>
  bind("depth_metrics", mask ? { pred, gt, mask } : { pred, gt }, kwargs);
export const ate = (pred: BoundArray, gt: BoundArray, kwargs: Kwargs = {}) =>
  bind("ate", { pred, gt }, kwargs);
export const rpe = (pred: BoundArray, gt: BoundArray, kwargs: Kwargs = {}) =>
  bind("rpe", { pred, gt }, kwargs);
export const stitchDepth = (windows: BoundArray[], starts: number[],
                            kwargs: Kwargs = {}) =>
  bind("stitch_depth",
       Object.fromEntries(windows.map((w, i) => [`window${i}`, w])),
       { ...kwargs, starts });
export const stitchPoses = (windows: BoundArray[], starts: number[],
                            kwargs: Kwargs = {}) =>
  bind("stitch_poses",
       Object.fromEntries(windows.map((w, i) => [`window${i}`, w])),
       { ...kwargs, starts });
export const sliceVideo = (stats: FrameStats[], kwargs: Kwargs = {}) =>
  bind("slice", {}, { ...kwargs, stats });
