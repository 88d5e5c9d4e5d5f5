import { execFileSync } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { BoundArray, boundArray } from "../src/tensor.js";

/** Deterministic PRNG so fixtures are identical on every run. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randomDepth(shape: number[], seed: number): BoundArray {
  const rng = mulberry32(seed);
  const count = shape.reduce((a, b) => a * b, 1);
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) data[i] = 0.5 + 49.5 * rng();
  return boundArray(shape, data);
}

/** Curved trajectory rows [ts tx ty tz qx qy qz qw] with unit quaternions. */
export function curvedTrajectory(n: number): BoundArray {
  const data = new Float32Array(n * 8);
  for (let i = 0; i < n; i++) {
    const th = i / (n - 1);
    const half = 0.15 * th;
    const [ax, ay, az] = [0.2, 1.0, 0.1];
    const norm = Math.hypot(ax, ay, az);
    const s = Math.sin(half) / norm;
    data.set([
      i,
      Math.sin(2 * th), Math.cos(1.3 * th), 0.4 * th,
      ax * s, ay * s, az * s, Math.cos(half),
    ], 8 * i);
  }
  return boundArray([n, 8], data);
}

export function tempDir(): string {
  return mkdtempSync(join(tmpdir(), "geom4d-fixture-"));
}

export function python(code: string, cwd?: string): string {
  return execFileSync(process.env.GEOM4D_PYTHON ?? "python3", ["-c", code],
                      { cwd, encoding: "utf-8" });
}

/** Run the core CLI directly (the parity reference). */
export function cliDirect(args: string[], cwd: string): string {
  return execFileSync(process.env.GEOM4D_PYTHON ?? "python3",
                      ["-m", "geom4d", ...args],
                      { cwd, encoding: "utf-8" });
}
