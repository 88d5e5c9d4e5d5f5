/**
 * Trajectories cross the binding boundary as N x 8 float32 rows of
 * [timestamp, tx, ty, tz, qx, qy, qz, qw], matching the TUM line layout
 * used by the core toolbox.
 */
import { readFileSync, writeFileSync } from "node:fs";

import { BindingError, BoundArray, requireArray } from "./tensor.js";

/** Format a value the way the core writes TUM fields (9 significant digits). */
function fmt(v: number): string {
  if (!Number.isFinite(v)) throw new BindingError(`non-finite value ${v}`);
  let s = v.toPrecision(9);
  if (s.includes(".") && !s.includes("e") && !s.includes("E")) {
    s = s.replace(/0+$/, "").replace(/\.$/, "");
  }
  // normalize exponent form to %.9g style (strip trailing zeros of mantissa)
  if (s.includes("e")) {
    const [mant, exp] = s.split("e");
    let m = mant;
    if (m.includes(".")) m = m.replace(/0+$/, "").replace(/\.$/, "");
    const e = Number(exp);
    s = `${m}e${e >= 0 ? "+" : "-"}${String(Math.abs(e)).padStart(2, "0")}`;
  }
  return s;
}

export function writeTum(path: string, traj: BoundArray): void {
  requireArray(traj, "trajectory", 2);
  if (traj.shape[1] !== 8) {
    throw new BindingError(`trajectory rows must have 8 fields, got ${traj.shape[1]}`);
  }
  const lines: string[] = [];
  for (let i = 0; i < traj.shape[0]; i++) {
    const row = traj.data.subarray(8 * i, 8 * i + 8);
    lines.push(Array.from(row, fmt).join(" "));
  }
  writeFileSync(path, lines.join("\n") + "\n");
}

export function readTum(path: string): BoundArray {
  const text = readFileSync(path, "utf-8");
  const rows: number[] = [];
  let n = 0;
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    if (!line || line.startsWith("#")) continue;
    const parts = line.split(/\s+/).map(Number);
    if (parts.length !== 8 || parts.some((v) => Number.isNaN(v))) {
      throw new BindingError(`${path}: malformed TUM line: ${line}`);
    }
    rows.push(...parts);
    n += 1;
  }
  if (n === 0) throw new BindingError(`${path}: no trajectory entries`);
  return { shape: [n, 8], data: Float32Array.from(rows) };
}
