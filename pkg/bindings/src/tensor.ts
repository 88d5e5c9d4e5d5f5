/**
 * The float32 tensor container shared with the core toolbox.
 *
 * Layout: magic "AETR", u32 version=1, u32 dtype (0 = float32), u32 ndim,
 * ndim x u32 dims (all little-endian), then the row-major float32 payload.
 * Reads return zero-copy Float32Array views whenever the payload happens to
 * be 4-byte aligned in the frame buffer, and copy otherwise.
 */
import { readFileSync, writeFileSync } from "node:fs";

export const TENSOR_MAGIC = "AETR";
export const TENSOR_VERSION = 1;
export const DTYPE_F32 = 0;

export interface BoundArray {
  shape: number[];
  data: Float32Array;
}

export class BindingError extends Error {}

export function boundArray(shape: number[], data: Float32Array | number[]): BoundArray {
  const arr = data instanceof Float32Array ? data : Float32Array.from(data);
  const count = shape.reduce((a, b) => a * b, 1);
  if (shape.length === 0 || shape.some((d) => !Number.isInteger(d) || d <= 0)) {
    throw new BindingError(`invalid shape [${shape}]`);
  }
  if (arr.length !== count) {
    throw new BindingError(
      `data has ${arr.length} elements, shape [${shape}] implies ${count}`,
    );
  }
  return { shape: [...shape], data: arr };
}

/** Reject anything that is not a contiguous float32 array of the right rank. */
export function requireArray(
  value: unknown,
  name: string,
  rank?: number,
): BoundArray {
  const v = value as BoundArray;
  if (
    v === null || typeof v !== "object" ||
    !Array.isArray(v.shape) || !(v.data instanceof Float32Array)
  ) {
    throw new BindingError(
      `${name}: expected a BoundArray with a Float32Array buffer`,
    );
  }
  const count = v.shape.reduce((a, b) => a * b, 1);
  if (v.data.length !== count) {
    throw new BindingError(
      `${name}: shape [${v.shape}] implies ${count} elements, buffer has ${v.data.length}`,
    );
  }
  if (rank !== undefined && v.shape.length !== rank) {
    throw new BindingError(
      `${name}: expected rank ${rank}, got shape [${v.shape}]`,
    );
  }
  return v;
}

export function writeTensor(path: string, tensor: BoundArray): void {
  const { shape, data } = requireArray(tensor, "tensor");
  const header = Buffer.alloc(16 + 4 * shape.length);
  header.write(TENSOR_MAGIC, 0, "ascii");
  header.writeUInt32LE(TENSOR_VERSION, 4);
  header.writeUInt32LE(DTYPE_F32, 8);
  header.writeUInt32LE(shape.length, 12);
  shape.forEach((d, i) => header.writeUInt32LE(d, 16 + 4 * i));
  const payload = Buffer.from(data.buffer, data.byteOffset, data.byteLength);
  writeFileSync(path, Buffer.concat([header, payload]));
}

export function readTensor(path: string): BoundArray {
  const blob = readFileSync(path);
  if (blob.length < 16 || blob.toString("ascii", 0, 4) !== TENSOR_MAGIC) {
    throw new BindingError(`${path}: bad magic, not a tensor file`);
  }
  const version = blob.readUInt32LE(4);
  const dtype = blob.readUInt32LE(8);
  const ndim = blob.readUInt32LE(12);
  if (version !== TENSOR_VERSION) {
    throw new BindingError(`${path}: unsupported version ${version}`);
  }
  if (dtype !== DTYPE_F32) {
    throw new BindingError(`${path}: unsupported dtype code ${dtype}`);
  }
  if (ndim === 0 || ndim > 16) {
    throw new BindingError(`${path}: invalid ndim ${ndim}`);
  }
  const headerLen = 16 + 4 * ndim;
  if (blob.length < headerLen) {
    throw new BindingError(`${path}: truncated header`);
  }
  const shape: number[] = [];
  let count = 1;
  for (let i = 0; i < ndim; i++) {
    const d = blob.readUInt32LE(16 + 4 * i);
    if (d === 0) throw new BindingError(`${path}: zero dimension`);
    shape.push(d);
    count *= d;
  }
  const payload = blob.length - headerLen;
  if (payload < 4 * count) throw new BindingError(`${path}: truncated payload`);
  if (payload > 4 * count) {
    throw new BindingError(`${path}: ${payload - 4 * count} trailing bytes`);
  }
  const offset = blob.byteOffset + headerLen;
  let data: Float32Array;
  if (offset % 4 === 0) {
    data = new Float32Array(blob.buffer, offset, count); // zero-copy view
  } else {
    const copy = Buffer.alloc(4 * count);
    blob.copy(copy, 0, headerLen);
    data = new Float32Array(copy.buffer, copy.byteOffset, count);
  }
  return { shape, data };
}
