"""Bit-exact file formats: tensor container, TUM trajectories, PFM depth.

The tensor container is a minimal header (magic "AETR", version, dtype
code, ndim, dims as little-endian u32) followed by row-major little-endian
float32 payload. Writers are deterministic; readers reject trailing bytes.
"""
from __future__ import annotations

import struct
import warnings

import numpy as np

from .errors import FormatError
from .geometry import Convention, Pose, Quaternion, Trajectory

TENSOR_MAGIC = b"AETR"
TENSOR_VERSION = 1
DTYPE_F32 = 0
_MAX_NDIM = 16
_MAX_ELEMENTS = 1 << 40


def write_tensor(path, dims, data) -> None:
    """Write float32 tensor data with the given dims."""
    dims = tuple(int(d) for d in dims)
    if len(dims) == 0:
        raise FormatError("tensor must have at least one dimension")
    if any(d <= 0 for d in dims):
        raise FormatError(f"tensor dims must be positive, got {dims}")
    arr = np.ascontiguousarray(np.asarray(data), dtype="<f4")
    count = 1
    for d in dims:
        count *= d
    if arr.size != count:
        raise FormatError(f"data has {arr.size} elements, dims {dims} imply {count}")
    header = TENSOR_MAGIC + struct.pack("<III", TENSOR_VERSION, DTYPE_F32, len(dims))
    header += struct.pack(f"<{len(dims)}I", *dims)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes(order="C"))


def read_tensor(path):
    """Read a tensor file; returns (dims, float32 ndarray)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic, not a tensor file")
    version, dtype, ndim = struct.unpack("<III", blob[4:16])
    if version != TENSOR_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    if ndim == 0 or ndim > _MAX_NDIM:
        raise FormatError(f"{path}: invalid ndim {ndim}")
    need = 16 + 4 * ndim
    if len(blob) < need:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack(f"<{ndim}I", blob[16:need])
    count = 1
    for d in dims:
        count *= d
        if d == 0 or count > _MAX_ELEMENTS:
            raise FormatError(f"{path}: dims overflow: {dims}")
    payload = blob[need:]
    if len(payload) < 4 * count:
        raise FormatError(f"{path}: truncated payload")
    if len(payload) > 4 * count:
        raise FormatError(f"{path}: {len(payload) - 4 * count} trailing bytes")
    data = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return dims, data.copy()


def read_tum(path) -> Trajectory:
    """Read a TUM trajectory ("ts tx ty tz qx qy qz qw" per line).

    Poses are world_from_camera. Quaternions are normalized on read; a
    warning fires when the stored norm deviates by more than 1e-3.
    """
    timestamps = []
    poses = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 8:
                raise FormatError(
                    f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric field: {exc}") from exc
            ts, tx, ty, tz, qx, qy, qz, qw = vals
            q = Quaternion(qw, qx, qy, qz)
            norm = q.norm()
            if norm == 0.0:
                raise FormatError(f"{path}:{lineno}: zero quaternion")
            if abs(norm - 1.0) > 1e-3:
                warnings.warn(f"{path}:{lineno}: quaternion norm {norm:.6f}, renormalizing")
            if timestamps and ts <= timestamps[-1]:
                raise FormatError(f"{path}:{lineno}: non-increasing timestamp {ts}")
            timestamps.append(ts)
            poses.append(Pose(q.normalized(), np.array([tx, ty, tz]),
                              Convention.WORLD_FROM_CAMERA))
    if not poses:
        raise FormatError(f"{path}: no trajectory entries")
    return Trajectory(np.asarray(timestamps), poses)


def write_tum(path, traj: Trajectory) -> None:
    """Write a trajectory in TUM format with 9 significant digits."""
    traj = traj.as_world_from_camera()
    with open(path, "w", encoding="utf-8") as fh:
        for ts, pose in zip(traj.timestamps, traj.poses):
            q = pose.rotation
            t = pose.translation
            vals = [ts, t[0], t[1], t[2], q.x, q.y, q.z, q.w]
            fh.write(" ".join(f"{v:.9g}" for v in vals) + "\n")


def read_pfm(path) -> np.ndarray:
    """Read a grayscale "Pf" PFM file into a top-down H x W float array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        kind, rest = blob.split(b"\n", 1)
    except ValueError:
        raise FormatError(f"{path}: missing PFM header") from None
    if kind.strip() == b"PF":
        raise FormatError(f"{path}: color PFM ('PF') is not supported, expected 'Pf'")
    if kind.strip() != b"Pf":
        raise FormatError(f"{path}: not a PFM file (header {kind[:8]!r})")
    try:
        dims_line, rest = rest.split(b"\n", 1)
        scale_line, payload = rest.split(b"\n", 1)
        width, height = (int(v) for v in dims_line.split())
        scale = float(scale_line)
    except ValueError as exc:
        raise FormatError(f"{path}: bad PFM header: {exc}") from exc
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: invalid dimensions {width}x{height}")
    if scale == 0.0:
        raise FormatError(f"{path}: zero scale")
    count = width * height
    if len(payload) < 4 * count:
        raise FormatError(f"{path}: truncated payload")
    if len(payload) > 4 * count:
        raise FormatError(f"{path}: {len(payload) - 4 * count} trailing bytes")
    endian = "<" if scale < 0 else ">"
    data = np.frombuffer(payload, dtype=f"{endian}f4").reshape(height, width)
    return data[::-1].astype(np.float64)
