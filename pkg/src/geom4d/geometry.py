"""Rigid and similarity transform algebra: quaternions, poses, Sim(3).

Conventions:
    - Quaternions are stored (w, x, y, z) and kept unit-norm.
    - A Pose is a rotation + translation tagged with its convention:
      CAMERA_FROM_WORLD maps world points into the camera frame (an
      extrinsic matrix), WORLD_FROM_CAMERA is its inverse.
    - Vectors are numpy arrays of shape (3,), float64.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConventionMismatch, DegenerateGeometry

_UNIT_TOL = 1e-9


class Convention(Enum):
    CAMERA_FROM_WORLD = "camera_from_world"
    WORLD_FROM_CAMERA = "world_from_camera"

    def flipped(self) -> "Convention":
        if self is Convention.CAMERA_FROM_WORLD:
            return Convention.WORLD_FROM_CAMERA
        return Convention.CAMERA_FROM_WORLD


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion (w, x, y, z)."""

    w: float
    x: float
    y: float
    z: float

    @staticmethod
    def identity() -> "Quaternion":
        return Quaternion(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_array(q: np.ndarray) -> "Quaternion":
        q = np.asarray(q, dtype=np.float64)
        return Quaternion(float(q[0]), float(q[1]), float(q[2]), float(q[3]))

    @staticmethod
    def from_axis_angle(axis: np.ndarray, angle: float) -> "Quaternion":
        axis = np.asarray(axis, dtype=np.float64)
        n = np.linalg.norm(axis)
        if n == 0.0:
            return Quaternion.identity()
        axis = axis / n
        half = 0.5 * angle
        s = math.sin(half)
        return Quaternion(math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s)

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Quaternion":
        """Shepperd's method; `m` must be a proper rotation matrix."""
        m = np.asarray(m, dtype=np.float64)
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0.0:
            s = math.sqrt(tr + 1.0) * 2.0
            w = 0.25 * s
            x = (m[2, 1] - m[1, 2]) / s
            y = (m[0, 2] - m[2, 0]) / s
            z = (m[1, 0] - m[0, 1]) / s
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        return Quaternion(w, x, y, z).normalized()

    def array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=np.float64)

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if n == 0.0:
            raise DegenerateGeometry("cannot normalize zero quaternion")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Quaternion(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ],
            dtype=np.float64,
        )

    def rotate(self, v: np.ndarray) -> np.ndarray:
        return self.matrix() @ np.asarray(v, dtype=np.float64)


@dataclass(frozen=True)
class Pose:
    """Rigid transform with an explicit convention tag."""

    rotation: Quaternion
    translation: np.ndarray
    convention: Convention = Convention.CAMERA_FROM_WORLD

    def __post_init__(self):
        object.__setattr__(
            self, "translation",
            np.asarray(self.translation, dtype=np.float64).reshape(3).copy())
        if abs(self.rotation.norm() - 1.0) > 1e-6:
            object.__setattr__(self, "rotation", self.rotation.normalized())

    @staticmethod
    def identity(convention: Convention = Convention.CAMERA_FROM_WORLD) -> "Pose":
        return Pose(Quaternion.identity(), np.zeros(3), convention)

    @staticmethod
    def from_matrix(m: np.ndarray,
                    convention: Convention = Convention.CAMERA_FROM_WORLD) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        return Pose(Quaternion.from_matrix(m[:3, :3]), m[:3, 3], convention)

    def matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rotation.matrix()
        out[:3, 3] = self.translation
        return out

    def apply(self, p: np.ndarray) -> np.ndarray:
        return self.rotation.rotate(p) + self.translation

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        if self.convention is Convention.WORLD_FROM_CAMERA:
            return self.translation.copy()
        return -(self.rotation.conjugate().rotate(self.translation))

    def retagged(self, convention: Convention) -> "Pose":
        """Same transform values under a different convention label."""
        return Pose(self.rotation, self.translation, convention)


def compose(a: Pose, b: Pose) -> Pose:
    """Transform that applies `b` first, then `a`."""
    if a.convention is not b.convention:
        raise ConventionMismatch(
            f"cannot compose {a.convention.value} with {b.convention.value}")
    rot = a.rotation * b.rotation
    trans = a.rotation.rotate(b.translation) + a.translation
    return Pose(rot.normalized(), trans, a.convention)


def inverse(p: Pose) -> Pose:
    """Inverse transform; the convention tag flips."""
    rot = p.rotation.conjugate()
    trans = -rot.rotate(p.translation)
    return Pose(rot, trans, p.convention.flipped())


def slerp(q0: Quaternion, q1: Quaternion, t: float) -> Quaternion:
    """Interpolate along the shorter great-circle arc from q0 to q1."""
    a = q0.array()
    b = q1.array()
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b = -b
        dot = -dot
    dot = min(dot, 1.0)
    theta = math.acos(dot)
    if theta < 1e-8:
        out = (1.0 - t) * a + t * b
        return Quaternion.from_array(out).normalized()
    sin_theta = math.sin(theta)
    wa = math.sin((1.0 - t) * theta) / sin_theta
    wb = math.sin(t * theta) / sin_theta
    return Quaternion.from_array(wa * a + wb * b).normalized()


def rotation_geodesic_error(qa: Quaternion, qb: Quaternion) -> float:
    """Angle in [0, pi] between two rotations, sign-of-quaternion agnostic.

    Uses the atan2 form of the relative-quaternion angle, which stays
    accurate near 0 and pi where acos loses precision.
    """
    rel = qa.conjugate() * qb
    vec = math.sqrt(rel.x**2 + rel.y**2 + rel.z**2)
    return 2.0 * math.atan2(vec, abs(rel.w))


@dataclass(frozen=True)
class Sim3:
    """Similarity transform p -> scale * R p + t."""

    scale: float
    rotation: Quaternion
    translation: np.ndarray

    def __post_init__(self):
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise DegenerateGeometry(f"Sim3 scale must be positive, got {self.scale}")
        object.__setattr__(
            self, "translation",
            np.asarray(self.translation, dtype=np.float64).reshape(3).copy())

    @staticmethod
    def identity() -> "Sim3":
        return Sim3(1.0, Quaternion.identity(), np.zeros(3))

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return self.scale * (pts @ self.rotation.matrix().T) + self.translation

    def apply_pose(self, p: Pose) -> Pose:
        """Map a WORLD_FROM_CAMERA pose through this world-frame similarity."""
        if p.convention is not Convention.WORLD_FROM_CAMERA:
            raise ConventionMismatch("apply_pose expects a world_from_camera pose")
        rot = (self.rotation * p.rotation).normalized()
        trans = self.scale * self.rotation.rotate(p.translation) + self.translation
        return Pose(rot, trans, Convention.WORLD_FROM_CAMERA)


def umeyama_sim3(src: np.ndarray, dst: np.ndarray, with_scale: bool = True) -> Sim3:
    """Least-squares similarity aligning src onto dst (Umeyama closed form).

    Minimizes sum ||dst_i - (s R src_i + t)||^2. Reflections are repaired by
    flipping the smallest singular vector so det(R) = +1.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if src.shape != dst.shape:
        raise DegenerateGeometry("point lists must have equal length")
    n = src.shape[0]
    if n < 3:
        raise DegenerateGeometry(f"need at least 3 point pairs, got {n}")
    mu_src = src.mean(axis=0)
    mu_dst = dst.mean(axis=0)
    src_c = src - mu_src
    dst_c = dst - mu_dst
    cov = dst_c.T @ src_c / n
    var_src = float((src_c**2).sum()) / n
    # Collinear (or coincident) sources leave the rotation about the line free.
    sv_src = np.linalg.svd(src_c, compute_uv=False)
    if var_src == 0.0 or sv_src[1] <= 1e-9 * sv_src[0]:
        raise DegenerateGeometry("degenerate configuration: points are collinear")
    u, d, vt = np.linalg.svd(cov)
    s_fix = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_fix[2] = -1.0
    rot = u @ np.diag(s_fix) @ vt
    if with_scale:
        scale = float((d * s_fix).sum()) / var_src
        if not (scale > 0.0):
            raise DegenerateGeometry("non-positive similarity scale")
    else:
        scale = 1.0
    trans = mu_dst - scale * (rot @ mu_src)
    return Sim3(scale, Quaternion.from_matrix(rot), trans)


@dataclass
class Trajectory:
    """Timestamped pose sequence sharing one convention."""

    timestamps: np.ndarray
    poses: list = field(default_factory=list)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64).reshape(-1)
        if len(self.timestamps) != len(self.poses):
            raise ValueError("timestamps and poses must have equal length")
        if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ValueError("timestamps must be strictly increasing")
        conventions = {p.convention for p in self.poses}
        if len(conventions) > 1:
            raise ConventionMismatch("all poses in a trajectory must share one convention")

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def convention(self) -> Convention:
        if not self.poses:
            raise ValueError("empty trajectory has no convention")
        return self.poses[0].convention

    def centers(self) -> np.ndarray:
        return np.array([p.center() for p in self.poses]).reshape(-1, 3)

    def as_world_from_camera(self) -> "Trajectory":
        if not self.poses or self.convention is Convention.WORLD_FROM_CAMERA:
            return self
        return Trajectory(self.timestamps.copy(), [inverse(p) for p in self.poses])


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be at least 1")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])
