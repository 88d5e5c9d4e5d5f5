"""Reconstruction-friendly video slicing over precomputed frame statistics.

Frame-level criteria (too few keypoints, too much low-texture area, too
much dynamic area) reject a frame outright, splitting segments around it.
Boundary-level criteria (large flow magnitude or forward-backward flow
error on the transition to the next frame) truncate the segment after
the current frame, which stays in the closing segment. The statistics
themselves come from external feature/flow/mask tooling via JSONL.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import FormatError, Geom4dError

FRAME_STAT_FIELDS = ("frame", "keypoint_count", "low_texture_ratio",
                     "dynamic_ratio", "flow_mag", "fb_err_ratio")


@dataclass
class FrameStats:
    """Per-frame statistics; flow fields describe the transition to frame+1."""

    frame: int
    keypoint_count: int
    low_texture_ratio: float
    dynamic_ratio: float
    flow_mag: float
    fb_err_ratio: float

    def __post_init__(self):
        if self.keypoint_count < 0:
            raise Geom4dError(f"frame {self.frame}: negative keypoint count")
        for name in ("low_texture_ratio", "dynamic_ratio"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise Geom4dError(f"frame {self.frame}: {name}={v} outside [0, 1]")
        if self.flow_mag < 0 or self.fb_err_ratio < 0:
            raise Geom4dError(f"frame {self.frame}: negative flow statistic")


@dataclass
class SliceConfig:
    min_keypoints: int = 50
    max_low_texture_ratio: float = 0.5
    max_dynamic_ratio: float = 0.5
    max_flow_mag: float = 60.0
    max_fb_err_ratio: float = 2.0
    min_segment_len: int = 8

    def __post_init__(self):
        if self.min_segment_len < 2:
            raise Geom4dError("min_segment_len must be >= 2")


@dataclass(frozen=True)
class Segment:
    """Half-open frame range [start, end)."""

    start: int
    end: int


def slice_video(stats: list, cfg: SliceConfig) -> list:
    """Split a frame-stat stream into clean segments.

    Returns sorted, disjoint segments of length >= cfg.min_segment_len in
    which every frame passes the frame-level criteria and no boundary
    criterion fires except at a segment's final frame.
    """
    if not stats:
        raise Geom4dError("empty frame statistics")
    for k, st in enumerate(stats):
        if st.frame != k:
            raise Geom4dError(
                f"frame indices must be contiguous from 0; entry {k} has frame {st.frame}")
    segments = []

    def emit(lo: int, hi: int):
        if hi - lo >= cfg.min_segment_len:
            segments.append(Segment(lo, hi))

    start = 0
    for k, st in enumerate(stats):
        rejected = (st.keypoint_count < cfg.min_keypoints
                    or st.low_texture_ratio > cfg.max_low_texture_ratio
                    or st.dynamic_ratio > cfg.max_dynamic_ratio)
        if rejected:
            emit(start, k)
            start = k + 1
            continue
        boundary = (st.flow_mag > cfg.max_flow_mag
                    or st.fb_err_ratio > cfg.max_fb_err_ratio)
        if boundary:
            emit(start, k + 1)
            start = k + 1
    emit(start, len(stats))
    return segments


def read_frame_stats(path) -> list:
    """Read one FrameStats JSON object per line; '#' lines are comments."""
    stats = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            missing = [f for f in FRAME_STAT_FIELDS if f not in obj]
            if missing:
                raise FormatError(f"{path}:{lineno}: missing fields {missing}")
            stats.append(FrameStats(
                frame=int(obj["frame"]),
                keypoint_count=int(obj["keypoint_count"]),
                low_texture_ratio=float(obj["low_texture_ratio"]),
                dynamic_ratio=float(obj["dynamic_ratio"]),
                flow_mag=float(obj["flow_mag"]),
                fb_err_ratio=float(obj["fb_err_ratio"]),
            ))
    return stats
