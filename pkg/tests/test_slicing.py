import dataclasses
import json

import numpy as np
import pytest

from geom4d.errors import FormatError, Geom4dError
from geom4d.slicing import (FrameStats, Segment, SliceConfig, read_frame_stats,
                            slice_video)


def good_frame(i, **overrides) -> FrameStats:
    base = dict(frame=i, keypoint_count=200, low_texture_ratio=0.1,
                dynamic_ratio=0.1, flow_mag=5.0, fb_err_ratio=0.5)
    base.update(overrides)
    return FrameStats(**base)


def rule_oracle(stats, cfg):
    """Set-based reimplementation: rejected frames split runs, boundary
    frames end a run after themselves, short runs are discarded."""
    n = len(stats)
    rejected = {s.frame for s in stats
                if s.keypoint_count < cfg.min_keypoints
                or s.low_texture_ratio > cfg.max_low_texture_ratio
                or s.dynamic_ratio > cfg.max_dynamic_ratio}
    boundary = {s.frame for s in stats
                if s.frame not in rejected
                and (s.flow_mag > cfg.max_flow_mag
                     or s.fb_err_ratio > cfg.max_fb_err_ratio)}
    segments = []
    run = []
    for f in range(n):
        if f in rejected:
            if run:
                segments.append((run[0], run[-1] + 1))
            run = []
            continue
        run.append(f)
        if f in boundary:
            segments.append((run[0], run[-1] + 1))
            run = []
    if run:
        segments.append((run[0], run[-1] + 1))
    return [Segment(a, b) for a, b in segments if b - a >= cfg.min_segment_len]


def random_stats(rng, n) -> list:
    stats = []
    for i in range(n):
        stats.append(FrameStats(
            frame=i,
            keypoint_count=int(rng.integers(0, 200)),
            low_texture_ratio=float(rng.uniform()),
            dynamic_ratio=float(rng.uniform()),
            flow_mag=float(rng.uniform(0.0, 100.0)),
            fb_err_ratio=float(rng.uniform(0.0, 4.0)),
        ))
    return stats


def random_config(rng) -> SliceConfig:
    return SliceConfig(
        min_keypoints=int(rng.integers(0, 150)),
        max_low_texture_ratio=float(rng.uniform(0.2, 1.0)),
        max_dynamic_ratio=float(rng.uniform(0.2, 1.0)),
        max_flow_mag=float(rng.uniform(20.0, 100.0)),
        max_fb_err_ratio=float(rng.uniform(0.5, 4.0)),
        min_segment_len=int(rng.integers(2, 9)),
    )


class TestSliceExamples:
    def test_all_passing(self):
        stats = [good_frame(i) for i in range(100)]
        cfg = SliceConfig()
        assert slice_video(stats, cfg) == [Segment(0, 100)]

    def test_single_frame_rejection_splits(self):
        stats = [good_frame(i) for i in range(100)]
        stats[50] = good_frame(50, keypoint_count=3)
        cfg = SliceConfig(min_segment_len=2)
        assert slice_video(stats, cfg) == [Segment(0, 50), Segment(51, 100)]

    def test_flow_spike_truncates_keeping_current_frame(self):
        stats = [good_frame(i) for i in range(100)]
        stats[29] = good_frame(29, flow_mag=500.0)  # transition 29 -> 30
        cfg = SliceConfig(min_segment_len=2)
        assert slice_video(stats, cfg) == [Segment(0, 30), Segment(30, 100)]

    def test_short_segments_dropped(self):
        stats = [good_frame(i) for i in range(12)]
        stats[4] = good_frame(4, dynamic_ratio=0.9)
        cfg = SliceConfig(min_segment_len=8)
        # [0,4) too short; [5,12) too short
        assert slice_video(stats, cfg) == []

    def test_fb_err_is_boundary_criterion(self):
        stats = [good_frame(i) for i in range(20)]
        stats[9] = good_frame(9, fb_err_ratio=10.0)
        cfg = SliceConfig(min_segment_len=2)
        assert slice_video(stats, cfg) == [Segment(0, 10), Segment(10, 20)]

    def test_empty_stats_rejected(self):
        with pytest.raises(Geom4dError):
            slice_video([], SliceConfig())

    def test_non_contiguous_frames_rejected(self):
        stats = [good_frame(0), good_frame(2)]
        with pytest.raises(Geom4dError):
            slice_video(stats, SliceConfig())


class TestSliceRandomized:
    def test_matches_rule_oracle_over_seeds(self):
        for seed in range(1000):
            rng = np.random.default_rng(seed)
            stats = random_stats(rng, int(rng.integers(1, 60)))
            cfg = random_config(rng)
            assert slice_video(stats, cfg) == rule_oracle(stats, cfg), f"seed {seed}"

    def test_deterministic(self, rng):
        stats = random_stats(rng, 50)
        cfg = random_config(rng)
        assert slice_video(stats, cfg) == slice_video(list(stats), cfg)

    def test_invariants(self):
        for seed in range(200):
            rng = np.random.default_rng(seed + 5000)
            stats = random_stats(rng, 40)
            cfg = random_config(rng)
            segs = slice_video(stats, cfg)
            prev_end = -1
            for s in segs:
                assert s.end - s.start >= cfg.min_segment_len
                # sorted and disjoint (adjacent half-open ranges allowed)
                assert s.start >= prev_end
                prev_end = s.end
                for f in range(s.start, s.end):
                    st = stats[f]
                    assert st.keypoint_count >= cfg.min_keypoints
                    assert st.low_texture_ratio <= cfg.max_low_texture_ratio
                    assert st.dynamic_ratio <= cfg.max_dynamic_ratio
                # boundary criteria may fire only at the final frame
                for f in range(s.start, s.end - 1):
                    st = stats[f]
                    assert st.flow_mag <= cfg.max_flow_mag
                    assert st.fb_err_ratio <= cfg.max_fb_err_ratio

    def test_tightening_never_increases_coverage(self):
        fields = ["min_keypoints", "max_low_texture_ratio", "max_dynamic_ratio",
                  "max_flow_mag", "max_fb_err_ratio", "min_segment_len"]
        for seed in range(200):
            rng = np.random.default_rng(seed + 9000)
            stats = random_stats(rng, 50)
            cfg = random_config(rng)
            base_cover = sum(s.end - s.start for s in slice_video(stats, cfg))
            name = fields[seed % len(fields)]
            tight = dict(dataclasses.asdict(cfg))
            if name == "min_keypoints":
                tight[name] = cfg.min_keypoints + int(rng.integers(1, 40))
            elif name == "min_segment_len":
                tight[name] = cfg.min_segment_len + int(rng.integers(1, 5))
            else:
                tight[name] = getattr(cfg, name) * float(rng.uniform(0.3, 0.95))
            cover = sum(s.end - s.start
                        for s in slice_video(stats, SliceConfig(**tight)))
            assert cover <= base_cover


class TestFrameStatsIo:
    def test_reads_jsonl(self, tmp_path):
        p = tmp_path / "stats.jsonl"
        rows = [dataclasses.asdict(good_frame(i)) for i in range(3)]
        p.write_text("# header comment\n"
                     + "\n".join(json.dumps(r) for r in rows) + "\n")
        stats = read_frame_stats(p)
        assert [s.frame for s in stats] == [0, 1, 2]
        assert stats[1].keypoint_count == 200

    def test_missing_field_reports_line(self, tmp_path):
        p = tmp_path / "stats.jsonl"
        p.write_text('{"frame": 0}\n')
        with pytest.raises(FormatError, match=":1"):
            read_frame_stats(p)

    def test_invalid_json_reports_line(self, tmp_path):
        p = tmp_path / "stats.jsonl"
        p.write_text("not json\n")
        with pytest.raises(FormatError, match=":1"):
            read_frame_stats(p)

    def test_fraction_out_of_range_rejected(self):
        with pytest.raises(Geom4dError):
            good_frame(0, dynamic_ratio=1.5)
