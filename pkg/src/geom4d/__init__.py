"""Geometry toolbox for 4D scene reconstruction pipelines.

Scale-invariant depth/raymap codecs, pointmap projection and losses,
trajectory evaluation, sliding-window stitching, video slicing and robust
bundle adjustment.
"""

from .bundle_adjust import (BAProblem, BAReport, BASolverConfig, Track,
                            build_problem, residuals, solve)
from .depth_codec import (ClipScale, DepthVideo, NormalizedDisparityVideo,
                          decode_disparity, encode_disparity)
from .errors import ConventionMismatch, DegenerateGeometry, FormatError, Geom4dError
from .evaluation import (DepthMetrics, PoseMetrics, associate, ate,
                         depth_metrics, pose_metrics, rpe)
from .fileio import read_pfm, read_tensor, read_tum, write_tensor, write_tum
from .geometry import (Convention, Intrinsics, Pose, Quaternion, Sim3,
                       Trajectory, compose, inverse, rotation_geodesic_error,
                       slerp, umeyama_sim3)
from .losses import (PointMap, SsiAlignment, ms_ssim, pointmap_loss,
                     project_pointmap, ssi_align, ssi_loss)
from .raymap import (LatentRaymap, RayEncodingConfig, Raymap, build_raymap,
                     decode_origin_channels, decode_translation,
                     encode_translation, raymap_to_camera, rearrange_raymap,
                     recover_intrinsics_lsq, unrearrange_raymap)
from .slicing import FrameStats, Segment, SliceConfig, slice_video
from .stitching import WindowSet, kalman_smooth, stitch_depth, stitch_poses

__version__ = "0.1.0"

__all__ = [
    "BAProblem", "BAReport", "BASolverConfig", "ClipScale", "Convention",
    "ConventionMismatch", "DegenerateGeometry", "DepthMetrics", "DepthVideo",
    "FormatError", "FrameStats", "Geom4dError", "Intrinsics", "LatentRaymap",
    "NormalizedDisparityVideo", "PointMap", "Pose", "PoseMetrics", "Quaternion",
    "RayEncodingConfig", "Raymap", "Segment", "Sim3", "SliceConfig",
    "SsiAlignment", "Track", "Trajectory", "WindowSet", "associate", "ate",
    "build_problem", "build_raymap", "compose", "decode_disparity",
    "decode_origin_channels", "decode_translation", "depth_metrics",
    "encode_disparity", "encode_translation", "inverse", "kalman_smooth",
    "ms_ssim", "pointmap_loss", "pose_metrics", "project_pointmap",
    "raymap_to_camera", "read_pfm", "read_tensor", "read_tum",
    "rearrange_raymap", "recover_intrinsics_lsq", "residuals",
    "rotation_geodesic_error", "slerp", "slice_video", "solve", "ssi_align",
    "ssi_loss", "stitch_depth", "stitch_poses", "umeyama_sim3",
    "unrearrange_raymap", "write_tensor", "write_tum",
]
