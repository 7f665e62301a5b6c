"""Модуль геометрии пинхол-камеры."""

from .camera import (
    Intrinsics,
    Pose,
    ViewSpec,
    CameraView,
    Viewpoint,
    GridSpec,
    project,
    backproject,
    voxel_index,
    warp_homography,
    project_points,
    backproject_pixels,
    voxel_indices,
    flat_voxel_indices,
    warp_points,
    write_poses,
    read_poses
)

__all__ = [
    "Intrinsics",
    "Pose",
    "ViewSpec",
    "CameraView",
    "Viewpoint",
    "GridSpec",
    "project",
    "backproject",
    "voxel_index",
    "warp_homography",
    "project_points",
    "backproject_pixels",
    "voxel_indices",
    "flat_voxel_indices",
    "warp_points",
    "write_poses",
    "read_poses"
]
