"""Модуль воксельного накопления (шаг ожидания)."""

from .voxel_grid import (
    Heatmap,
    VoxelGrid,
    RepeatabilityMap,
    accumulate,
    repeatability,
    render_repeatability,
    visibility_stats,
    surface_hits,
    write_grid_dump
)

__all__ = [
    "Heatmap",
    "VoxelGrid",
    "RepeatabilityMap",
    "accumulate",
    "repeatability",
    "render_repeatability",
    "visibility_stats",
    "surface_hits",
    "write_grid_dump"
]
