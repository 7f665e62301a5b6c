"""
Процедурные сцены, программный рендеринг и каталоги датасетов.
"""

from .dataset_io import (
    DatasetBuildResult,
    build_dataset,
    find_scene_dirs,
    load_dataset,
    read_depth,
    read_metadata,
    save_dataset,
    write_depth,
)
from .generator import coverage, generate_scene, generate_trajectory, surface_points
from .models import Complexity, DirectionalLight, Scene, TextureKind, Trajectory, Triangle
from .renderer import albedo, rasterize, render

__all__ = [
    'Complexity',
    'DirectionalLight',
    'Scene',
    'TextureKind',
    'Trajectory',
    'Triangle',
    'albedo',
    'rasterize',
    'render',
    'coverage',
    'generate_scene',
    'generate_trajectory',
    'surface_points',
    'DatasetBuildResult',
    'build_dataset',
    'find_scene_dirs',
    'load_dataset',
    'read_depth',
    'read_metadata',
    'save_dataset',
    'write_depth',
]
