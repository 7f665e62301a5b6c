"""
Процедурная генерация сцен и облетных траекторий камеры.
"""

from typing import List, Optional, Tuple, Union

import numpy as np

from ..geometry.camera import CameraView, GridSpec, Intrinsics, Pose, ViewSpec, backproject_pixels
from ..utils.exceptions import ErrorCode, SceneError, ValidationError
from ..utils.logger import get_logger, kv
from ..utils.seeding import rng
from ..voxels.voxel_grid import accumulate, visibility_stats
from .models import Complexity, DirectionalLight, Scene, TextureKind, Triangle, Trajectory
from .renderer import rasterize

logger = get_logger(__name__)

FLOOR_HALF_SIZE = 0.2
BOX_COUNTS = {Complexity.SMALL: (3, 5), Complexity.MEDIUM: (6, 10)}
MAX_TRIANGLES = {Complexity.SMALL: 200, Complexity.MEDIUM: 400}
MAX_TRAJECTORY_ATTEMPTS = 10


def _random_texture(generator: np.random.Generator, face_size: float) -> Tuple[TextureKind, np.ndarray]:
    """Случайная текстура, масштабированная под размер грани."""
    kind = TextureKind(int(generator.integers(0, 3)))
    a0, a1 = generator.uniform(0.1, 0.45), generator.uniform(0.6, 1.0)
    if generator.random() < 0.5:
        a0, a1 = a1, a0
    if kind == TextureKind.CHECKER:
        period = face_size / generator.integers(2, 5)
        return kind, np.array([period, a0, a1])
    if kind == TextureKind.POLYGON:
        radius = face_size * generator.uniform(0.2, 0.35)
        center = generator.uniform(0.4, 0.6, size=2) * face_size
        n_sides = generator.integers(3, 7)
        rotation = generator.uniform(0, 2 * np.pi)
        return kind, np.array([center[0], center[1], radius, n_sides, rotation, a0, a1])
    angle = generator.uniform(0, 2 * np.pi)
    period = face_size * generator.uniform(0.3, 0.7)
    return kind, np.array([angle, period, a0, a1])


def _quad(corners: np.ndarray, kind: TextureKind, params: np.ndarray) -> List[Triangle]:
    """Прямоугольная грань из двух треугольников с общей системой координат текстуры."""
    v0, v1, v2, v3 = corners
    axis_u = (v1 - v0) / np.linalg.norm(v1 - v0)
    axis_v = (v3 - v0) / np.linalg.norm(v3 - v0)
    frame = np.stack([v0, axis_u, axis_v])
    return [
        Triangle(np.stack([v0, v1, v2]), kind, params, frame),
        Triangle(np.stack([v0, v2, v3]), kind, params, frame),
    ]


def _box_faces(center: np.ndarray, size: np.ndarray, yaw: float) -> List[np.ndarray]:
    """Пять видимых граней бокса на полу (без нижней)."""
    sx, sy, sz = size / 2.0
    local = np.array([
        [-sx, -sy, 0.0], [sx, -sy, 0.0], [sx, sy, 0.0], [-sx, sy, 0.0],
        [-sx, -sy, 2 * sz], [sx, -sy, 2 * sz], [sx, sy, 2 * sz], [-sx, sy, 2 * sz],
    ])
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    p = local @ rot.T + center
    return [
        p[[4, 5, 6, 7]],  # верх
        p[[0, 1, 5, 4]],
        p[[1, 2, 6, 5]],
        p[[2, 3, 7, 6]],
        p[[3, 0, 4, 7]],
    ]


def generate_scene(seed: int, complexity: Union[str, Complexity] = Complexity.SMALL,
                   n_lightings: int = 4) -> Scene:
    """
    Генерация сцены: текстурированный пол и боксы, 2–4 направленных источника.

    Детерминирована по seed.

    Args:
        seed: Seed сцены
        complexity: small или medium
        n_lightings: Число конфигураций освещения

    Returns:
        Сцена
    """
    complexity = Complexity(complexity)
    generator = rng(seed, "scene")

    triangles: List[Triangle] = []
    h = FLOOR_HALF_SIZE
    floor = np.array([[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]])
    period = generator.uniform(0.03, 0.06)
    triangles.extend(_quad(floor, TextureKind.CHECKER, np.array([period, 0.25, 0.85])))

    lo, hi = BOX_COUNTS[complexity]
    for _ in range(int(generator.integers(lo, hi + 1))):
        center = np.array([*generator.uniform(-0.13, 0.13, size=2), 0.0])
        size = np.array([*generator.uniform(0.04, 0.1, size=2), generator.uniform(0.03, 0.12)])
        yaw = generator.uniform(0, np.pi)
        for face in _box_faces(center, size, yaw):
            face_size = min(np.linalg.norm(face[1] - face[0]), np.linalg.norm(face[3] - face[0]))
            kind, params = _random_texture(generator, face_size)
            triangles.extend(_quad(face, kind, params))

    lights = []
    for _ in range(int(generator.integers(2, 5))):
        azimuth = generator.uniform(0, 2 * np.pi)
        elevation = np.radians(generator.uniform(20, 80))
        direction = np.array([
            np.cos(elevation) * np.cos(azimuth),
            np.cos(elevation) * np.sin(azimuth),
            np.sin(elevation),
        ])
        lights.append(DirectionalLight(direction, float(generator.uniform(0.3, 1.0))))

    gains = np.ones((max(n_lightings, 1), len(lights)))
    for i in range(1, len(gains)):
        gains[i] = generator.uniform(0.0, 1.0, size=len(lights))
        gains[i, generator.integers(len(lights))] = generator.uniform(0.5, 1.0)

    scene = Scene(
        triangles=tuple(triangles),
        lights=tuple(lights),
        ambient=float(generator.uniform(0.15, 0.35)),
        lighting_gains=gains
    )
    if len(scene.triangles) > MAX_TRIANGLES[complexity]:
        raise SceneError(
            f"Scene has {len(scene.triangles)} triangles, budget is {MAX_TRIANGLES[complexity]}",
            code=ErrorCode.SCENE_INVALID
        )
    return scene


def surface_points(views) -> np.ndarray:
    """Облако точек поверхности по плотной глубине всех ракурсов."""
    chunks = []
    for view in views:
        rows, cols = np.nonzero(view.depth > 0)
        pixels = np.stack([cols, rows], axis=1).astype(np.float64)
        chunks.append(backproject_pixels(pixels, view.depth[rows, cols], view))
    return np.concatenate(chunks) if chunks else np.empty((0, 3))


def coverage(views, extent: float, min_views: int, margin: float = 0.05) -> float:
    """Доля занятых вокселей поверхности, наблюдаемых не менее min_views раз."""
    points = surface_points(views)
    if len(points) == 0:
        return 0.0
    spec = GridSpec.enclosing(points, extent, margin)
    grid = accumulate(views, [np.ones(view.depth.shape) for view in views], spec)
    return float(visibility_stats(grid, max_k=min_views)[min_views - 1])


def _depth_only(scene: Scene, view: ViewSpec) -> CameraView:
    depth, _ = rasterize(scene.vertex_array, view)
    return CameraView(view.intrinsics, view.pose, np.zeros(depth.shape), depth.astype(np.float32))


def _orbit(scene: Scene, n_views: int, intrinsics: Intrinsics, generator: np.random.Generator) -> List[ViewSpec]:
    lo, hi = scene.bounds
    center = (lo + hi) / 2.0
    half_diag = float(np.linalg.norm(hi[:2] - lo[:2])) / 2.0
    half_fov = np.arctan((intrinsics.width / 2.0) / intrinsics.fx)
    base_radius = 1.15 * half_diag / np.tan(half_fov)

    views = []
    start = generator.uniform(0, 2 * np.pi)
    for i in range(n_views):
        azimuth = start + 2 * np.pi * i / n_views + generator.uniform(-0.5, 0.5) * 2 * np.pi / n_views
        elevation = np.radians(generator.uniform(30, 65))
        radius = base_radius * generator.uniform(0.9, 1.1)
        eye = center + radius * np.array([
            np.cos(elevation) * np.cos(azimuth),
            np.cos(elevation) * np.sin(azimuth),
            np.sin(elevation),
        ])
        target = center + generator.uniform(-0.02, 0.02, size=3)
        views.append(ViewSpec(intrinsics, Pose.look_at(eye, target)))
    return views


def generate_trajectory(
    scene: Scene,
    n_views: int,
    seed: int,
    intrinsics: Optional[Intrinsics] = None,
    extent: float = 0.005,
    min_views: int = 3,
    coverage_target: float = 0.8
) -> Trajectory:
    """
    Облет сцены камерой с дрожанием радиуса и высоты.

    Траектория перегенерируется с новой солью, пока доля вокселей поверхности,
    наблюдаемых ≥ min_views раз, не достигнет coverage_target.

    Args:
        scene: Сцена
        n_views: Число ракурсов (≥ 2)
        seed: Seed траектории
        intrinsics: Камера (по умолчанию 128×128, 60°)
        extent: Размер вокселя для проверки покрытия
        min_views: Порог наблюдений
        coverage_target: Требуемая доля покрытия

    Raises:
        ValidationError: При n_views < 2
        SceneError: Если покрытие не достигнуто за 10 попыток
    """
    if n_views < 2:
        raise ValidationError(
            "Trajectory needs at least two views",
            code=ErrorCode.VALIDATION_RANGE_ERROR,
            field_name="n_views",
            invalid_value=n_views,
            expected=">= 2"
        )
    intrinsics = intrinsics or Intrinsics.from_fov(128, 128, 60.0)

    best = 0.0
    for attempt in range(MAX_TRAJECTORY_ATTEMPTS):
        generator = rng(seed, "trajectory", attempt)
        views = _orbit(scene, n_views, intrinsics, generator)
        achieved = coverage([_depth_only(scene, view) for view in views], extent, min_views)
        logger.info(kv("trajectory_attempt", attempt=attempt, coverage=achieved, target=coverage_target))
        if achieved >= coverage_target:
            lighting = rng(seed, "lighting", attempt).integers(0, scene.n_lightings, size=n_views)
            return Trajectory(views=views, lighting_per_view=[int(i) for i in lighting], coverage=achieved)
        best = max(best, achieved)

    raise SceneError(
        f"Coverage {best:.3f} below target {coverage_target} after {MAX_TRAJECTORY_ATTEMPTS} attempts",
        code=ErrorCode.SCENE_COVERAGE_UNREACHABLE,
        coverage=best,
        attempts=MAX_TRAJECTORY_ATTEMPTS
    )
