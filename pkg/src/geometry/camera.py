"""
Математика пинхол-камеры: проекция, обратная проекция, индексация вокселей
и гомографии.

Соглашения:
    * поза мир→камера: p_cam = R·p_world + t;
    * центры пикселей лежат в целых координатах, (u, v) ∈ [0, W)×[0, H),
      u — столбец, v — строка;
    * воксели полуоткрытые: [origin + i·e, origin + (i+1)·e).
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from typing_extensions import TypeAlias

from ..utils.exceptions import ErrorCode, GeometryError, ValidationError, DatasetError

Array: TypeAlias = np.ndarray
PathLike: TypeAlias = Union[str, Path]

# Текстовый формат поз хранит 9 значащих цифр, поэтому при чтении
# ортонормальность проверяется с допуском 1e-6.
POSE_TOLERANCE = 1e-6
WARP_EPS = 1e-12


@dataclass(frozen=True)
class Intrinsics:
    """Внутренние параметры камеры (пиксели)."""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        """Пост-инициализация для валидации."""
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError(
                "Focal lengths must be positive",
                code=ErrorCode.VALIDATION_RANGE_ERROR,
                field_name="fx/fy",
                invalid_value=(self.fx, self.fy),
                expected="> 0"
            )
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError(
                "Principal point must lie inside the image",
                code=ErrorCode.VALIDATION_RANGE_ERROR,
                field_name="cx/cy",
                invalid_value=(self.cx, self.cy, self.width, self.height),
                expected="0 <= cx < width, 0 <= cy < height"
            )

    @classmethod
    def from_fov(cls, width: int, height: int, fov_deg: float) -> "Intrinsics":
        """Камера с горизонтальным углом обзора ``fov_deg`` и центром в середине кадра."""
        fx = (width / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
        return cls(fx=fx, fy=fx, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0, width=width, height=height)

    @property
    def matrix(self) -> Array:
        """Матрица K."""
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])


@dataclass(frozen=True)
class Pose:
    """Жесткая поза мир→камера."""
    rotation: Array
    translation: Array

    def __post_init__(self):
        """Пост-инициализация для валидации."""
        rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

        ortho = np.abs(rotation.T @ rotation - np.eye(3)).max()
        det = np.linalg.det(rotation)
        if ortho > POSE_TOLERANCE or abs(det - 1.0) > POSE_TOLERANCE:
            raise ValidationError(
                "Rotation must be orthonormal with determinant +1",
                code=ErrorCode.VALIDATION_RANGE_ERROR,
                field_name="rotation",
                invalid_value=f"ortho_err={ortho:.3g} det={det:.12g}",
                expected="R^T R = I, det R = 1"
            )

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def look_at(cls, eye: Sequence[float], target: Sequence[float], up: Sequence[float] = (0.0, 0.0, 1.0)) -> "Pose":
        """
        Поза камеры, расположенной в ``eye`` и смотрящей на ``target``.

        Ось z камеры направлена на цель, ось y — вниз по кадру.
        """
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        norm = np.linalg.norm(right)
        if norm < 1e-9:
            raise ValidationError(
                "Viewing direction is parallel to the up vector",
                field_name="up",
                invalid_value=up
            )
        right /= norm
        down = np.cross(forward, right)
        rotation = np.stack([right, down, forward])
        return cls(rotation, -rotation @ eye)

    @property
    def camera_center(self) -> Array:
        """Центр камеры в мировой системе координат."""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class ViewSpec:
    """Ракурс до рендеринга: внутренние параметры и поза."""
    intrinsics: Intrinsics
    pose: Pose


@dataclass
class CameraView:
    """Один отрендеренный ракурс: камера, изображение и плотная глубина."""
    intrinsics: Intrinsics
    pose: Pose
    image: Array
    depth: Array

    def __post_init__(self):
        """Пост-инициализация для валидации."""
        expected = (self.intrinsics.height, self.intrinsics.width)
        if self.image.shape != expected or self.depth.shape != expected:
            raise DatasetError(
                "Image and depth must match the camera dimensions",
                code=ErrorCode.DATASET_DIMENSION_MISMATCH,
                context={
                    "expected": expected,
                    "image": self.image.shape,
                    "depth": self.depth.shape
                }
            )

    @property
    def spec(self) -> ViewSpec:
        return ViewSpec(self.intrinsics, self.pose)


Viewpoint: TypeAlias = Union[CameraView, ViewSpec]


@dataclass(frozen=True)
class GridSpec:
    """Равномерная воксельная сетка."""
    origin: Array
    extent: float = 0.005
    dims: Tuple[int, int, int] = field(default=(1, 1, 1))

    def __post_init__(self):
        """Пост-инициализация для валидации."""
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not self.extent > 0:
            raise ValidationError(
                "Voxel extent must be positive",
                code=ErrorCode.VALIDATION_RANGE_ERROR,
                field_name="extent",
                invalid_value=self.extent,
                expected="> 0"
            )
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValidationError(
                "Grid dims must be three positive integers",
                code=ErrorCode.VALIDATION_RANGE_ERROR,
                field_name="dims",
                invalid_value=self.dims,
                expected=">= 1"
            )

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))

    @classmethod
    def enclosing(cls, points: Array, extent: float, margin: float = 0.05) -> "GridSpec":
        """
        Сетка, покрывающая ограничивающий бокс облака точек с относительным отступом.

        Args:
            points: Точки (N, 3) в метрах
            extent: Размер вокселя
            margin: Отступ как доля размера бокса по каждой оси
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(points) == 0:
            return cls(origin=np.zeros(3), extent=extent, dims=(1, 1, 1))
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        pad = np.maximum((hi - lo) * margin, extent)
        lo = lo - pad
        hi = hi + pad
        dims = np.maximum(np.ceil((hi - lo) / extent).astype(int), 1)
        return cls(origin=lo, extent=extent, dims=tuple(int(d) for d in dims))


# ---------------------------------------------------------------------------
# Векторные операции
# ---------------------------------------------------------------------------

def project_points(points: Array, view: Viewpoint) -> Tuple[Array, Array, Array]:
    """
    Проекция точек мира в пиксели.

    Args:
        points: Точки (N, 3) в мировой системе
        view: Ракурс (CameraView или ViewSpec)

    Returns:
        Пиксели (N, 2) как (u, v), глубины z камеры (N,) и маска попадания в кадр
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    intr = view.intrinsics
    cam = points @ view.pose.rotation.T + view.pose.translation
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * cam[:, 0] / z + intr.cx
        v = intr.fy * cam[:, 1] / z + intr.cy
    pixels = np.stack([u, v], axis=1)
    inside = (z > 0) & (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
    return pixels, z, inside


def backproject_pixels(pixels: Array, depth: Array, view: Viewpoint) -> Array:
    """
    Обратная проекция пикселей с известной глубиной z в мировые точки.

    Глубина должна быть положительной; проверку делает вызывающий код.
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    depth = np.asarray(depth, dtype=np.float64).reshape(-1)
    intr = view.intrinsics
    x = (pixels[:, 0] - intr.cx) / intr.fx * depth
    y = (pixels[:, 1] - intr.cy) / intr.fy * depth
    cam = np.stack([x, y, depth], axis=1)
    return (cam - view.pose.translation) @ view.pose.rotation


def voxel_indices(points: Array, grid: GridSpec) -> Tuple[Array, Array]:
    """
    Индексы вокселей (N, 3) и маска попадания в сетку.

    Ячейки полуоткрытые, поэтому точка на границе относится к следующей ячейке.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    idx = np.floor((points - grid.origin) / grid.extent).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < np.asarray(grid.dims)), axis=1)
    return idx, inside


def flat_voxel_indices(points: Array, grid: GridSpec) -> Tuple[Array, Array]:
    """Плоские (row-major) индексы вокселей и маска попадания в сетку."""
    idx, inside = voxel_indices(points, grid)
    flat = np.full(len(idx), -1, dtype=np.int64)
    if inside.any():
        flat[inside] = np.ravel_multi_index(tuple(idx[inside].T), grid.dims)
    return flat, inside


def warp_points(points: Array, H: Array) -> Array:
    """Проективное преобразование точек (N, 2) гомографией H с нормализацией."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    homog = np.concatenate([points, np.ones((len(points), 1))], axis=1) @ np.asarray(H, dtype=np.float64).T
    w = homog[:, 2]
    if np.any(np.abs(w) < WARP_EPS):
        raise GeometryError(
            "Homogeneous coordinate vanished during warp",
            code=ErrorCode.GEOMETRY_DEGENERATE_WARP,
            context={"min_abs_w": float(np.abs(w).min())}
        )
    return homog[:, :2] / w[:, None]


# ---------------------------------------------------------------------------
# Скалярные операции
# ---------------------------------------------------------------------------

def project(p_world: Sequence[float], view: Viewpoint) -> Optional[Tuple[Array, float]]:
    """
    Перспективная проекция точки.

    Returns:
        (pixel, depth) или None, если точка вне пирамиды видимости
    """
    pixels, z, inside = project_points(np.asarray(p_world, dtype=np.float64), view)
    if not inside[0]:
        return None
    return pixels[0], float(z[0])


def backproject(pixel: Sequence[float], depth: float, view: Viewpoint) -> Array:
    """
    Обратная проекция пикселя с глубиной z в мировую точку.

    Raises:
        GeometryError: При неположительной глубине
    """
    if not depth > 0:
        raise GeometryError(
            f"Cannot backproject pixel with non-positive depth {depth}",
            code=ErrorCode.GEOMETRY_INVALID_DEPTH,
            context={"pixel": tuple(pixel), "depth": depth}
        )
    return backproject_pixels(np.asarray(pixel, dtype=np.float64), np.array([depth]), view)[0]


def voxel_index(p_world: Sequence[float], grid: GridSpec) -> Optional[Tuple[int, int, int]]:
    """Индекс вокселя точки или None вне сетки."""
    idx, inside = voxel_indices(np.asarray(p_world, dtype=np.float64), grid)
    if not inside[0]:
        return None
    i, j, k = (int(c) for c in idx[0])
    return i, j, k


def warp_homography(pixel: Sequence[float], H: Array) -> Array:
    """Перенос пикселя гомографией H."""
    return warp_points(np.asarray(pixel, dtype=np.float64), H)[0]


# ---------------------------------------------------------------------------
# Файл поз
# ---------------------------------------------------------------------------

def format_pose_line(view_id: int, intrinsics: Intrinsics, pose: Pose) -> str:
    """Строка ``view_id fx fy cx cy r00..r22 tx ty tz`` с точностью %.9g."""
    values = [intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy]
    values.extend(pose.rotation.reshape(-1).tolist())
    values.extend(pose.translation.tolist())
    return " ".join([str(int(view_id))] + ["%.9g" % v for v in values])


def write_poses(path: PathLike, entries: Sequence[Tuple[int, Intrinsics, Pose]]) -> None:
    """Запись файла поз, одна строка на ракурс."""
    lines = [format_pose_line(view_id, intr, pose) for view_id, intr, pose in entries]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_poses(path: PathLike) -> List[Tuple[int, Tuple[float, float, float, float], Pose]]:
    """
    Чтение файла поз.

    Returns:
        Список (view_id, (fx, fy, cx, cy), pose); размер кадра хранится в изображениях

    Raises:
        DatasetError: При отсутствии файла или неверном формате строки
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"Pose file not found: {path}", code=ErrorCode.DATASET_MISSING_FILE, path=str(path))

    entries = []
    for line_number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 17:
            raise DatasetError(
                f"Pose line {line_number} has {len(fields)} fields, expected 17",
                code=ErrorCode.DATASET_MALFORMED_HEADER,
                path=str(path)
            )
        try:
            view_id = int(fields[0])
            values = [float(f) for f in fields[1:]]
            pose = Pose(np.array(values[4:13]).reshape(3, 3), np.array(values[13:16]))
        except (ValueError, ValidationError) as e:
            raise DatasetError(
                f"Malformed pose line {line_number}: {e}",
                code=ErrorCode.DATASET_MALFORMED_HEADER,
                path=str(path),
                original_error=e
            )
        entries.append((view_id, (values[0], values[1], values[2], values[3]), pose))
    return entries
