"""
Модели данных процедурных сцен.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Tuple

import numpy as np

from ..geometry.camera import ViewSpec
from ..utils.exceptions import ErrorCode, ValidationError

MIN_TRIANGLE_AREA = 1e-12
TEXTURE_PARAMS = 8


class TextureKind(Enum):
    """Классы процедурных альбедо-текстур."""
    CHECKER = 0    # params: period, a0, a1
    POLYGON = 1    # params: cs, ct, radius, n_sides, rotation, a_in, a_out
    GRADIENT = 2   # params: angle, period, a0, a1


class Complexity(Enum):
    """Бюджет генератора сцен."""
    SMALL = "small"
    MEDIUM = "medium"


@dataclass(frozen=True)
class Triangle:
    """
    Треугольник с текстурой.

    ``frame`` — строки (origin, axis_u, axis_v) плоской системы координат
    текстуры; у двух треугольников одного четырехугольника она общая.
    """
    vertices: np.ndarray
    texture: TextureKind
    params: np.ndarray
    frame: np.ndarray

    def __post_init__(self):
        """Пост-инициализация для валидации."""
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=np.float64).reshape(3, 3))
        params = np.zeros(TEXTURE_PARAMS)
        given = np.asarray(self.params, dtype=np.float64).reshape(-1)
        params[:len(given)] = given
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "frame", np.asarray(self.frame, dtype=np.float64).reshape(3, 3))
        if self.area <= MIN_TRIANGLE_AREA:
            raise ValidationError(
                "Degenerate triangle",
                code=ErrorCode.VALIDATION_RANGE_ERROR,
                field_name="vertices",
                invalid_value=self.area,
                expected=f"area > {MIN_TRIANGLE_AREA}"
            )

    @property
    def area(self) -> float:
        v0, v1, v2 = self.vertices
        return 0.5 * float(np.linalg.norm(np.cross(v1 - v0, v2 - v0)))

    @property
    def normal(self) -> np.ndarray:
        v0, v1, v2 = self.vertices
        n = np.cross(v1 - v0, v2 - v0)
        return n / np.linalg.norm(n)


@dataclass(frozen=True)
class DirectionalLight:
    """Направленный источник; direction указывает на источник."""
    direction: np.ndarray
    intensity: float

    def __post_init__(self):
        direction = np.asarray(self.direction, dtype=np.float64).reshape(3)
        object.__setattr__(self, "direction", direction / np.linalg.norm(direction))
        if not 0.0 <= self.intensity <= 2.0:
            raise ValidationError(
                "Light intensity must lie in [0, 2]",
                code=ErrorCode.VALIDATION_RANGE_ERROR,
                field_name="intensity",
                invalid_value=self.intensity,
                expected="[0, 2]"
            )


@dataclass(frozen=True)
class Scene:
    """
    Геометрия и освещение сцены.

    ``lighting_gains[i, l]`` — множитель источника l в конфигурации освещения i;
    конфигурация 0 включает все источники на полную яркость.
    """
    triangles: Tuple[Triangle, ...]
    lights: Tuple[DirectionalLight, ...]
    ambient: float
    lighting_gains: np.ndarray = field(default_factory=lambda: np.ones((1, 0)))

    def __post_init__(self):
        """Пост-инициализация для валидации."""
        object.__setattr__(self, "triangles", tuple(self.triangles))
        object.__setattr__(self, "lights", tuple(self.lights))
        gains = np.asarray(self.lighting_gains, dtype=np.float64)
        if gains.size == 0:
            gains = np.ones((1, len(self.lights)))
        else:
            gains = gains.reshape(-1, len(self.lights))
        object.__setattr__(self, "lighting_gains", gains)
        if not self.triangles:
            raise ValidationError("Scene must contain at least one triangle", field_name="triangles")
        if not 0.0 <= self.ambient <= 1.0:
            raise ValidationError(
                "Ambient term must lie in [0, 1]",
                code=ErrorCode.VALIDATION_RANGE_ERROR,
                field_name="ambient",
                invalid_value=self.ambient,
                expected="[0, 1]"
            )

    @property
    def n_lightings(self) -> int:
        return int(self.lighting_gains.shape[0])

    @property
    def vertex_array(self) -> np.ndarray:
        """Вершины всех треугольников (T, 3, 3)."""
        return np.stack([t.vertices for t in self.triangles])

    @property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        vertices = self.vertex_array.reshape(-1, 3)
        return vertices.min(axis=0), vertices.max(axis=0)

    def light_intensities(self, lighting: int) -> np.ndarray:
        """Эффективные интенсивности источников в конфигурации ``lighting``."""
        if not 0 <= lighting < self.n_lightings:
            raise ValidationError(
                f"Lighting index {lighting} out of range",
                code=ErrorCode.VALIDATION_RANGE_ERROR,
                field_name="lighting",
                invalid_value=lighting,
                expected=f"[0, {self.n_lightings})"
            )
        base = np.array([light.intensity for light in self.lights])
        return np.clip(base * self.lighting_gains[lighting], 0.0, 2.0)

    def serialize(self) -> bytes:
        """Детерминированная бинарная сериализация (для сравнения сцен)."""
        chunks: List[bytes] = []
        for tri in self.triangles:
            chunks.append(tri.vertices.astype("<f8").tobytes())
            chunks.append(np.array([tri.texture.value], dtype="<i4").tobytes())
            chunks.append(tri.params.astype("<f8").tobytes())
            chunks.append(tri.frame.astype("<f8").tobytes())
        for light in self.lights:
            chunks.append(light.direction.astype("<f8").tobytes())
            chunks.append(np.array([light.intensity], dtype="<f8").tobytes())
        chunks.append(np.array([self.ambient], dtype="<f8").tobytes())
        chunks.append(self.lighting_gains.astype("<f8").tobytes())
        return b"".join(chunks)


@dataclass
class Trajectory:
    """Упорядоченный список ракурсов с выбором освещения на ракурс."""
    views: List[ViewSpec]
    lighting_per_view: List[int]
    coverage: float = 0.0

    def __post_init__(self):
        if len(self.views) != len(self.lighting_per_view):
            raise ValidationError(
                "Each view needs a lighting index",
                field_name="lighting_per_view",
                invalid_value=(len(self.views), len(self.lighting_per_view))
            )

    def __len__(self) -> int:
        return len(self.views)
