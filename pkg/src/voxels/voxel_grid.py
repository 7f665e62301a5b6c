"""
Мягкий шаг ожидания: накопление оценок детектора в воксельной сетке,
мягкая повторяемость D/N и ее проекция обратно в изображения.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from typing_extensions import TypeAlias

from ..geometry.camera import CameraView, GridSpec, backproject_pixels, flat_voxel_indices
from ..utils.exceptions import ErrorCode, ValidationError, VoxelError
from ..utils.logger import get_logger, kv

Heatmap: TypeAlias = np.ndarray

logger = get_logger(__name__)


@dataclass
class VoxelGrid:
    """
    Плотная сетка с двумя счетчиками на ячейку.

    Attributes:
        spec: Геометрия сетки
        D: Сумма оценок детектора по лучам, попавшим в ячейку (float64)
        N: Число лучей, попавших в ячейку (int64)
    """
    spec: GridSpec
    D: np.ndarray
    N: np.ndarray

    @classmethod
    def empty(cls, spec: GridSpec) -> "VoxelGrid":
        return cls(spec=spec, D=np.zeros(spec.dims, dtype=np.float64), N=np.zeros(spec.dims, dtype=np.int64))

    @property
    def occupied(self) -> int:
        """Число ячеек с N > 0."""
        return int(np.count_nonzero(self.N))

    def merge(self, other: "VoxelGrid") -> "VoxelGrid":
        """Поячеечная сумма двух накоплений на одной сетке."""
        if other.spec.dims != self.spec.dims or other.spec.extent != self.spec.extent \
                or not np.array_equal(other.spec.origin, self.spec.origin):
            raise VoxelError("Cannot merge grids with different specs", code=ErrorCode.VOXEL_DIMENSION_MISMATCH)
        return VoxelGrid(spec=self.spec, D=self.D + other.D, N=self.N + other.N)


@dataclass
class RepeatabilityMap:
    """Мягкая повторяемость в пикселях; mask=True — значение определено."""
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        """Пост-инициализация: неопределенные пиксели не несут значения."""
        if self.values.shape != self.mask.shape:
            raise ValidationError(
                "Repeatability values and mask must have the same shape",
                field_name="mask",
                invalid_value=(self.values.shape, self.mask.shape)
            )
        self.mask = self.mask.astype(bool)
        self.values = np.where(self.mask, self.values, 0.0).astype(np.float64)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]


def surface_hits(view: CameraView, spec: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Пиксели ракурса, чья обратная проекция попадает в сетку.

    Returns:
        Плоские индексы пикселей (row-major) и плоские индексы их вокселей
    """
    rows, cols = np.nonzero(view.depth > 0)
    if len(rows) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    pixels = np.stack([cols, rows], axis=1).astype(np.float64)
    points = backproject_pixels(pixels, view.depth[rows, cols], view)
    flat, inside = flat_voxel_indices(points, spec)
    pixel_flat = rows[inside] * view.depth.shape[1] + cols[inside]
    return pixel_flat.astype(np.int64), flat[inside]


def _check_heatmap(index: int, view: CameraView, heatmap: np.ndarray) -> None:
    if heatmap.shape != view.depth.shape:
        raise VoxelError(
            f"Heatmap {index} has shape {heatmap.shape}, view has {view.depth.shape}",
            code=ErrorCode.VOXEL_DIMENSION_MISMATCH,
            view_index=index
        )
    if not np.all(np.isfinite(heatmap)) or heatmap.min(initial=0.0) < 0.0 or heatmap.max(initial=0.0) > 1.0:
        raise VoxelError(
            f"Heatmap {index} has values outside [0, 1]",
            code=ErrorCode.VOXEL_SCORE_OUT_OF_RANGE,
            view_index=index,
            context={"min": float(np.nanmin(heatmap)), "max": float(np.nanmax(heatmap))}
        )


def accumulate(views: Sequence[CameraView], heatmaps: Sequence[Heatmap], spec: GridSpec) -> VoxelGrid:
    """
    Накопление оценок детектора в вокселях.

    Каждый пиксель с глубиной > 0 и обратной проекцией внутри сетки
    увеличивает N своего вокселя на 1 и D на значение тепловой карты.

    Args:
        views: Ракурсы с плотной глубиной
        heatmaps: Тепловые карты детектора, по одной на ракурс
        spec: Геометрия сетки

    Returns:
        Новая сетка VoxelGrid

    Raises:
        VoxelError: При несовпадении размеров или значениях вне [0, 1]
    """
    if len(views) != len(heatmaps):
        raise VoxelError(
            f"Got {len(views)} views but {len(heatmaps)} heatmaps",
            code=ErrorCode.VOXEL_DIMENSION_MISMATCH
        )

    voxel_chunks = []
    weight_chunks = []
    for index, (view, heatmap) in enumerate(zip(views, heatmaps)):
        heatmap = np.asarray(heatmap, dtype=np.float64)
        _check_heatmap(index, view, heatmap)
        pixel_flat, voxel_flat = surface_hits(view, spec)
        voxel_chunks.append(voxel_flat)
        weight_chunks.append(heatmap.reshape(-1)[pixel_flat])

    grid = VoxelGrid.empty(spec)
    if voxel_chunks:
        voxels = np.concatenate(voxel_chunks)
        weights = np.concatenate(weight_chunks)
        grid.N = np.bincount(voxels, minlength=spec.n_cells).astype(np.int64).reshape(spec.dims)
        grid.D = np.bincount(voxels, weights=weights, minlength=spec.n_cells).reshape(spec.dims)

    logger.debug(kv("accumulate", views=len(views), hits=int(grid.N.sum()), occupied=grid.occupied))
    return grid


def repeatability(grid: VoxelGrid, min_views: int) -> np.ndarray:
    """
    Поячеечная мягкая повторяемость D/N.

    Returns:
        Массив формы dims; NaN там, где N < min_views
    """
    if min_views < 1:
        raise ValidationError(
            "min_views must be at least 1",
            code=ErrorCode.VALIDATION_RANGE_ERROR,
            field_name="min_views",
            invalid_value=min_views,
            expected=">= 1"
        )
    defined = grid.N >= min_views
    values = np.full(grid.spec.dims, np.nan)
    values[defined] = grid.D[defined] / grid.N[defined]
    return values


def render_repeatability(grid: VoxelGrid, view: CameraView, min_views: int) -> RepeatabilityMap:
    """
    Проекция повторяемости вокселей в пиксели ракурса (ближайший воксель).
    """
    per_cell = repeatability(grid, min_views).reshape(-1)
    height, width = view.depth.shape
    values = np.zeros(height * width)
    mask = np.zeros(height * width, dtype=bool)

    pixel_flat, voxel_flat = surface_hits(view, grid.spec)
    cell_values = per_cell[voxel_flat]
    defined = ~np.isnan(cell_values)
    values[pixel_flat[defined]] = cell_values[defined]
    mask[pixel_flat[defined]] = True
    return RepeatabilityMap(values=values.reshape(height, width), mask=mask.reshape(height, width))


def visibility_stats(grid: VoxelGrid, max_k: Optional[int] = None) -> np.ndarray:
    """
    Доли занятых ячеек с N ≥ k для k = 1..max_k.

    Args:
        grid: Сетка
        max_k: Число порогов; по умолчанию max(N) (минимум 1)

    Returns:
        Массив длины max_k; для пустой сетки — нули
    """
    n_max = int(grid.N.max(initial=0))
    length = max_k if max_k is not None else max(n_max, 1)
    occupied_counts = grid.N[grid.N > 0]
    if len(occupied_counts) == 0:
        return np.zeros(length)
    # histogram[c] = число занятых ячеек с N == c
    histogram = np.bincount(occupied_counts, minlength=max(length, n_max) + 1)
    at_least = histogram[::-1].cumsum()[::-1]
    return at_least[1:length + 1] / len(occupied_counts)


def write_grid_dump(grid: VoxelGrid, path: Union[str, Path]) -> None:
    """Отладочный дамп: заголовок ``X Y Z extent ox oy oz`` и строки ``i j k N D``."""
    spec = grid.spec
    lines = [" ".join(
        [str(d) for d in spec.dims] + ["%.9g" % spec.extent] + ["%.9g" % o for o in spec.origin]
    )]
    for i, j, k in np.argwhere(grid.N > 0):
        lines.append(f"{i} {j} {k} {grid.N[i, j, k]} {grid.D[i, j, k]:.17g}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
