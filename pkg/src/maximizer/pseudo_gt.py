"""
Шаг максимизации: построение псевдо-разметки по карте мягкой повторяемости.

Выбор ключевых точек жадный по убыванию повторяемости с ограничениями:
не более L точек, попарное расстояние больше r_nms, не более одной точки
на клетку cell×cell, отступ border от края кадра и исключение ребер.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import cv2
import numpy as np

from ..config.config_manager import MaximizerConfig
from ..utils.exceptions import ErrorCode, ValidationError
from ..voxels.voxel_grid import RepeatabilityMap

EDGE_EPS = 1e-12


@dataclass
class Selection:
    """Упорядоченный результат жадного выбора: пиксели (u, v) и их оценки."""
    pixels: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.scores)

    @classmethod
    def empty(cls) -> "Selection":
        return cls(pixels=np.empty((0, 2), dtype=np.int64), scores=np.empty(0))


@dataclass
class PseudoLabelMask:
    """
    Псевдо-разметка одного изображения.

    Attributes:
        mask: Бинарная маска ключевых точек (y в функции потерь)
        valid: Пиксели, участвующие в функции потерь (определенная повторяемость)
    """
    mask: np.ndarray
    valid: np.ndarray

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))


def harris_response(values: np.ndarray, sigma: float = 1.5, k: float = 0.06) -> np.ndarray:
    """Отклик Харриса det(M) − k·tr(M)² тензора структуры с гауссовым окном σ."""
    values = np.asarray(values, dtype=np.float64)
    ix = cv2.Sobel(values, cv2.CV_64F, 1, 0, ksize=3)
    iy = cv2.Sobel(values, cv2.CV_64F, 0, 1, ksize=3)
    sxx = cv2.GaussianBlur(ix * ix, (0, 0), sigma)
    syy = cv2.GaussianBlur(iy * iy, (0, 0), sigma)
    sxy = cv2.GaussianBlur(ix * iy, (0, 0), sigma)
    return sxx * syy - sxy * sxy - k * (sxx + syy) ** 2


def edge_mask(rep: RepeatabilityMap, sigma: float = 1.5, k: float = 0.06) -> np.ndarray:
    """
    Пиксели с реберной структурой карты повторяемости.

    Отклик Харриса R = det(M) − k·tr(M)² по тензору структуры с гауссовым
    окном σ; ребро — R < −1e-12. Неопределенные пиксели тоже помечаются.

    Returns:
        Булева карта (True — исключить)
    """
    values = np.where(rep.mask, rep.values, 0.0)
    return (harris_response(values, sigma, k) < -EDGE_EPS) | ~rep.mask


def _disc_offsets(radius: float) -> Tuple[np.ndarray, np.ndarray]:
    """Смещения (dy, dx) с евклидовым расстоянием ≤ radius."""
    reach = int(np.floor(radius))
    dy, dx = np.mgrid[-reach:reach + 1, -reach:reach + 1]
    inside = dy * dy + dx * dx <= radius * radius
    return dy[inside], dx[inside]


def greedy_select(
    scores: np.ndarray,
    excluded: np.ndarray,
    L: int,
    r_nms: float,
    cell: int = 8,
    border: int = 4,
    score_floor: float = 0.0
) -> Selection:
    """
    Жадный выбор точек по убыванию оценки.

    Кандидат принимается, если его оценка ≥ score_floor, он не исключен,
    не лежит в полосе border у края, дальше r_nms от всех принятых точек и
    его клетка cell×cell свободна. Равные оценки упорядочиваются по
    row-major индексу пикселя.

    Args:
        scores: Карта оценок (H, W)
        excluded: Булева карта исключенных пикселей
        L: Максимальное число точек
        r_nms: Радиус подавления в пикселях
        cell: Размер клетки
        border: Ширина исключаемой полосы у края
        score_floor: Минимальная оценка кандидата

    Returns:
        Selection в порядке принятия
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != excluded.shape:
        raise ValidationError(
            "Score map and exclusion map differ in shape",
            code=ErrorCode.VALIDATION_INVALID_DATA,
            field_name="excluded",
            invalid_value=(scores.shape, excluded.shape)
        )
    height, width = scores.shape
    if L < 1 or height <= 2 * border or width <= 2 * border:
        return Selection.empty()

    candidate = ~excluded & np.isfinite(scores) & (scores >= score_floor)
    interior = np.zeros_like(candidate)
    interior[border:height - border, border:width - border] = True
    rows, cols = np.nonzero(candidate & interior)
    if len(rows) == 0:
        return Selection.empty()

    # np.nonzero отдает row-major порядок, стабильная сортировка его сохраняет
    order = np.argsort(-scores[rows, cols], kind="stable")
    dy, dx = _disc_offsets(r_nms)
    blocked = np.zeros((height, width), dtype=bool)
    cell_taken = np.zeros((-(-height // cell), -(-width // cell)), dtype=bool)

    accepted: List[Tuple[int, int]] = []
    for index in order:
        r, c = int(rows[index]), int(cols[index])
        if blocked[r, c] or cell_taken[r // cell, c // cell]:
            continue
        accepted.append((r, c))
        cell_taken[r // cell, c // cell] = True
        rr, cc = r + dy, c + dx
        keep = (rr >= 0) & (rr < height) & (cc >= 0) & (cc < width)
        blocked[rr[keep], cc[keep]] = True
        if len(accepted) == L:
            break

    picked = np.array(accepted, dtype=np.int64)
    return Selection(
        pixels=picked[:, ::-1].copy(),
        scores=scores[picked[:, 0], picked[:, 1]]
    )


def nms_select(rep: RepeatabilityMap, excluded: np.ndarray, cfg: MaximizerConfig) -> Selection:
    """Жадный выбор по карте повторяемости; неопределенные пиксели исключаются всегда."""
    if rep.shape != excluded.shape:
        raise ValidationError(
            "Repeatability map and exclusion map differ in shape",
            code=ErrorCode.VALIDATION_INVALID_DATA,
            field_name="excluded",
            invalid_value=(rep.shape, excluded.shape)
        )
    return greedy_select(
        rep.values,
        excluded | ~rep.mask,
        L=cfg.L,
        r_nms=cfg.r_nms,
        cell=cfg.cell,
        border=cfg.border,
        score_floor=cfg.score_floor
    )


def rasterize_selection(selection: Selection, shape: Tuple[int, int]) -> np.ndarray:
    """Булева маска с True в выбранных пикселях."""
    mask = np.zeros(shape, dtype=bool)
    if len(selection):
        mask[selection.pixels[:, 1], selection.pixels[:, 0]] = True
    return mask


def build_pseudo_gt(rep: RepeatabilityMap, cfg: MaximizerConfig) -> PseudoLabelMask:
    """
    Псевдо-разметка одного ракурса.

    Returns:
        PseudoLabelMask; пиксели без данных о повторяемости исключены из valid
    """
    if cfg.edge_filter_on:
        excluded = edge_mask(rep, sigma=cfg.edge_sigma, k=cfg.edge_k)
    else:
        excluded = ~rep.mask
    selection = nms_select(rep, excluded, cfg)
    return PseudoLabelMask(mask=rasterize_selection(selection, rep.shape), valid=rep.mask.copy())


def validate_pseudo_label(label: PseudoLabelMask, rep: RepeatabilityMap, cfg: MaximizerConfig) -> List[str]:
    """
    Проверка инвариантов псевдо-разметки.

    Returns:
        Список нарушенных ограничений (пустой, если все выполнено)
    """
    violations = []
    rows, cols = np.nonzero(label.mask)
    height, width = label.mask.shape

    if len(rows) > cfg.L:
        violations.append(f"top_l: {len(rows)} > {cfg.L}")

    if len(rows) > 1:
        points = np.stack([rows, cols], axis=1).astype(np.float64)
        dist2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1)
        np.fill_diagonal(dist2, np.inf)
        if dist2.min() <= cfg.r_nms ** 2:
            violations.append(f"nms_distance: min {np.sqrt(dist2.min()):.3f} <= {cfg.r_nms}")

    cells = (rows // cfg.cell) * (-(-width // cfg.cell)) + cols // cfg.cell
    if len(np.unique(cells)) != len(cells):
        violations.append("cell: more than one keypoint per cell")

    b = cfg.border
    if np.any((rows < b) | (rows >= height - b) | (cols < b) | (cols >= width - b)):
        violations.append(f"border: keypoint within {b} px of the edge")

    if np.any(~rep.mask[rows, cols]):
        violations.append("masked: keypoint on a pixel without repeatability")

    if np.any(rep.values[rows, cols] < cfg.score_floor):
        violations.append(f"score_floor: keypoint below {cfg.score_floor}")

    return violations


def anneal_L(em_iteration: int, schedule: Sequence[int], period: int) -> int:
    """
    Отжиг числа ключевых точек: schedule[min(iteration // period, len − 1)].
    """
    if not schedule:
        raise ValidationError("L schedule must not be empty", field_name="schedule", expected="non-empty")
    if period < 1:
        raise ValidationError(
            "Annealing period must be positive",
            code=ErrorCode.VALIDATION_RANGE_ERROR,
            field_name="period",
            invalid_value=period,
            expected=">= 1"
        )
    return int(schedule[min(em_iteration // period, len(schedule) - 1)])
