"""
Медленные эталонные реализации для сверки быстрых версий.

Каждая функция считает результат самым прямым способом: попиксельными
циклами на чистом Python или полным пересканированием карты на каждом шаге.
"""

import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.geometry.camera import CameraView, GridSpec


def _pixel_voxel(view: CameraView, spec: GridSpec, row: int, col: int) -> Optional[Tuple[int, int, int]]:
    """Воксель поверхности пикселя через явную формулу обратной проекции."""
    depth = float(view.depth[row, col])
    if not depth > 0:
        return None
    intr = view.intrinsics
    cam = [
        (col - intr.cx) / intr.fx * depth - view.pose.translation[0],
        (row - intr.cy) / intr.fy * depth - view.pose.translation[1],
        depth - view.pose.translation[2],
    ]
    rot = view.pose.rotation
    world = [sum(cam[i] * rot[i][j] for i in range(3)) for j in range(3)]
    index = tuple(int(math.floor((world[j] - spec.origin[j]) / spec.extent)) for j in range(3))
    if any(index[j] < 0 or index[j] >= spec.dims[j] for j in range(3)):
        return None
    return index  # type: ignore[return-value]


def accumulate_oracle(
    views: Sequence[CameraView],
    heatmaps: Sequence[np.ndarray],
    spec: GridSpec
) -> Tuple[np.ndarray, np.ndarray]:
    """Накопление D и N обходом всех пикселей всех ракурсов."""
    D = np.zeros(spec.dims)
    N = np.zeros(spec.dims, dtype=np.int64)
    for view, heatmap in zip(views, heatmaps):
        height, width = view.depth.shape
        for row in range(height):
            for col in range(width):
                index = _pixel_voxel(view, spec, row, col)
                if index is None:
                    continue
                D[index] += float(heatmap[row, col])
                N[index] += 1
    return D, N


def render_oracle(
    D: np.ndarray,
    N: np.ndarray,
    view: CameraView,
    spec: GridSpec,
    min_views: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Карта повторяемости ракурса: D/N вокселя каждого пикселя."""
    height, width = view.depth.shape
    values = np.zeros((height, width))
    mask = np.zeros((height, width), dtype=bool)
    for row in range(height):
        for col in range(width):
            index = _pixel_voxel(view, spec, row, col)
            if index is None or N[index] < min_views:
                continue
            values[row, col] = D[index] / N[index]
            mask[row, col] = True
    return values, mask


def greedy_rescan_oracle(
    scores: np.ndarray,
    excluded: np.ndarray,
    L: int,
    r_nms: float,
    cell: int = 8,
    border: int = 4,
    score_floor: float = 0.0
) -> List[Tuple[int, int]]:
    """
    Жадный выбор полным пересканированием карты на каждом шаге.

    Returns:
        Принятые пиксели (u, v) в порядке принятия
    """
    height, width = scores.shape
    rows, cols = np.mgrid[0:height, 0:width]
    allowed = ~excluded & (scores >= score_floor)
    allowed &= (rows >= border) & (rows < height - border) & (cols >= border) & (cols < width - border)

    accepted: List[Tuple[int, int]] = []
    while len(accepted) < L:
        candidate = allowed.copy()
        for c, r in accepted:
            candidate &= (rows - r) ** 2 + (cols - c) ** 2 > r_nms * r_nms
            candidate[(r // cell) * cell:(r // cell + 1) * cell, (c // cell) * cell:(c // cell + 1) * cell] = False
        if not candidate.any():
            break
        # argmax отдает первый максимум в row-major порядке
        flat = int(np.argmax(np.where(candidate, scores, -np.inf)))
        accepted.append((flat % width, flat // width))
    return accepted


def bce_loop_oracle(x: np.ndarray, y: np.ndarray, valid: np.ndarray, border: int, eps: float = 1e-7) -> float:
    """Потеря одного изображения суммированием по пикселям."""
    height, width = x.shape
    total = 0.0
    for r in range(border, height - border):
        for c in range(border, width - border):
            if not valid[r, c]:
                continue
            p = min(max(float(x[r, c]), eps), 1.0 - eps)
            total -= math.log(p) if y[r, c] else math.log(1.0 - p)
    return total


def visibility_oracle(N: np.ndarray, max_k: int) -> Dict[int, float]:
    """Доли занятых ячеек с N ≥ k."""
    occupied = N[N > 0]
    return {k: (float(np.mean(occupied >= k)) if len(occupied) else 0.0) for k in range(1, max_k + 1)}
