"""
Источники ключевых точек для оценки: обученный детектор и базовые линии.

Источник — вызываемый объект ``image -> KeypointSet``.
"""

import zlib
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..config.config_manager import EvalConfig
from ..detector.network import HeatmapDetector, predict_heatmaps
from ..maximizer.pseudo_gt import greedy_select, harris_response
from ..utils.seeding import rng


@dataclass
class KeypointSet:
    """
    Ключевые точки одного изображения.

    Attributes:
        pixels: Целочисленные пиксели (K, 2) как (u, v)
        scores: Оценки (K,)
        threshold: Порог извлечения
        r_nms: Радиус подавления
    """
    pixels: np.ndarray
    scores: np.ndarray
    threshold: float = 0.0
    r_nms: float = 0.0

    def __len__(self) -> int:
        return len(self.scores)

    @classmethod
    def empty(cls, threshold: float = 0.0, r_nms: float = 0.0) -> "KeypointSet":
        return cls(np.empty((0, 2), dtype=np.int64), np.empty(0), threshold, r_nms)


KeypointSource = Callable[[np.ndarray], KeypointSet]


def extract_from_heatmap(
    heatmap: np.ndarray,
    threshold: float = 0.025,
    r_nms: float = 3.0,
    cell: int = 8,
    border: int = 4,
    max_keypoints: Optional[int] = None
) -> KeypointSet:
    """
    Порог → NMS радиуса r_nms → подавление по клеткам → удаление полосы border.
    """
    heatmap = np.asarray(heatmap, dtype=np.float64)
    height, width = heatmap.shape
    selection = greedy_select(
        heatmap,
        heatmap < threshold,
        L=max_keypoints or height * width,
        r_nms=r_nms,
        cell=cell,
        border=0,
        score_floor=threshold
    )
    u, v = selection.pixels[:, 0], selection.pixels[:, 1]
    keep = (u >= border) & (u < width - border) & (v >= border) & (v < height - border)
    return KeypointSet(selection.pixels[keep], selection.scores[keep], threshold, r_nms)


def extract(model: HeatmapDetector, image: np.ndarray, threshold: float = 0.025, r_nms: float = 3.0,
            cell: int = 8, border: int = 4) -> KeypointSet:
    """Извлечение ключевых точек детектором."""
    heatmap = predict_heatmaps(model, [image])[0]
    return extract_from_heatmap(heatmap, threshold, r_nms, cell, border)


class DetectorExtractor:
    """Источник точек на основе обученного детектора."""

    def __init__(self, model: HeatmapDetector, cfg: EvalConfig) -> None:
        self.model = model
        self.cfg = cfg

    def heatmap(self, image: np.ndarray) -> np.ndarray:
        return predict_heatmaps(self.model, [image])[0]

    def __call__(self, image: np.ndarray) -> KeypointSet:
        return extract_from_heatmap(
            self.heatmap(image), self.cfg.threshold, self.cfg.r_nms, self.cfg.cell, self.cfg.keypoint_border
        )


class RandomKeypointBaseline:
    """
    Равномерно случайные точки вне полосы border.

    Число точек берется у опорного источника на том же изображении
    (или фиксировано, если опорного нет). Поток случайных чисел выводится
    из seed и содержимого изображения, поэтому результат не зависит от
    порядка вызовов.
    """

    def __init__(self, seed: int, reference: Optional[KeypointSource] = None,
                 count: int = 50, border: int = 4) -> None:
        self.seed = seed
        self.reference = reference
        self.count = count
        self.border = border

    @staticmethod
    def image_key(image: np.ndarray) -> int:
        """CRC32 пикселей и размера изображения."""
        pixels = np.ascontiguousarray(image, dtype=np.float64)
        return zlib.crc32(pixels.tobytes(), zlib.crc32(repr(pixels.shape).encode("ascii")))

    def __call__(self, image: np.ndarray) -> KeypointSet:
        count = len(self.reference(image)) if self.reference is not None else self.count
        generator = rng(self.seed, "baseline", self.image_key(image))

        height, width = image.shape
        b = self.border
        inner = (height - 2 * b) * (width - 2 * b)
        if count <= 0 or inner <= 0:
            return KeypointSet.empty()
        flat = generator.choice(inner, size=min(count, inner), replace=False)
        rows = flat // (width - 2 * b) + b
        cols = flat % (width - 2 * b) + b
        pixels = np.stack([cols, rows], axis=1).astype(np.int64)
        return KeypointSet(pixels, np.ones(len(pixels)))


@dataclass
class HarrisBaseline:
    """Классические углы Харриса с тем же порогом/NMS/клетками, что у детектора."""
    cfg: EvalConfig
    k: float = 0.04
    sigma: float = 1.5
    relative_threshold: float = 0.01
    max_keypoints: Optional[int] = None

    def response(self, image: np.ndarray) -> np.ndarray:
        return harris_response(image, self.sigma, self.k)

    def __call__(self, image: np.ndarray) -> KeypointSet:
        response = self.response(image)
        peak = response.max(initial=0.0)
        if peak <= 0:
            return KeypointSet.empty(self.relative_threshold, self.cfg.r_nms)
        return extract_from_heatmap(
            np.clip(response / peak, 0.0, 1.0),
            threshold=self.relative_threshold,
            r_nms=self.cfg.r_nms,
            cell=self.cfg.cell,
            border=self.cfg.keypoint_border,
            max_keypoints=self.max_keypoints
        )

