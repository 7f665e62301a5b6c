"""
Модели данных EM-цикла.
"""

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional

import torch

from ..detector.network import HeatmapDetector
from ..geometry.camera import CameraView, GridSpec

METRIC_COLUMNS = [
    "iteration",
    "L",
    "mean_pgt_repeatability",
    "mean_pgt_count",
    "final_train_loss",
    "eval_repeatability_3px",
]


@dataclass
class IterationMetrics:
    """Метрики одной завершенной EM-итерации (строка metrics.csv)."""
    iteration: int
    L: int
    mean_pgt_repeatability: float
    mean_pgt_count: float
    final_train_loss: float
    eval_repeatability_3px: float

    def to_row(self) -> Dict[str, str]:
        """Строка CSV с фиксированным форматированием чисел."""
        row = {}
        for key, value in asdict(self).items():
            row[key] = str(value) if isinstance(value, int) else f"{value:.9g}"
        return row

    @classmethod
    def from_row(cls, row: Dict[str, str]) -> "IterationMetrics":
        """Разбор строки CSV."""
        values = {}
        for f in fields(cls):
            raw = row[f.name]
            values[f.name] = int(raw) if f.type in (int, "int") else float(raw)
        return cls(**values)


@dataclass
class SceneData:
    """
    Обучающая сцена.

    Attributes:
        path: Каталог датасета
        views: Ракурсы с изображением и плотной глубиной
        grid: Сетка по ограничивающему боксу поверхности сцены
    """
    path: Path
    views: List[CameraView]
    grid: GridSpec

    @property
    def name(self) -> str:
        return self.path.name


@dataclass
class EmState:
    """
    Состояние EM-цикла.

    Attributes:
        iteration: Число завершенных итераций
        model: Текущий детектор
        optimizer: Adam детектора
        scenes: Обучающие сцены
        metrics: Метрики завершенных итераций (по одной на итерацию)
    """
    iteration: int
    model: HeatmapDetector
    optimizer: torch.optim.Optimizer
    scenes: List[SceneData] = field(default_factory=list)
    metrics: List[IterationMetrics] = field(default_factory=list)

    @property
    def last_metrics(self) -> Optional[IterationMetrics]:
        return self.metrics[-1] if self.metrics else None
