"""
Отложенные тестовые сцены и прогон всех протоколов для набора источников точек.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import cv2
import numpy as np

from ..config.config_manager import AugmentConfig, DataConfig, EvalConfig, GridConfig
from ..geometry.camera import CameraView, Intrinsics
from ..scene.generator import generate_scene, generate_trajectory
from ..scene.renderer import render
from ..utils.exceptions import SedmError, create_error_summary
from ..utils.logger import get_logger, kv
from ..utils.seeding import derive_seed, rng
from ..detector.augment import random_homography
from .keypoints import KeypointSource
from .protocols import ImagePair, mean_localization_error, mma, multiview_repeatability

logger = get_logger(__name__)

SEQUENCES = ("illumination", "homography")


@dataclass
class Benchmark:
    """Пары изображений с известной гомографией и многоракурсные наборы."""
    illumination: List[ImagePair] = field(default_factory=list)
    homography: List[ImagePair] = field(default_factory=list)
    view_sets: List[List[CameraView]] = field(default_factory=list)


def rotation_homography(angle_deg: float, shape) -> np.ndarray:
    """Поворот вокруг центра кадра."""
    height, width = shape
    affine = cv2.getRotationMatrix2D(((width - 1) / 2.0, (height - 1) / 2.0), angle_deg, 1.0)
    return np.vstack([affine, [0.0, 0.0, 1.0]])


def warp_pair(image: np.ndarray, H: np.ndarray) -> ImagePair:
    height, width = image.shape
    warped = cv2.warpPerspective(image, H, (width, height), flags=cv2.INTER_LINEAR,
                                 borderMode=cv2.BORDER_CONSTANT, borderValue=0.0)
    return image, warped, H


def build_benchmark(
    seed: int,
    cfg: EvalConfig,
    data: Optional[DataConfig] = None,
    grid: Optional[GridConfig] = None
) -> Benchmark:
    """
    Рендер отложенных сцен из потока ``eval``.

    Для каждой сцены: пары одной позы при разном освещении (H = I),
    пары исходного кадра и его копии, повернутой на ±rotation_deg и
    искаженной случайной гомографией, и многоракурсный набор с глубиной.
    """
    data = data or DataConfig()
    grid = grid or GridConfig()
    intrinsics = Intrinsics.from_fov(data.width, data.height, data.fov_deg)
    benchmark = Benchmark()

    for index in range(cfg.n_scenes):
        scene = generate_scene(derive_seed(seed, "eval", index), data.complexity, n_lightings=data.n_lightings)
        trajectory = generate_trajectory(
            scene,
            cfg.n_views,
            derive_seed(seed, "eval", index, 1),
            intrinsics=intrinsics,
            extent=grid.extent,
            min_views=grid.min_views,
            coverage_target=0.0
        )
        views = [render(scene, view, lighting) for view, lighting in zip(trajectory.views, trajectory.lighting_per_view)]
        benchmark.view_sets.append(views)

        generator = rng(seed, "eval", index, 2)
        for view in trajectory.views[:2]:
            base = render(scene, view, 0)
            for lighting in range(1, scene.n_lightings):
                benchmark.illumination.append((base.image, render(scene, view, lighting).image, np.eye(3)))
            shape = base.image.shape
            for angle in (cfg.rotation_deg, -cfg.rotation_deg):
                benchmark.homography.append(warp_pair(base.image, rotation_homography(angle, shape)))
            benchmark.homography.append(warp_pair(base.image, random_homography(AugmentConfig(), shape, generator)))

        logger.info(kv("benchmark_scene", index=index, views=len(views),
                       illumination_pairs=len(benchmark.illumination), homography_pairs=len(benchmark.homography)))
    return benchmark


@dataclass
class SourceResult:
    """Результаты одного источника точек."""
    mma: Dict[str, np.ndarray] = field(default_factory=dict)
    thresholds: np.ndarray = field(default_factory=lambda: np.empty(0))
    n_pairs: Dict[str, int] = field(default_factory=dict)
    repeatability: float = 0.0
    repeatability_pairs: int = 0
    mean_keypoints: float = 0.0
    loc3d: float = 0.0
    loc3d_matches: int = 0
    failed_pairs: List[SedmError] = field(default_factory=list)

    @property
    def mean_mma(self) -> np.ndarray:
        """Среднее по последовательностям освещения и гомографий."""
        return np.mean([self.mma[name] for name in SEQUENCES if name in self.mma], axis=0)


@dataclass
class EvaluationResults:
    """Результаты всех источников и тепловые карты детектора."""
    eps_px: float
    sources: Dict[str, SourceResult] = field(default_factory=dict)
    heatmaps: List[np.ndarray] = field(default_factory=list)

    def error_summary(self) -> Dict:
        return create_error_summary([e for r in self.sources.values() for e in r.failed_pairs])


def evaluate(
    sources: Mapping[str, KeypointSource],
    benchmark: Benchmark,
    cfg: EvalConfig,
    occlusion_tol: float = 0.01
) -> EvaluationResults:
    """
    Прогон всех протоколов для всех источников.

    Args:
        sources: Имя → источник точек (порядок сохраняется в отчете)
        benchmark: Тестовые данные
        cfg: Параметры оценки
        occlusion_tol: Допуск проверки видимости по глубине (2·размер вокселя)
    """
    results = EvaluationResults(eps_px=cfg.eps_px)
    thresholds = np.arange(1, cfg.max_threshold_px + 1, dtype=np.float64)

    for name, source in sources.items():
        result = SourceResult(thresholds=thresholds)
        for sequence in SEQUENCES:
            outcome = mma(source, getattr(benchmark, sequence), thresholds, cfg.patch)
            result.mma[sequence] = outcome.accuracy
            result.n_pairs[sequence] = outcome.n_pairs
            result.failed_pairs.extend(outcome.failed_pairs)

        scores, pair_counts, counts, errors, matches = [], [], [], [], []
        for views in benchmark.view_sets:
            keypoints = [source(view.image) for view in views]
            counts.extend(len(k) for k in keypoints)
            score, n = multiview_repeatability(keypoints, views, cfg.eps_px, occlusion_tol, cfg.max_pairs_per_scene)
            scores.append(score * n)
            pair_counts.append(n)
            mean_error, n_matches = mean_localization_error(
                keypoints, views, cfg.eps_px, occlusion_tol, cfg.max_pairs_per_scene
            )
            errors.append(mean_error * n_matches)
            matches.append(n_matches)

        result.repeatability_pairs = int(sum(pair_counts))
        result.repeatability = float(sum(scores) / result.repeatability_pairs) if result.repeatability_pairs else 0.0
        result.loc3d_matches = int(sum(matches))
        result.loc3d = float(sum(errors) / result.loc3d_matches) if result.loc3d_matches else 0.0
        result.mean_keypoints = float(np.mean(counts)) if counts else 0.0
        results.sources[name] = result

        logger.info(kv(
            "evaluated",
            source=name,
            mma_illumination_1px=float(result.mma["illumination"][0]) if len(thresholds) else 0.0,
            mma_homography_1px=float(result.mma["homography"][0]) if len(thresholds) else 0.0,
            repeatability=result.repeatability,
            loc3d=result.loc3d,
            mean_keypoints=result.mean_keypoints
        ))
    return results
