"""
Протоколы оценки: многоракурсная повторяемость, MMA по гомографиям с
патч-дескриптором и 3D-ошибка локализации по истинной глубине.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import cv2
import numpy as np

from ..geometry.camera import CameraView, backproject_pixels, project_points, warp_points
from ..utils.exceptions import ErrorCode, SedmError, ValidationError
from ..utils.logger import get_logger, kv
from .keypoints import KeypointSet, KeypointSource

logger = get_logger(__name__)

ImagePair = Tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass
class Correspondences:
    """Повторенные точки направления A→B."""
    visible: int
    pairs: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def score(self) -> Optional[float]:
        return len(self.pairs) / self.visible if self.visible else None


def _surface_points(kps: KeypointSet, view: CameraView) -> Tuple[np.ndarray, np.ndarray]:
    """Обратная проекция точек с глубиной > 0 и их индексы."""
    if len(kps) == 0:
        return np.empty((0, 3)), np.empty(0, dtype=np.int64)
    u, v = kps.pixels[:, 0], kps.pixels[:, 1]
    depth = view.depth[v, u].astype(np.float64)
    has_depth = np.nonzero(depth > 0)[0]
    points = backproject_pixels(kps.pixels[has_depth].astype(np.float64), depth[has_depth], view)
    return points, has_depth


def match_repeated(
    kps_a: KeypointSet,
    kps_b: KeypointSet,
    view_a: CameraView,
    view_b: CameraView,
    eps_px: float,
    occlusion_tol: float
) -> Correspondences:
    """
    Повторенные точки A в B.

    Точка A видна в B, если ее 3D-точка проецируется в кадр B и истинная
    глубина B в ближайшем пикселе совпадает с z в пределах occlusion_tol.
    Видимая точка повторена, если ближайшая точка B не дальше eps_px.
    """
    points, indices = _surface_points(kps_a, view_a)
    if len(points) == 0:
        return Correspondences(visible=0)

    pixels, z, inside = project_points(points, view_b)
    height, width = view_b.depth.shape
    rounded = np.rint(pixels[inside]).astype(np.int64)
    u = np.clip(rounded[:, 0], 0, width - 1)
    v = np.clip(rounded[:, 1], 0, height - 1)
    depth_b = view_b.depth[v, u].astype(np.float64)
    unoccluded = (depth_b > 0) & (np.abs(depth_b - z[inside]) <= occlusion_tol)

    visible_pixels = pixels[inside][unoccluded]
    visible_indices = indices[inside][unoccluded]
    result = Correspondences(visible=len(visible_indices))
    if len(kps_b) == 0 or result.visible == 0:
        return result

    offsets = visible_pixels[:, None, :] - kps_b.pixels[None, :, :].astype(np.float64)
    dist = np.linalg.norm(offsets, axis=-1)
    nearest = dist.argmin(axis=1)
    for row, (index, j) in enumerate(zip(visible_indices, nearest)):
        if dist[row, j] <= eps_px:
            result.pairs.append((int(index), int(j)))
    return result


def repeatability_score(
    kps_a: KeypointSet,
    kps_b: KeypointSet,
    view_a: CameraView,
    view_b: CameraView,
    eps_px: float,
    occlusion_tol: float = 0.01
) -> float:
    """
    Симметричная повторяемость: среднее направлений A→B и B→A.

    Направление без видимых точек не учитывается; если таких два, результат 0.
    """
    scores = [
        s for s in (
            match_repeated(kps_a, kps_b, view_a, view_b, eps_px, occlusion_tol).score,
            match_repeated(kps_b, kps_a, view_b, view_a, eps_px, occlusion_tol).score,
        ) if s is not None
    ]
    return float(np.mean(scores)) if scores else 0.0


def view_pairs(n_views: int, max_pairs: Optional[int] = None) -> List[Tuple[int, int]]:
    """Соседние пары ракурсов (i, i+1)."""
    pairs = [(i, i + 1) for i in range(n_views - 1)]
    return pairs[:max_pairs] if max_pairs else pairs


def multiview_repeatability(
    keypoints: Sequence[KeypointSet],
    views: Sequence[CameraView],
    eps_px: float,
    occlusion_tol: float,
    max_pairs: Optional[int] = None
) -> Tuple[float, int]:
    """Средняя повторяемость по соседним парам ракурсов и число пар."""
    pairs = view_pairs(len(views), max_pairs)
    scores = [
        repeatability_score(keypoints[i], keypoints[j], views[i], views[j], eps_px, occlusion_tol)
        for i, j in pairs
    ]
    return (float(np.mean(scores)) if scores else 0.0), len(scores)


def localization_errors(
    kps_a: KeypointSet,
    kps_b: KeypointSet,
    view_a: CameraView,
    view_b: CameraView,
    eps_px: float,
    occlusion_tol: float
) -> np.ndarray:
    """3D-расстояния между точками повторенных пар (оба направления)."""
    distances = []
    for (ka, kb, va, vb) in ((kps_a, kps_b, view_a, view_b), (kps_b, kps_a, view_b, view_a)):
        for i, j in match_repeated(ka, kb, va, vb, eps_px, occlusion_tol).pairs:
            pa, pb = ka.pixels[i], kb.pixels[j]
            da, db = float(va.depth[pa[1], pa[0]]), float(vb.depth[pb[1], pb[0]])
            if db <= 0:
                continue
            xa = backproject_pixels(pa.astype(np.float64), np.array([da]), va)[0]
            xb = backproject_pixels(pb.astype(np.float64), np.array([db]), vb)[0]
            distances.append(float(np.linalg.norm(xa - xb)))
    return np.array(distances)


def localization_error_3d(
    source: KeypointSource,
    views: Sequence[CameraView],
    eps_px: float,
    occlusion_tol: float = 0.01,
    max_pairs: Optional[int] = None
) -> Tuple[float, int]:
    """
    Средняя 3D-ошибка локализации повторенных точек (метры) и число пар точек.

    Raises:
        ValidationError: Меньше двух ракурсов
    """
    if len(views) < 2:
        raise ValidationError(
            "Localization error needs at least two views",
            code=ErrorCode.VALIDATION_RANGE_ERROR,
            field_name="views",
            invalid_value=len(views),
            expected=">= 2"
        )
    keypoints = [source(view.image) for view in views]
    return mean_localization_error(keypoints, views, eps_px, occlusion_tol, max_pairs)


def mean_localization_error(
    keypoints: Sequence[KeypointSet],
    views: Sequence[CameraView],
    eps_px: float,
    occlusion_tol: float,
    max_pairs: Optional[int] = None
) -> Tuple[float, int]:
    """Средняя 3D-ошибка по уже извлеченным точкам соседних пар ракурсов."""
    chunks = [
        localization_errors(keypoints[i], keypoints[j], views[i], views[j], eps_px, occlusion_tol)
        for i, j in view_pairs(len(views), max_pairs)
    ]
    errors = np.concatenate(chunks) if chunks else np.empty(0)
    return (float(errors.mean()) if len(errors) else 0.0), len(errors)


def patch_descriptor(image: np.ndarray, keypoint: Sequence[int], patch: int = 13) -> np.ndarray:
    """
    Нормированный патч вокруг точки: вычитание среднего и L2-нормировка.

    Края изображения дополняются повтором крайних пикселей; постоянный
    патч дает нулевой вектор.
    """
    half = patch // 2
    padded = np.pad(np.asarray(image, dtype=np.float64), half, mode="edge")
    u, v = int(keypoint[0]), int(keypoint[1])
    values = padded[v:v + patch, u:u + patch].reshape(-1)
    values = values - values.mean()
    norm = np.linalg.norm(values)
    if norm < 1e-12:
        return np.zeros(patch * patch)
    return values / norm


def describe(image: np.ndarray, kps: KeypointSet, patch: int = 13) -> np.ndarray:
    """Дескрипторы (K, patch²) всех точек."""
    if len(kps) == 0:
        return np.empty((0, patch * patch))
    return np.stack([patch_descriptor(image, p, patch) for p in kps.pixels])


@dataclass
class MatchResult:
    """Взаимно ближайшие соседи: индексы в A, в B и расстояния дескрипторов."""
    index_a: np.ndarray
    index_b: np.ndarray
    distance: np.ndarray

    def __len__(self) -> int:
        return len(self.index_a)


def mutual_nn_match(desc_a: np.ndarray, desc_b: np.ndarray) -> MatchResult:
    """
    Взаимное сопоставление ближайших соседей по L2 (BFMatcher с crossCheck).

    Нулевые дескрипторы (постоянные патчи) не сопоставляются.
    """
    usable_a = np.nonzero(np.linalg.norm(desc_a, axis=1) > 0)[0] if len(desc_a) else np.empty(0, dtype=np.int64)
    usable_b = np.nonzero(np.linalg.norm(desc_b, axis=1) > 0)[0] if len(desc_b) else np.empty(0, dtype=np.int64)
    if len(usable_a) == 0 or len(usable_b) == 0:
        empty = np.empty(0, dtype=np.int64)
        return MatchResult(empty, empty.copy(), np.empty(0))

    matcher = cv2.BFMatcher(cv2.NORM_L2, crossCheck=True)
    matches = matcher.match(desc_a[usable_a].astype(np.float32), desc_b[usable_b].astype(np.float32))
    matches = sorted(matches, key=lambda m: m.queryIdx)
    return MatchResult(
        index_a=usable_a[np.array([m.queryIdx for m in matches], dtype=np.int64)],
        index_b=usable_b[np.array([m.trainIdx for m in matches], dtype=np.int64)],
        distance=np.array([m.distance for m in matches], dtype=np.float64)
    )


@dataclass
class MmaResult:
    """Точность сопоставления по порогам 1..T пикселей, усредненная по парам."""
    thresholds: np.ndarray
    accuracy: np.ndarray
    n_pairs: int
    failed_pairs: List[SedmError] = field(default_factory=list)


def pair_accuracy(
    kps_a: KeypointSet,
    kps_b: KeypointSet,
    matches: MatchResult,
    H: np.ndarray,
    thresholds: np.ndarray
) -> np.ndarray:
    """Доля верных сопоставлений пары для каждого порога."""
    if len(matches) == 0:
        return np.zeros(len(thresholds))
    warped = warp_points(kps_a.pixels[matches.index_a].astype(np.float64), H)
    errors = np.linalg.norm(warped - kps_b.pixels[matches.index_b], axis=1)
    return (errors[None, :] <= thresholds[:, None]).mean(axis=1)


def mma(
    source: KeypointSource,
    pairs: Sequence[ImagePair],
    thresholds: Sequence[float] = tuple(range(1, 11)),
    patch: int = 13
) -> MmaResult:
    """
    Средняя точность сопоставления (MMA).

    Пары без сопоставлений дают точность 0 и попадают в ``failed_pairs``.
    """
    thresholds = np.asarray(thresholds, dtype=np.float64)
    per_pair = []
    failed: List[SedmError] = []
    for index, (image_a, image_b, H) in enumerate(pairs):
        kps_a, kps_b = source(image_a), source(image_b)
        matches = mutual_nn_match(describe(image_a, kps_a, patch), describe(image_b, kps_b, patch))
        if len(matches) == 0:
            logger.warning(kv("mma_no_matches", pair=index, keypoints_a=len(kps_a), keypoints_b=len(kps_b)))
            failed.append(ValidationError(
                f"Pair {index} produced no matches",
                code=ErrorCode.VALIDATION_INVALID_DATA,
                context={"pair": index, "keypoints_a": len(kps_a), "keypoints_b": len(kps_b)}
            ))
        per_pair.append(pair_accuracy(kps_a, kps_b, matches, H, thresholds))

    accuracy = np.mean(per_pair, axis=0) if per_pair else np.zeros(len(thresholds))
    return MmaResult(thresholds=thresholds, accuracy=accuracy, n_pairs=len(per_pair), failed_pairs=failed)
