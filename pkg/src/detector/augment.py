"""
Аугментации обучающих пар (изображение, псевдо-разметка).

Фотометрические операции меняют только изображение; гомография
применяется к изображению, маске ключевых точек и маске валидности.
"""

from dataclasses import dataclass
from typing import Tuple

import cv2
import numpy as np

from ..config.config_manager import AugmentConfig
from ..geometry.camera import warp_points
from ..maximizer.pseudo_gt import PseudoLabelMask


@dataclass
class AugmentParams:
    """Конкретная реализация случайной аугментации."""
    homography: np.ndarray
    blur_sigma: float = 0.0
    noise_std: float = 0.0
    brightness: float = 0.0
    contrast: float = 1.0

    @classmethod
    def identity(cls) -> "AugmentParams":
        return cls(homography=np.eye(3))

    @property
    def warps(self) -> bool:
        return not np.allclose(self.homography, np.eye(3), rtol=0.0, atol=1e-12)


def random_homography(cfg: AugmentConfig, shape: Tuple[int, int], generator: np.random.Generator) -> np.ndarray:
    """Случайная аффинная+перспективная гомография вокруг центра кадра."""
    height, width = shape
    angle = np.radians(generator.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg))
    scale = 1.0 + generator.uniform(-cfg.max_scale, cfg.max_scale)
    shift = generator.uniform(-cfg.max_shift_px, cfg.max_shift_px, size=2)
    perspective = generator.uniform(-cfg.max_perspective, cfg.max_perspective, size=2)

    center = np.array([(width - 1) / 2.0, (height - 1) / 2.0])
    to_origin = np.array([[1.0, 0.0, -center[0]], [0.0, 1.0, -center[1]], [0.0, 0.0, 1.0]])
    back = np.array([[1.0, 0.0, center[0] + shift[0]], [0.0, 1.0, center[1] + shift[1]], [0.0, 0.0, 1.0]])
    c, s = np.cos(angle) * scale, np.sin(angle) * scale
    linear = np.array([[c, -s, 0.0], [s, c, 0.0], [perspective[0], perspective[1], 1.0]])
    return back @ linear @ to_origin


def sample_augmentation(cfg: AugmentConfig, shape: Tuple[int, int], generator: np.random.Generator) -> AugmentParams:
    """Выбор параметров аугментации из генератора."""
    if not cfg.enabled:
        return AugmentParams.identity()
    params = AugmentParams.identity()
    if generator.random() < cfg.warp_prob:
        params.homography = random_homography(cfg, shape, generator)
    if generator.random() < cfg.blur_prob:
        params.blur_sigma = float(generator.uniform(0.3, max(cfg.blur_sigma_max, 0.3)))
    if generator.random() < cfg.noise_prob:
        params.noise_std = float(generator.uniform(0.0, cfg.noise_std_max))
    params.brightness = float(generator.uniform(-cfg.brightness_max, cfg.brightness_max))
    params.contrast = float(generator.uniform(cfg.contrast_min, cfg.contrast_max))
    return params


def warp_label(label: PseudoLabelMask, H: np.ndarray, border: int) -> PseudoLabelMask:
    """
    Перенос псевдо-разметки гомографией.

    Точки переносятся через warp_points с округлением до пикселя; попавшие
    за кадр, в полосу border или на недействительный пиксель перенесенной
    маски valid отбрасываются.
    """
    height, width = label.mask.shape
    valid = cv2.warpPerspective(
        label.valid.astype(np.uint8), H, (width, height),
        flags=cv2.INTER_NEAREST, borderMode=cv2.BORDER_CONSTANT, borderValue=0
    ).astype(bool)

    mask = np.zeros_like(label.mask)
    rows, cols = np.nonzero(label.mask)
    if len(rows):
        moved = np.rint(warp_points(np.stack([cols, rows], axis=1), H)).astype(np.int64)
        u, v = moved[:, 0], moved[:, 1]
        keep = (u >= border) & (u < width - border) & (v >= border) & (v < height - border)
        keep[keep] = valid[v[keep], u[keep]]
        mask[v[keep], u[keep]] = True
    return PseudoLabelMask(mask=mask, valid=valid)


def apply_augmentation(
    image: np.ndarray,
    label: PseudoLabelMask,
    params: AugmentParams,
    generator: np.random.Generator,
    border: int = 4
) -> Tuple[np.ndarray, PseudoLabelMask]:
    """Применение аугментации; генератор нужен только для шума."""
    height, width = image.shape
    out = np.asarray(image, dtype=np.float64)
    if params.warps:
        out = cv2.warpPerspective(
            out, params.homography, (width, height),
            flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0.0
        )
        label = warp_label(label, params.homography, border)
    else:
        label = PseudoLabelMask(mask=label.mask.copy(), valid=label.valid.copy())

    if params.blur_sigma > 0:
        out = cv2.GaussianBlur(out, (0, 0), params.blur_sigma)
    if params.contrast != 1.0 or params.brightness != 0.0:
        out = out * params.contrast + params.brightness
    if params.noise_std > 0:
        out = out + generator.normal(0.0, params.noise_std, size=out.shape)
    return np.clip(out, 0.0, 1.0), label


def augment(
    image: np.ndarray,
    label: PseudoLabelMask,
    cfg: AugmentConfig,
    generator: np.random.Generator,
    border: int = 4
) -> Tuple[np.ndarray, PseudoLabelMask]:
    """
    Случайная аугментация пары; детерминирована состоянием генератора.

    Returns:
        Новое изображение и перенесенная псевдо-разметка
    """
    params = sample_augmentation(cfg, image.shape, generator)
    return apply_augmentation(image, label, params, generator, border)
