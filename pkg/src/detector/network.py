"""
Сверточный детектор тепловых карт с клеточным softmax.

Энкодер из трех сверток 3×3 со страйдом 2 (1→16→16→32, BatchNorm, ReLU)
сжимает изображение в сетку клеток 8×8; голова 1×1 выдает 65 логитов на
клетку (64 позиции + dustbin). После softmax по каналам dustbin
отбрасывается, а 64 значения раскладываются в пиксели клетки
(depth-to-space).
"""

from typing import Optional, Sequence, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..utils.exceptions import ErrorCode, TrainingError
from ..utils.seeding import torch_generator

CELL = 8
CHANNELS = (1, 16, 16, 32)
HEAD_CHANNELS = CELL * CELL + 1
HEAD_INIT_STD = 0.01

ARCHITECTURE = (
    "sedm-heatmap/v1 "
    + " ".join(f"conv3x3s2-bn-relu:{a}->{b}" for a, b in zip(CHANNELS[:-1], CHANNELS[1:]))
    + f" conv1x1:{CHANNELS[-1]}->{HEAD_CHANNELS} cell:{CELL}"
)


class HeatmapDetector(nn.Module):
    """Детектор ключевых точек: изображение (B, 1, H, W) → тепловая карта (B, H, W)."""

    def __init__(self, bn_momentum: float = 0.9) -> None:
        """
        Args:
            bn_momentum: Доля старой статистики BatchNorm при обновлении
        """
        super().__init__()
        layers = []
        for c_in, c_out in zip(CHANNELS[:-1], CHANNELS[1:]):
            layers.extend([
                nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1),
                # в torch momentum: вес нового значения
                nn.BatchNorm2d(c_out, momentum=1.0 - bn_momentum),
                nn.ReLU(),
            ])
        self.encoder = nn.Sequential(*layers)
        self.head = nn.Conv2d(CHANNELS[-1], HEAD_CHANNELS, kernel_size=1)

    @staticmethod
    def check_shape(images: torch.Tensor) -> None:
        height, width = images.shape[-2:]
        if height % CELL or width % CELL:
            raise TrainingError(
                f"Image size {width}x{height} is not divisible by {CELL}",
                code=ErrorCode.TRAINING_SHAPE_ERROR,
                context={"width": int(width), "height": int(height)}
            )

    def logits(self, images: torch.Tensor) -> torch.Tensor:
        """Логиты клеток (B, 65, H/8, W/8)."""
        if images.dim() == 3:
            images = images.unsqueeze(1)
        self.check_shape(images)
        return self.head(self.encoder(images))

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        scores = F.softmax(self.logits(images), dim=1)[:, :-1]
        return F.pixel_shuffle(scores, CELL).squeeze(1)


def init_detector(seed: int, salt: int = 0, bn_momentum: float = 0.9) -> HeatmapDetector:
    """
    Детектор с инициализацией He из потока ``init``.

    Свертки энкодера ~ N(0, 2/fan_in), голова ~ N(0, 0.01²), смещения нулевые,
    так что исходная тепловая карта близка к равномерной.
    """
    model = HeatmapDetector(bn_momentum=bn_momentum)
    generator = torch_generator(seed, "init", salt)
    with torch.no_grad():
        for module in model.modules():
            if not isinstance(module, nn.Conv2d):
                continue
            if module is model.head:
                std = HEAD_INIT_STD
            else:
                fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
                std = float(np.sqrt(2.0 / fan_in))
            module.weight.copy_(torch.randn(module.weight.shape, generator=generator) * std)
            module.bias.zero_()
    return model


def to_tensor(images: Union[np.ndarray, Sequence[np.ndarray]], dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Пачка изображений (B, 1, H, W) из массивов (H, W)."""
    array = np.stack([np.asarray(image) for image in images]) if not isinstance(images, np.ndarray) else images
    if array.ndim == 2:
        array = array[None]
    return torch.as_tensor(np.ascontiguousarray(array), dtype=dtype).unsqueeze(1)


def predict_heatmaps(
    model: HeatmapDetector,
    images: Union[np.ndarray, Sequence[np.ndarray]],
    batch_size: int = 16,
    dtype: Optional[torch.dtype] = None
) -> np.ndarray:
    """
    Инференс в режиме оценки.

    Returns:
        Тепловые карты (B, H, W) float64 в [0, 1]
    """
    dtype = dtype or next(model.parameters()).dtype
    tensor = to_tensor(images, dtype=dtype)
    was_training = model.training
    model.eval()
    outputs = []
    with torch.no_grad():
        for start in range(0, len(tensor), batch_size):
            outputs.append(model(tensor[start:start + batch_size]).double().numpy())
    model.train(was_training)
    if not outputs:
        return np.empty((0,) + tuple(tensor.shape[-2:]))
    return np.clip(np.concatenate(outputs), 0.0, 1.0)
