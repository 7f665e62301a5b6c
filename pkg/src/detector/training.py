"""
Функция потерь, градиенты, шаг Adam и цикл обучения детектора.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from ..config.config_manager import AugmentConfig, TrainConfig
from ..maximizer.pseudo_gt import PseudoLabelMask
from ..utils.exceptions import ErrorCode, TrainingError
from ..utils.logger import get_logger, kv
from ..utils.seeding import rng
from .augment import augment
from .network import HeatmapDetector, to_tensor

logger = get_logger(__name__)

CLAMP_EPS = 1e-7

TrainingSample = Tuple[np.ndarray, PseudoLabelMask]


def loss_mask(valid: torch.Tensor, border: int = 4) -> torch.Tensor:
    """Пиксели, входящие в сумму потерь: валидные и вне полосы border."""
    included = valid.clone().bool()
    if border > 0:
        included[..., :border, :] = False
        included[..., -border:, :] = False
        included[..., :, :border] = False
        included[..., :, -border:] = False
    return included


def bce_loss(
    x: torch.Tensor,
    y: torch.Tensor,
    valid: Optional[torch.Tensor] = None,
    border: int = 4,
    eps: float = CLAMP_EPS
) -> torch.Tensor:
    """
    Бинарная кросс-энтропия −Σ [y·log x + (1−y)·log(1−x)] по включенным пикселям.

    Args:
        x: Тепловые карты (..., H, W)
        y: Псевдо-разметка той же формы
        valid: Маска валидных пикселей (по умолчанию все)
        border: Исключаемая полоса у края
        eps: Отсечение x в [eps, 1−eps]

    Returns:
        Сумма по пикселям для каждого элемента пачки (форма x без двух последних осей)
    """
    if x.shape != y.shape or (valid is not None and valid.shape != x.shape):
        raise TrainingError(
            f"Heatmap {tuple(x.shape)} and label {tuple(y.shape)} differ in shape",
            code=ErrorCode.TRAINING_SHAPE_ERROR
        )
    if valid is None:
        valid = torch.ones_like(y, dtype=torch.bool)
    included = loss_mask(valid, border)
    x = x.clamp(eps, 1.0 - eps)
    y = y.to(x.dtype)
    per_pixel = -(y * torch.log(x) + (1.0 - y) * torch.log1p(-x))
    return torch.where(included, per_pixel, torch.zeros_like(per_pixel)).sum(dim=(-2, -1))


def batch_loss(model: HeatmapDetector, images: torch.Tensor, labels: torch.Tensor,
               valid: torch.Tensor, border: int = 4) -> Tuple[torch.Tensor, torch.Tensor]:
    """Средняя по пачке потеря и потери отдельных образцов."""
    per_sample = bce_loss(model(images), labels, valid, border)
    return per_sample.mean(), per_sample


def backward(
    model: HeatmapDetector,
    images: torch.Tensor,
    labels: torch.Tensor,
    valid: torch.Tensor,
    border: int = 4
) -> Dict[str, torch.Tensor]:
    """
    Градиенты средней потери по всем параметрам (обратный проход autograd).

    Returns:
        Имя параметра → градиент
    """
    model.zero_grad(set_to_none=False)
    loss, _ = batch_loss(model, images, labels, valid, border)
    loss.backward()
    return {name: p.grad.detach().clone() for name, p in model.named_parameters() if p.grad is not None}


def make_optimizer(model: nn.Module, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps)


def adam_step(model: nn.Module, optimizer: torch.optim.Optimizer,
              grads: Optional[Dict[str, torch.Tensor]] = None) -> None:
    """
    Шаг Adam по текущим (или переданным) градиентам.

    Raises:
        TrainingError: Градиент содержит NaN или бесконечность
    """
    for name, param in model.named_parameters():
        if grads is not None:
            param.grad = grads[name].detach().clone().to(param.dtype) if name in grads else torch.zeros_like(param)
        if param.grad is None:
            param.grad = torch.zeros_like(param)
        if not torch.isfinite(param.grad).all():
            raise TrainingError(
                f"Non-finite gradient in {name}",
                code=ErrorCode.TRAINING_NON_FINITE_GRADIENT,
                parameter=name,
                context={"nan": int(torch.isnan(param.grad).sum()), "inf": int(torch.isinf(param.grad).sum())}
            )
    optimizer.step()


@dataclass
class TrainResult:
    """Итог обучения: средняя потеря каждой эпохи."""
    epoch_losses: List[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")


def _stack_labels(labels: Sequence[PseudoLabelMask]) -> Tuple[torch.Tensor, torch.Tensor]:
    mask = torch.as_tensor(np.stack([label.mask for label in labels]), dtype=torch.bool)
    valid = torch.as_tensor(np.stack([label.valid for label in labels]), dtype=torch.bool)
    return mask, valid


def train(
    dataset: Sequence[TrainingSample],
    model: HeatmapDetector,
    optimizer: torch.optim.Optimizer,
    cfg: TrainConfig,
    augment_cfg: AugmentConfig,
    seed: int,
    salt: Tuple[int, ...] = (),
    border: int = 4
) -> TrainResult:
    """
    Обучение детектора на парах (изображение, псевдо-разметка).

    Каждая эпоха перемешивает выборку потоком ``shuffle``, аугментирует
    образцы потоком ``augment`` и делает шаг Adam по средней потере пачки.

    Args:
        dataset: Обучающие пары
        model: Детектор (обучается на месте)
        optimizer: Adam для параметров модели
        cfg: Гиперпараметры обучения
        augment_cfg: Параметры аугментации
        seed: Корневой seed
        salt: Дополнительные соли потоков (например, EM-итерация)
        border: Исключаемая полоса у края

    Raises:
        TrainingError: Пустая выборка или нечисловая потеря (с индексом образца)
    """
    if not dataset:
        raise TrainingError("Training dataset is empty", code=ErrorCode.TRAINING_EMPTY_DATASET)

    dtype = next(model.parameters()).dtype
    result = TrainResult()
    model.train()
    for epoch in range(cfg.epochs):
        order = rng(seed, "shuffle", *salt, epoch).permutation(len(dataset))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            indices = [int(i) for i in order[start:start + cfg.batch_size]]
            images, labels = [], []
            for index in indices:
                image, label = dataset[index]
                generator = rng(seed, "augment", *salt, epoch, index)
                image, label = augment(image, label, augment_cfg, generator, border)
                images.append(image)
                labels.append(label)

            mask, valid = _stack_labels(labels)
            optimizer.zero_grad()
            loss, per_sample = batch_loss(model, to_tensor(images, dtype=dtype), mask, valid, border)
            finite = torch.isfinite(per_sample.detach())
            if not finite.all():
                bad = indices[int(torch.nonzero(~finite)[0, 0])]
                raise TrainingError(
                    f"Non-finite loss on sample {bad}",
                    code=ErrorCode.TRAINING_NON_FINITE_LOSS,
                    sample_index=bad,
                    epoch=epoch
                )
            loss.backward()
            adam_step(model, optimizer)
            total += float(per_sample.detach().sum())

        result.epoch_losses.append(total / len(dataset))
        logger.info(kv("train_epoch", epoch=epoch, samples=len(dataset), mean_loss=result.epoch_losses[-1]))
    return result
