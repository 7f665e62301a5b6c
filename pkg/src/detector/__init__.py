"""
Обучаемый детектор тепловых карт: сеть, функция потерь, Adam, аугментации, чекпоинты.
"""

from .augment import AugmentParams, apply_augmentation, augment, random_homography, sample_augmentation, warp_label
from .checkpoint import load_checkpoint, save_checkpoint
from .network import ARCHITECTURE, CELL, HeatmapDetector, init_detector, predict_heatmaps, to_tensor
from .training import (
    TrainResult,
    adam_step,
    backward,
    batch_loss,
    bce_loss,
    loss_mask,
    make_optimizer,
    train,
)

__all__ = [
    'ARCHITECTURE',
    'CELL',
    'HeatmapDetector',
    'init_detector',
    'predict_heatmaps',
    'to_tensor',
    'TrainResult',
    'adam_step',
    'backward',
    'batch_loss',
    'bce_loss',
    'loss_mask',
    'make_optimizer',
    'train',
    'AugmentParams',
    'apply_augmentation',
    'augment',
    'random_homography',
    'sample_augmentation',
    'warp_label',
    'load_checkpoint',
    'save_checkpoint',
]
