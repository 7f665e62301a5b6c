"""Модуль конфигурации."""

from .config_manager import (
    AugmentConfig,
    ConfigManager,
    DataConfig,
    EmConfig,
    EvalConfig,
    GridConfig,
    MaximizerConfig,
    RuntimeConfig,
    ScheduleConfig,
    TrainConfig
)

__all__ = [
    "AugmentConfig",
    "ConfigManager",
    "DataConfig",
    "EmConfig",
    "EvalConfig",
    "GridConfig",
    "MaximizerConfig",
    "RuntimeConfig",
    "ScheduleConfig",
    "TrainConfig"
]
