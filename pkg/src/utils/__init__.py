"""Утилиты и вспомогательные функции."""

from .exceptions import (
    SedmError,
    ErrorCode,
    ConfigError,
    ValidationError,
    GeometryError,
    DatasetError,
    SceneError,
    VoxelError,
    TrainingError,
    CheckpointError,
    PipelineError,
    UsageError,
    handle_exception,
    create_error_summary
)
from .logger import setup_logger, get_logger, kv

__all__ = [
    "SedmError",
    "ErrorCode",
    "ConfigError",
    "ValidationError",
    "GeometryError",
    "DatasetError",
    "SceneError",
    "VoxelError",
    "TrainingError",
    "CheckpointError",
    "PipelineError",
    "UsageError",
    "handle_exception",
    "create_error_summary",
    "setup_logger",
    "get_logger",
    "kv"
]
