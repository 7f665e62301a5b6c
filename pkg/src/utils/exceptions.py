"""
Исключения SEDM: код ошибки, контекст и исходное исключение.
"""

import logging
from collections import Counter
from enum import Enum
from typing import Any, Dict, List, Optional


class ErrorCode(Enum):
    """Коды ошибок для категоризации проблем."""

    # Конфигурация (1000-1099)
    CONFIG_MISSING_VALUE = 1001
    CONFIG_INVALID_VALUE = 1002
    CONFIG_FILE_NOT_FOUND = 1003
    CONFIG_PARSE_ERROR = 1004

    # Геометрия камеры (1100-1199)
    GEOMETRY_INVALID_DEPTH = 1101
    GEOMETRY_DEGENERATE_WARP = 1102
    GEOMETRY_INVALID_CAMERA = 1103

    # Датасеты и сцены (1200-1299)
    DATASET_MISSING_FILE = 1201
    DATASET_MALFORMED_HEADER = 1202
    DATASET_DIMENSION_MISMATCH = 1203
    SCENE_COVERAGE_UNREACHABLE = 1204
    SCENE_INVALID = 1205

    # Воксели (1300-1399)
    VOXEL_DIMENSION_MISMATCH = 1301
    VOXEL_SCORE_OUT_OF_RANGE = 1302

    # Детектор и обучение (1400-1499)
    TRAINING_SHAPE_ERROR = 1401
    TRAINING_EMPTY_DATASET = 1402
    TRAINING_NON_FINITE_LOSS = 1403
    TRAINING_NON_FINITE_GRADIENT = 1404

    # Чекпоинты (1500-1599)
    CHECKPOINT_BAD_MAGIC = 1501
    CHECKPOINT_ARCH_MISMATCH = 1502
    CHECKPOINT_TRUNCATED = 1503

    # EM-цикл (1600-1699)
    PIPELINE_STAGE_FAILED = 1601

    # Валидация (1700-1799)
    VALIDATION_INVALID_DATA = 1701
    VALIDATION_RANGE_ERROR = 1702

    # Командная строка (1800-1899)
    USAGE_ERROR = 1801

    UNKNOWN_ERROR = 1999


class SedmError(Exception):
    """
    Базовый класс исключений SEDM.

    Именованные поля конструктора (path, field_name, view_index, ...) со
    значением не None попадают в ``context``. Подклассы задают код по
    умолчанию и уровень лога.

    Attributes:
        code: Код ошибки из ErrorCode
        context: Контекст ошибки (путь, поле, индекс ракурса, стадия)
        original_error: Исходное исключение (если есть)
    """

    default_code = ErrorCode.UNKNOWN_ERROR
    log_level = logging.ERROR

    def __init__(
        self,
        message: str,
        code: Optional[ErrorCode] = None,
        context: Optional[Dict[str, Any]] = None,
        original_error: Optional[Exception] = None,
        **fields: Any
    ):
        super().__init__(message)
        self.code = code or self.default_code
        self.context = dict(context or {})
        self.context.update({key: value for key, value in fields.items() if value is not None})
        self.original_error = original_error

    def to_dict(self) -> Dict[str, Any]:
        """Преобразование исключения в словарь для логирования."""
        return {
            'error_type': self.__class__.__name__,
            'message': str(self),
            'code': self.code.value,
            'code_name': self.code.name,
            'context': self.context,
            'original_error': str(self.original_error) if self.original_error else None
        }

    def log_error(self, logger: logging.Logger) -> None:
        """Запись ошибки в лог на уровне класса."""
        logger.log(
            self.log_level,
            f"event=error code={self.code.name} message=\"{super().__str__()}\"",
            extra={'error_details': self.to_dict()}
        )

    def get_user_message(self) -> str:
        """Сообщение для stderr: текст, код и контекст."""
        message = str(self)
        if self.context:
            message += "\ncontext: " + " ".join(f"{k}={v}" for k, v in self.context.items())
        return message

    def __str__(self) -> str:
        return f"{super().__str__()} [Code: {self.code.value}]"


class ConfigError(SedmError):
    """Ошибки конфигурации (поля missing_vars, invalid_values)."""
    default_code = ErrorCode.CONFIG_INVALID_VALUE


class ValidationError(SedmError):
    """Нарушение условия на входные данные (поля field_name, invalid_value, expected)."""
    default_code = ErrorCode.VALIDATION_INVALID_DATA
    log_level = logging.WARNING


class GeometryError(SedmError):
    """Невалидная глубина или вырожденная гомография."""
    default_code = ErrorCode.GEOMETRY_INVALID_DEPTH
    log_level = logging.WARNING


class DatasetError(SedmError):
    """Ошибки чтения и записи датасетов (поле path)."""
    default_code = ErrorCode.DATASET_MISSING_FILE


class SceneError(SedmError):
    """Ошибки генерации сцен и траекторий (поля coverage, attempts)."""
    default_code = ErrorCode.SCENE_COVERAGE_UNREACHABLE


class VoxelError(SedmError):
    """Ошибки накопления в воксельной сетке (поле view_index)."""
    default_code = ErrorCode.VOXEL_DIMENSION_MISMATCH


class TrainingError(SedmError):
    """Ошибки обучения детектора (поля sample_index, parameter, epoch)."""
    default_code = ErrorCode.TRAINING_NON_FINITE_LOSS


class CheckpointError(SedmError):
    """Ошибки чтения чекпоинтов (поле path)."""
    default_code = ErrorCode.CHECKPOINT_TRUNCATED


class PipelineError(SedmError):
    """Сбой стадии EM-итерации; предыдущий чекпоинт остается валидным."""

    default_code = ErrorCode.PIPELINE_STAGE_FAILED
    log_level = logging.CRITICAL

    def __init__(self, message: str, stage: str, iteration: Optional[int] = None,
                 scene: Optional[str] = None, **kwargs: Any):
        """
        Args:
            message: Сообщение об ошибке
            stage: Имя стадии (inference, accumulate, render, maximize, train, evaluate, checkpoint)
            iteration: Номер EM-итерации
            scene: Путь к сцене
        """
        self.stage = stage
        super().__init__(f"[{stage}] {message}", stage=stage, iteration=iteration, scene=scene, **kwargs)


class UsageError(SedmError):
    """Ошибки использования командной строки."""
    default_code = ErrorCode.USAGE_ERROR
    log_level = logging.INFO


def handle_exception(
    error: Exception,
    logger: logging.Logger,
    context: Optional[Dict[str, Any]] = None
) -> SedmError:
    """
    Непредвиденное исключение как SedmError(UNKNOWN_ERROR), записанное в лог.

    SedmError возвращается без изменений.
    """
    converted = error if isinstance(error, SedmError) else SedmError(
        f"{type(error).__name__}: {error}", context=context, original_error=error
    )
    converted.log_error(logger)
    return converted


def create_error_summary(errors: List[SedmError]) -> Dict[str, Any]:
    """Число ошибок всего и по кодам."""
    return {"total": len(errors), "by_code": dict(Counter(error.code.name for error in errors))}
