"""
Менеджер конфигурации SEDM.

Приоритет источников: значения по умолчанию < файл конфигурации < окружение
(.env) < флаги командной строки.
"""

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from dotenv import load_dotenv

from ..utils.exceptions import ConfigError, ErrorCode


@dataclass
class DataConfig:
    """Датасеты и параметры генерации сцен."""
    scenes: List[str] = field(default_factory=list)
    n_scenes: int = 4
    n_views: int = 30
    width: int = 128
    height: int = 128
    fov_deg: float = 60.0
    complexity: str = "small"
    n_lightings: int = 4
    coverage_target: float = 0.8


@dataclass
class GridConfig:
    """Воксельная сетка шага ожидания."""
    extent: float = 0.005
    min_views: int = 3
    margin: float = 0.05


@dataclass
class MaximizerConfig:
    """Ограничения псевдо-разметки."""
    L: int = 107
    r_nms: float = 6.0
    cell: int = 8
    border: int = 4
    edge_filter_on: bool = True
    score_floor: float = 0.0
    edge_sigma: float = 1.5
    edge_k: float = 0.06


@dataclass
class ScheduleConfig:
    """Расписание EM-итераций и отжиг L."""
    n_iterations: int = 3
    L_schedule: List[int] = field(default_factory=lambda: [107, 91, 64])
    period: int = 3
    warm_start: bool = True


@dataclass
class TrainConfig:
    """Гиперпараметры обучения детектора."""
    epochs: int = 40
    batch_size: int = 8
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    bn_momentum: float = 0.9


@dataclass
class AugmentConfig:
    """Аугментации обучающих пар."""
    enabled: bool = True
    blur_prob: float = 0.3
    blur_sigma_max: float = 1.0
    noise_prob: float = 0.3
    noise_std_max: float = 0.02
    brightness_max: float = 0.1
    contrast_min: float = 0.8
    contrast_max: float = 1.2
    warp_prob: float = 0.5
    max_rotation_deg: float = 10.0
    max_scale: float = 0.1
    max_shift_px: float = 4.0
    max_perspective: float = 3e-4


@dataclass
class EvalConfig:
    """Протоколы оценки."""
    threshold: float = 0.025
    r_nms: float = 3.0
    cell: int = 8
    border: int = 4
    eps_px: float = 3.0
    max_threshold_px: int = 10
    patch: int = 13
    max_pairs_per_scene: int = 10
    n_scenes: int = 2
    n_views: int = 8
    rotation_deg: float = 10.0

    @property
    def keypoint_border(self) -> int:
        """Полоса исключения точек: не уже половины патча дескриптора."""
        return max(self.border, self.patch // 2)


@dataclass
class RuntimeConfig:
    """Запуск: seed, каталог результатов, логирование и потоки."""
    seed: int = 0
    out_dir: str = "runs/sedm"
    threads: int = 0
    log_level: str = "INFO"
    log_file: str = ""

    @property
    def workers(self) -> int:
        """Число рабочих потоков (0 — по числу ядер)."""
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)


@dataclass
class EmConfig:
    """Полная конфигурация запуска."""
    data: DataConfig = field(default_factory=DataConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    maximizer: MaximizerConfig = field(default_factory=MaximizerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)


SECTIONS: Tuple[str, ...] = tuple(f.name for f in dataclasses.fields(EmConfig))

ENV_OVERRIDES = {
    "SEDM_LOG_LEVEL": "runtime.log_level",
    "SEDM_LOG_FILE": "runtime.log_file",
    "SEDM_THREADS": "runtime.threads",
}

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _parse_value(raw: Any, default: Any) -> Any:
    """Приведение строки к типу значения по умолчанию."""
    if not isinstance(raw, str):
        if isinstance(default, list) and not isinstance(raw, list):
            return [raw]
        return raw
    text = raw.strip()
    if isinstance(default, bool):
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, list):
        items = [item.strip() for item in text.split(",") if item.strip()]
        if default and isinstance(default[0], int):
            return [int(item) for item in items]
        return items
    return text


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class ConfigManager:
    """Менеджер конфигурации."""

    def __init__(self, config_file: Optional[str] = None, env_file: Optional[str] = None) -> None:
        """
        Инициализация менеджера конфигурации.

        Args:
            config_file: Путь к файлу конфигурации (секции [data], [grid], ...)
            env_file: Путь к файлу .env (по умолчанию .env)

        Raises:
            ConfigError: Если файл не найден или не разбирается
        """
        load_dotenv(env_file)
        self.config_file = config_file
        self._file_values: Dict[str, Dict[str, str]] = {}
        if config_file:
            self._file_values = self._read_file(config_file)

    @staticmethod
    def _read_file(config_file: str) -> Dict[str, Dict[str, str]]:
        """Чтение файла конфигурации."""
        if not Path(config_file).is_file():
            raise ConfigError(
                f"Config file not found: {config_file}",
                code=ErrorCode.CONFIG_FILE_NOT_FOUND,
                context={"path": config_file}
            )
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # type: ignore[assignment,method-assign]
        try:
            parser.read(config_file, encoding="utf-8")
        except configparser.Error as e:
            raise ConfigError(
                f"Cannot parse config file {config_file}: {e}",
                code=ErrorCode.CONFIG_PARSE_ERROR,
                original_error=e
            )

        unknown = [s for s in parser.sections() if s not in SECTIONS]
        if unknown:
            raise ConfigError(
                f"Unknown config sections: {', '.join(unknown)}",
                code=ErrorCode.CONFIG_PARSE_ERROR,
                invalid_values={s: "unknown section" for s in unknown}
            )
        return {section: dict(parser.items(section)) for section in parser.sections()}

    @staticmethod
    def _env_values() -> Dict[str, str]:
        """Переопределения из переменных окружения."""
        return {key: os.environ[var] for var, key in ENV_OVERRIDES.items() if os.getenv(var)}

    def get_em_config(self, overrides: Optional[Mapping[str, Any]] = None) -> EmConfig:
        """
        Получение полной конфигурации.

        Args:
            overrides: Значения флагов CLI в виде ``{"section.key": value}``;
                значения None пропускаются

        Returns:
            EmConfig с примененными источниками

        Raises:
            ConfigError: Неизвестный ключ или неразбираемое значение
        """
        config = EmConfig()
        for section, values in self._file_values.items():
            for key, value in values.items():
                self._apply(config, f"{section}.{key}", value)
        for dotted, value in self._env_values().items():
            self._apply(config, dotted, value)
        for dotted, value in (overrides or {}).items():
            if value is not None:
                self._apply(config, dotted, value)
        return config

    @staticmethod
    def _apply(config: EmConfig, dotted: str, value: Any) -> None:
        section_name, _, key = dotted.partition(".")
        section = getattr(config, section_name, None)
        if section is None or section_name not in SECTIONS or not hasattr(section, key):
            raise ConfigError(
                f"Unknown config key: {dotted}",
                code=ErrorCode.CONFIG_PARSE_ERROR,
                invalid_values={dotted: "unknown key"}
            )
        try:
            parsed = _parse_value(value, getattr(section, key))
        except ValueError as e:
            raise ConfigError(
                f"Cannot parse {dotted} = {value!r}",
                code=ErrorCode.CONFIG_PARSE_ERROR,
                invalid_values={dotted: str(value)},
                original_error=e
            )
        setattr(section, key, parsed)

    def validate(self, config: EmConfig, require_scenes: bool = False) -> None:
        """
        Проверка инвариантов конфигурации.

        Args:
            config: Конфигурация
            require_scenes: Требовать существующие каталоги сцен (для train/inspect)

        Raises:
            ConfigError: При нарушении инвариантов
        """
        checks = [
            ("schedule.n_iterations", config.schedule.n_iterations >= 1, ">= 1"),
            ("schedule.L_schedule", bool(config.schedule.L_schedule) and min(config.schedule.L_schedule) >= 1,
             "non-empty, every L >= 1"),
            ("schedule.period", config.schedule.period >= 1, ">= 1"),
            ("maximizer.L", config.maximizer.L >= 1, ">= 1"),
            ("maximizer.r_nms", config.maximizer.r_nms >= 1, ">= 1"),
            ("maximizer.cell", config.maximizer.cell >= 1, ">= 1"),
            ("maximizer.border", config.maximizer.border >= 0, ">= 0"),
            ("maximizer.edge_sigma", config.maximizer.edge_sigma > 0, "> 0"),
            ("grid.extent", config.grid.extent > 0, "> 0"),
            ("grid.min_views", config.grid.min_views >= 1, ">= 1"),
            ("grid.margin", config.grid.margin >= 0, ">= 0"),
            ("train.epochs", config.train.epochs >= 1, ">= 1"),
            ("train.batch_size", config.train.batch_size >= 1, ">= 1"),
            ("train.lr", config.train.lr > 0, "> 0"),
            ("train.bn_momentum", 0 <= config.train.bn_momentum < 1, "[0, 1)"),
            ("data.n_views", config.data.n_views >= 2, ">= 2"),
            ("data.n_scenes", config.data.n_scenes >= 1, ">= 1"),
            ("data.width", config.data.width > 0 and config.data.width % 8 == 0, "positive multiple of 8"),
            ("data.height", config.data.height > 0 and config.data.height % 8 == 0, "positive multiple of 8"),
            ("data.complexity", config.data.complexity in ("small", "medium"), "small | medium"),
            ("data.coverage_target", 0 <= config.data.coverage_target <= 1, "[0, 1]"),
            ("eval.threshold", 0 <= config.eval.threshold <= 1, "[0, 1]"),
            ("eval.r_nms", config.eval.r_nms >= 1, ">= 1"),
            ("eval.patch", config.eval.patch >= 3 and config.eval.patch % 2 == 1, "odd, >= 3"),
            ("eval.max_threshold_px", config.eval.max_threshold_px >= 1, ">= 1"),
            ("runtime.seed", config.runtime.seed >= 0, ">= 0"),
            ("runtime.threads", config.runtime.threads >= 0, ">= 0"),
            ("runtime.log_level", config.runtime.log_level.upper() in LOG_LEVELS, " | ".join(LOG_LEVELS)),
        ]
        invalid = {key: f"expected {expected}" for key, ok, expected in checks if not ok}
        if invalid:
            raise ConfigError(
                f"Invalid configuration: {', '.join(invalid)}",
                code=ErrorCode.CONFIG_INVALID_VALUE,
                invalid_values=invalid
            )

        if require_scenes:
            if not config.data.scenes:
                raise ConfigError(
                    "No training scenes configured",
                    code=ErrorCode.CONFIG_MISSING_VALUE,
                    missing_vars=["data.scenes"]
                )
            missing = [p for p in config.data.scenes if not Path(p).is_dir()]
            if missing:
                raise ConfigError(
                    f"Scene directories not found: {', '.join(missing)}",
                    code=ErrorCode.CONFIG_INVALID_VALUE,
                    invalid_values={p: "directory not found" for p in missing}
                )

    @staticmethod
    def dump(config: EmConfig) -> str:
        """Полностью разрешенная конфигурация в формате файла конфигурации."""
        lines: List[str] = []
        for section_name in SECTIONS:
            section = getattr(config, section_name)
            lines.append(f"[{section_name}]")
            for f in dataclasses.fields(section):
                lines.append(f"{f.name} = {_format_value(getattr(section, f.name))}")
            lines.append("")
        return "\n".join(lines)
