"""
Утилиты логирования для SEDM.

Строки лога имеют вид ``LEVEL ts=... logger=... event=... key=value``.
"""

import logging
import logging.handlers
import sys
from pathlib import Path
from typing import Any, Optional

LOG_FORMAT = '%(levelname)s ts=%(asctime)s logger=%(name)s %(message)s'


def setup_logger(
    name: str,
    log_file: Optional[str] = None,
    log_level: str = "INFO",
    max_bytes: int = 10 * 1024 * 1024,
    backup_count: int = 5
) -> logging.Logger:
    """Настройка логгера с ротацией файлов."""
    logger = logging.getLogger(name)
    logger.handlers.clear()
    logger.setLevel(getattr(logging, log_level.upper()))

    formatter = logging.Formatter(LOG_FORMAT)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)

        file_handler = logging.handlers.RotatingFileHandler(
            log_file,
            maxBytes=max_bytes,
            backupCount=backup_count,
            encoding='utf-8'
        )
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def get_logger(name: str) -> logging.Logger:
    """Получение логгера по имени."""
    return logging.getLogger(name)


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    text = str(value)
    if " " in text or not text:
        return f"\"{text}\""
    return text


def kv(event: str, **fields: Any) -> str:
    """Форматирование события в виде пар key=value (порядок аргументов сохраняется)."""
    parts = [f"event={event}"]
    parts.extend(f"{key}={_format_value(value)}" for key, value in fields.items())
    return " ".join(parts)
