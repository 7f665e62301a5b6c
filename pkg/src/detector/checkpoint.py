"""
Бинарный формат чекпоинта детектора.

Раскладка (little-endian)::

    8 байт   magic "SEDMCKPT"
    uint32   версия формата
    uint32   длина дескриптора архитектуры, затем дескриптор (utf-8)
    uint32   число завершенных EM-итераций
    uint64   число значений состояния модели, затем float32-блоб
             (параметры и статистики BatchNorm в порядке state_dict)
    uint64   шаг Adam
    uint8    1, если далее идут моменты Adam
    float32  первые моменты, затем вторые (в порядке параметров)

Запись атомарная: временный файл и os.replace.
"""

import os
import struct
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import torch

from ..utils.exceptions import CheckpointError, ErrorCode
from ..utils.logger import get_logger, kv
from .network import ARCHITECTURE, HeatmapDetector

logger = get_logger(__name__)

MAGIC = b"SEDMCKPT"
VERSION = 1

PathLike = Union[str, Path]


def _state_tensors(model: HeatmapDetector) -> List[torch.Tensor]:
    """Тензоры состояния модели кроме счетчиков num_batches_tracked."""
    return [t for name, t in model.state_dict().items() if not name.endswith("num_batches_tracked")]


def _flat(tensors: List[torch.Tensor]) -> bytes:
    if not tensors:
        return b""
    return np.concatenate([t.detach().cpu().reshape(-1).numpy().astype("<f4") for t in tensors]).tobytes()


def save_checkpoint(
    path: PathLike,
    model: HeatmapDetector,
    optimizer: Optional[torch.optim.Optimizer] = None,
    iteration: int = 0
) -> None:
    """Атомарная запись чекпоинта."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    arch = ARCHITECTURE.encode("utf-8")
    state = _state_tensors(model)
    n_values = sum(t.numel() for t in state)

    params = list(model.parameters())
    adam = [optimizer.state.get(p, {}) for p in params] if optimizer is not None else []
    has_adam = bool(adam) and all("exp_avg" in s for s in adam)
    step = int(float(adam[0]["step"])) if has_adam else 0

    chunks = [
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<I", len(arch)), arch,
        struct.pack("<I", iteration),
        struct.pack("<Q", n_values), _flat(state),
        struct.pack("<Q", step),
        struct.pack("<B", 1 if has_adam else 0),
    ]
    if has_adam:
        chunks.append(_flat([s["exp_avg"] for s in adam]))
        chunks.append(_flat([s["exp_avg_sq"] for s in adam]))

    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(b"".join(chunks))
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)
    logger.debug(kv("checkpoint_saved", path=str(path), iteration=iteration, adam_step=step))


class _Reader:
    def __init__(self, data: bytes, path: str) -> None:
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(
                f"Checkpoint {self.path} is truncated",
                code=ErrorCode.CHECKPOINT_TRUNCATED,
                path=self.path,
                context={"needed": self.offset + size, "size": len(self.data)}
            )
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> int:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<f4")


def _assign(tensors: List[torch.Tensor], values: np.ndarray) -> None:
    offset = 0
    for t in tensors:
        n = t.numel()
        t.copy_(torch.from_numpy(values[offset:offset + n].copy()).reshape(t.shape).to(t.dtype))
        offset += n


def load_checkpoint(
    path: PathLike,
    model: Optional[HeatmapDetector] = None,
    optimizer: Optional[torch.optim.Optimizer] = None
) -> int:
    """
    Загрузка чекпоинта в модель (и оптимизатор) на месте.

    Returns:
        Число завершенных EM-итераций

    Raises:
        CheckpointError: Неверная сигнатура, другая архитектура или обрезанный файл
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}", code=ErrorCode.CHECKPOINT_TRUNCATED, path=str(path))
    reader = _Reader(path.read_bytes(), str(path))

    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path} is not a detector checkpoint", code=ErrorCode.CHECKPOINT_BAD_MAGIC, path=str(path))
    version = reader.unpack("<I")
    if version != VERSION:
        raise CheckpointError(
            f"Unsupported checkpoint version {version}",
            code=ErrorCode.CHECKPOINT_BAD_MAGIC,
            path=str(path)
        )
    arch = reader.take(reader.unpack("<I")).decode("utf-8", errors="replace")
    if arch != ARCHITECTURE:
        raise CheckpointError(
            "Checkpoint architecture does not match the detector",
            code=ErrorCode.CHECKPOINT_ARCH_MISMATCH,
            path=str(path),
            context={"checkpoint": arch, "expected": ARCHITECTURE}
        )
    iteration = reader.unpack("<I")

    model = model if model is not None else HeatmapDetector()
    state = _state_tensors(model)
    n_values = reader.unpack("<Q")
    expected = sum(t.numel() for t in state)
    if n_values != expected:
        raise CheckpointError(
            f"Checkpoint holds {n_values} values, detector has {expected}",
            code=ErrorCode.CHECKPOINT_ARCH_MISMATCH,
            path=str(path)
        )
    values = reader.floats(n_values)
    step = reader.unpack("<Q")
    has_adam = reader.unpack("<B") == 1

    params = list(model.parameters())
    n_params = sum(p.numel() for p in params)
    moments = (reader.floats(n_params), reader.floats(n_params)) if has_adam else None
    if reader.offset != len(reader.data):
        raise CheckpointError(
            f"Checkpoint {path} has {len(reader.data) - reader.offset} trailing bytes",
            code=ErrorCode.CHECKPOINT_TRUNCATED,
            path=str(path)
        )

    with torch.no_grad():
        _assign(state, values)

    if optimizer is not None:
        optimizer.state.clear()
        if moments is not None:
            offset = 0
            for p in params:
                n = p.numel()
                optimizer.state[p] = {
                    "step": torch.tensor(float(step)),
                    "exp_avg": torch.from_numpy(moments[0][offset:offset + n].copy()).reshape(p.shape).to(p.dtype),
                    "exp_avg_sq": torch.from_numpy(moments[1][offset:offset + n].copy()).reshape(p.shape).to(p.dtype),
                }
                offset += n

    logger.debug(kv("checkpoint_loaded", path=str(path), iteration=iteration, adam_step=step))
    return iteration
