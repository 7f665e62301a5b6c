"""
Чтение и запись 8-битных PGM-изображений.
"""

from pathlib import Path
from typing import Union

import cv2
import numpy as np

from .exceptions import DatasetError, ErrorCode

PathLike = Union[str, Path]


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Квантование значений [0,1] в 8 бит с округлением до ближайшего."""
    return np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path: PathLike, values: np.ndarray) -> None:
    """Запись карты значений [0,1] (или маски) как бинарного PGM с maxval 255."""
    array = np.asarray(values)
    if array.dtype == np.bool_:
        data = np.where(array, 255, 0).astype(np.uint8)
    elif array.dtype == np.uint8:
        data = array
    else:
        data = to_uint8(array)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), data):
        raise DatasetError(f"Failed to write PGM image {path}", code=ErrorCode.DATASET_MISSING_FILE, path=str(path))


def read_pgm(path: PathLike) -> np.ndarray:
    """Чтение PGM в массив float64 из [0,1]."""
    if not Path(path).is_file():
        raise DatasetError(f"Image file not found: {path}", code=ErrorCode.DATASET_MISSING_FILE, path=str(path))
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if data is None or data.ndim != 2 or data.dtype != np.uint8:
        raise DatasetError(
            f"Malformed PGM image {path}",
            code=ErrorCode.DATASET_MALFORMED_HEADER,
            path=str(path)
        )
    return data.astype(np.float64) / 255.0
