"""
Каталоги датасетов: позы, 8-битные изображения и float32-глубина.

Раскладка каталога::

    poses.txt           позы (формат geometry.write_poses)
    img_00000.pgm       бинарный PGM, maxval 255
    depth_00000.raw     строка "W H", затем W·H float32 little-endian (row-major)
    scene.txt           метаданные генерации (необязательно)
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..geometry.camera import CameraView, Intrinsics, read_poses, write_poses
from ..utils.exceptions import DatasetError, ErrorCode
from ..utils.logger import get_logger, kv
from ..utils.pgm import read_pgm, write_pgm
from ..utils.seeding import derive_seed
from .generator import generate_scene, generate_trajectory
from .models import Complexity
from .renderer import render

logger = get_logger(__name__)

PathLike = Union[str, Path]

POSES_FILE = "poses.txt"
META_FILE = "scene.txt"
IMAGE_PATTERN = "img_%05d.pgm"
DEPTH_PATTERN = "depth_%05d.raw"
SCENE_DIR_PATTERN = "scene_%03d"


def write_depth(path: PathLike, depth: np.ndarray) -> None:
    """Запись карты глубины в raw-формат."""
    depth = np.asarray(depth)
    height, width = depth.shape
    with open(path, "wb") as f:
        f.write(f"{width} {height}\n".encode("ascii"))
        f.write(depth.astype("<f4").tobytes(order="C"))


def read_depth(path: PathLike) -> np.ndarray:
    """
    Чтение карты глубины.

    Raises:
        DatasetError: Файл отсутствует, заголовок испорчен или данные обрезаны
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"Depth file not found: {path}", code=ErrorCode.DATASET_MISSING_FILE, path=str(path))

    raw = path.read_bytes()
    newline = raw.find(b"\n")
    try:
        if newline < 0:
            raise ValueError("missing header line")
        width, height = (int(v) for v in raw[:newline].decode("ascii").split())
        if width <= 0 or height <= 0:
            raise ValueError(f"bad size {width}x{height}")
    except ValueError as e:
        raise DatasetError(
            f"Malformed depth header in {path}: {e}",
            code=ErrorCode.DATASET_MALFORMED_HEADER,
            path=str(path),
            original_error=e
        )

    payload = raw[newline + 1:]
    expected = width * height * 4
    if len(payload) != expected:
        raise DatasetError(
            f"Depth file {path} holds {len(payload)} bytes, header declares {expected}",
            code=ErrorCode.DATASET_MALFORMED_HEADER,
            path=str(path),
            context={"width": width, "height": height}
        )
    return np.frombuffer(payload, dtype="<f4").reshape(height, width).astype(np.float32)


def save_dataset(path: PathLike, views: Sequence[CameraView]) -> None:
    """Сохранение ракурсов в каталог датасета."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    write_poses(root / POSES_FILE, [(i, view.intrinsics, view.pose) for i, view in enumerate(views)])
    for i, view in enumerate(views):
        write_pgm(root / (IMAGE_PATTERN % i), view.image)
        write_depth(root / (DEPTH_PATTERN % i), view.depth)
    logger.debug(kv("dataset_saved", path=str(root), views=len(views)))


def load_dataset(path: PathLike) -> List[CameraView]:
    """
    Загрузка каталога датасета.

    Raises:
        DatasetError: Отсутствующие файлы, испорченные заголовки или
            несовпадение размеров изображения и глубины
    """
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"Dataset directory not found: {root}", code=ErrorCode.DATASET_MISSING_FILE, path=str(root))

    views = []
    for view_id, (fx, fy, cx, cy), pose in read_poses(root / POSES_FILE):
        image = read_pgm(root / (IMAGE_PATTERN % view_id))
        depth = read_depth(root / (DEPTH_PATTERN % view_id))
        if image.shape != depth.shape:
            raise DatasetError(
                f"View {view_id}: image {image.shape} and depth {depth.shape} differ",
                code=ErrorCode.DATASET_DIMENSION_MISMATCH,
                path=str(root)
            )
        height, width = image.shape
        intrinsics = Intrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)
        views.append(CameraView(intrinsics=intrinsics, pose=pose, image=image, depth=depth))

    if not views:
        raise DatasetError(f"Dataset {root} contains no views", code=ErrorCode.DATASET_MISSING_FILE, path=str(root))
    return views


def write_metadata(path: PathLike, fields: Dict[str, object]) -> None:
    """Запись ``scene.txt`` в виде строк ``key = value``."""
    lines = [f"{key} = {value}" for key, value in fields.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_metadata(path: PathLike) -> Dict[str, str]:
    """Чтение ``scene.txt``; пустой словарь, если файла нет."""
    path = Path(path)
    if not path.is_file():
        return {}
    result = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            result[key.strip()] = value.strip()
    return result


@dataclass
class DatasetBuildResult:
    """Итог генерации одной сцены."""
    path: Path
    n_views: int
    coverage: float


def build_dataset(
    out_dir: PathLike,
    seed: int,
    n_scenes: int,
    n_views: int,
    complexity: Union[str, Complexity] = Complexity.SMALL,
    intrinsics: Optional[Intrinsics] = None,
    extent: float = 0.005,
    min_views: int = 3,
    coverage_target: float = 0.8,
    n_lightings: int = 4,
    threads: Optional[int] = None
) -> List[DatasetBuildResult]:
    """
    Генерация набора сцен и запись каталогов ``scene_%03d``.

    Сцены и траектории получают производные seed по индексу сцены;
    ракурсы одной сцены рендерятся параллельно (не более ``threads`` потоков).

    Returns:
        Результаты по сценам в порядке индексов
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    intrinsics = intrinsics or Intrinsics.from_fov(128, 128, 60.0)
    complexity = Complexity(complexity)
    workers = threads or os.cpu_count() or 1

    results = []
    for index in range(n_scenes):
        scene_seed = derive_seed(seed, "scene", index)
        scene = generate_scene(scene_seed, complexity, n_lightings=n_lightings)
        trajectory = generate_trajectory(
            scene,
            n_views,
            derive_seed(seed, "trajectory", index),
            intrinsics=intrinsics,
            extent=extent,
            min_views=min_views,
            coverage_target=coverage_target
        )

        with ThreadPoolExecutor(max_workers=workers) as pool:
            views = list(pool.map(
                lambda item: render(scene, item[0], item[1]),
                zip(trajectory.views, trajectory.lighting_per_view)
            ))

        scene_dir = root / (SCENE_DIR_PATTERN % index)
        save_dataset(scene_dir, views)
        write_metadata(scene_dir / META_FILE, {
            "seed": seed,
            "scene_index": index,
            "scene_seed": scene_seed,
            "complexity": complexity.value,
            "triangles": len(scene.triangles),
            "lights": len(scene.lights),
            "n_lightings": scene.n_lightings,
            "n_views": len(views),
            "coverage": f"{trajectory.coverage:.6f}",
            "lighting_per_view": ",".join(str(i) for i in trajectory.lighting_per_view),
        })
        logger.info(kv(
            "scene_generated",
            index=index,
            path=str(scene_dir),
            triangles=len(scene.triangles),
            views=len(views),
            coverage=trajectory.coverage
        ))
        results.append(DatasetBuildResult(path=scene_dir, n_views=len(views), coverage=trajectory.coverage))
    return results


def find_scene_dirs(root: PathLike) -> List[Path]:
    """Каталоги сцен: сам ``root``, если в нем есть poses.txt, иначе его подкаталоги с poses.txt."""
    root = Path(root)
    if (root / POSES_FILE).is_file():
        return [root]
    if not root.is_dir():
        raise DatasetError(f"Dataset directory not found: {root}", code=ErrorCode.DATASET_MISSING_FILE, path=str(root))
    return sorted(p for p in root.iterdir() if (p / POSES_FILE).is_file())
