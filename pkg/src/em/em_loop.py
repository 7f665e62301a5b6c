"""
EM-цикл обучения детектора.

Одна итерация: инференс на всех ракурсах → накопление оценок в вокселях →
рендер мягкой повторяемости → псевдо-разметка → обучение детектора.
После каждой итерации пишутся чекпоинт ``iter_%03d.ckpt`` и строка
``metrics.csv``.
"""

import contextlib
import csv
import dataclasses
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..config.config_manager import ConfigManager, EmConfig
from ..detector.checkpoint import load_checkpoint, save_checkpoint
from ..detector.network import init_detector, predict_heatmaps
from ..detector.training import TrainingSample, make_optimizer, train
from ..evaluation.keypoints import DetectorExtractor, KeypointSource
from ..evaluation.protocols import multiview_repeatability
from ..geometry.camera import GridSpec
from ..maximizer.pseudo_gt import PseudoLabelMask, anneal_L, build_pseudo_gt, validate_pseudo_label
from ..scene.dataset_io import find_scene_dirs, load_dataset
from ..scene.generator import surface_points
from ..utils.exceptions import DatasetError, ErrorCode, PipelineError, ValidationError
from ..utils.logger import get_logger, kv
from ..voxels.voxel_grid import RepeatabilityMap, accumulate, render_repeatability
from .models import METRIC_COLUMNS, EmState, IterationMetrics, SceneData

logger = get_logger(__name__)

CHECKPOINT_PATTERN = "iter_%03d.ckpt"
CHECKPOINT_RE = re.compile(r"^iter_(\d{3,})\.ckpt$")
METRICS_FILE = "metrics.csv"
RESOLVED_CONFIG_FILE = "resolved.cfg"


@contextlib.contextmanager
def _stage(name: str, iteration: int, scene: Optional[str] = None) -> Iterator[None]:
    """Любой сбой внутри стадии превращается в PipelineError с ее именем."""
    try:
        yield
    except PipelineError:
        raise
    except Exception as e:
        raise PipelineError(str(e), stage=name, iteration=iteration, scene=scene, original_error=e) from e


def load_scenes(paths: Sequence[str], extent: float, margin: float) -> List[SceneData]:
    """
    Загрузка обучающих сцен.

    Каждый путь — каталог сцены или корень с каталогами ``scene_%03d``.

    Raises:
        DatasetError: Нечитаемый датасет
    """
    scenes = []
    for path in paths:
        for scene_dir in find_scene_dirs(path):
            views = load_dataset(scene_dir)
            grid = GridSpec.enclosing(surface_points(views), extent, margin)
            scenes.append(SceneData(path=scene_dir, views=views, grid=grid))
            logger.info(kv("scene_loaded", path=str(scene_dir), views=len(views), grid=grid.dims))
    return scenes


def init(config: EmConfig, scenes: Optional[List[SceneData]] = None) -> EmState:
    """
    Начальное состояние: детектор из потока ``init``, итерация 0.

    Args:
        config: Конфигурация
        scenes: Уже загруженные сцены (иначе читаются из ``data.scenes``)

    Raises:
        DatasetError: Нечитаемый датасет
    """
    model = init_detector(config.runtime.seed, bn_momentum=config.train.bn_momentum)
    optimizer = make_optimizer(model, config.train)
    if scenes is None:
        scenes = load_scenes(config.data.scenes, config.grid.extent, config.grid.margin)
    return EmState(iteration=0, model=model, optimizer=optimizer, scenes=scenes)


def expectation(state: EmState, scene: SceneData, config: EmConfig, workers: int = 1) -> List[RepeatabilityMap]:
    """Шаг ожидания для одной сцены: карты мягкой повторяемости всех ракурсов."""
    with _stage("inference", state.iteration, scene.name):
        heatmaps = predict_heatmaps(state.model, [view.image for view in scene.views], config.train.batch_size)

    with _stage("accumulate", state.iteration, scene.name):
        grid = accumulate(scene.views, heatmaps, scene.grid)

    with _stage("render", state.iteration, scene.name):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rep_maps = list(pool.map(
                lambda view: render_repeatability(grid, view, config.grid.min_views),
                scene.views
            ))

    logger.debug(kv("expectation", iteration=state.iteration, scene=scene.name,
                    occupied=grid.occupied, hits=int(grid.N.sum())))
    return rep_maps


def maximization(
    rep_maps: Sequence[RepeatabilityMap],
    config: EmConfig,
    L: int,
    iteration: int,
    scene: Optional[str] = None
) -> List[PseudoLabelMask]:
    """Шаг максимизации: псевдо-разметка каждого ракурса с проверкой инвариантов."""
    cfg = dataclasses.replace(config.maximizer, L=L)
    labels = []
    with _stage("maximize", iteration, scene):
        for index, rep in enumerate(rep_maps):
            label = build_pseudo_gt(rep, cfg)
            violations = validate_pseudo_label(label, rep, cfg)
            if violations:
                raise ValidationError(
                    f"Pseudo label of view {index} violates: {'; '.join(violations)}",
                    code=ErrorCode.VALIDATION_INVALID_DATA,
                    context={"view": index, "violations": violations}
                )
            labels.append(label)
    return labels


def _pseudo_label_stats(labels: Sequence[PseudoLabelMask], rep_maps: Sequence[RepeatabilityMap]) -> Tuple[float, float]:
    """Средняя повторяемость выбранных пикселей и среднее число точек на изображение."""
    scores = np.concatenate([rep.values[label.mask] for label, rep in zip(labels, rep_maps)]) if labels else np.empty(0)
    mean_rep = float(scores.mean()) if len(scores) else 0.0
    mean_count = float(np.mean([label.count for label in labels])) if labels else 0.0
    return mean_rep, mean_count


def source_repeatability(source: KeypointSource, scenes: Sequence[SceneData], config: EmConfig) -> float:
    """Многоракурсная повторяемость точек источника на ракурсах сцен (взвешенно по парам)."""
    total, pairs = 0.0, 0
    for scene in scenes:
        keypoints = [source(view.image) for view in scene.views]
        score, n = multiview_repeatability(
            keypoints, scene.views, config.eval.eps_px, 2.0 * config.grid.extent, config.eval.max_pairs_per_scene
        )
        total += score * n
        pairs += n
    return total / pairs if pairs else 0.0


def eval_repeatability(state: EmState, config: EmConfig) -> float:
    """Повторяемость точек текущего детектора на обучающих ракурсах."""
    return source_repeatability(DetectorExtractor(state.model, config.eval), state.scenes, config)


def em_iteration(state: EmState, config: EmConfig, out_dir: Optional[Path] = None) -> EmState:
    """
    Одна EM-итерация над всеми сценами.

    Args:
        state: Текущее состояние (изменяется на месте)
        config: Конфигурация
        out_dir: Каталог для чекпоинта и metrics.csv (None — ничего не пишется)

    Returns:
        То же состояние с увеличенным номером итерации и новой строкой метрик

    Raises:
        PipelineError: Сбой стадии; предыдущий чекпоинт остается валидным
    """
    iteration = state.iteration
    L = anneal_L(iteration, config.schedule.L_schedule, config.schedule.period)
    workers = config.runtime.workers
    logger.info(kv("em_iteration_start", iteration=iteration, L=L, scenes=len(state.scenes)))

    samples: List[TrainingSample] = []
    all_labels: List[PseudoLabelMask] = []
    all_maps: List[RepeatabilityMap] = []
    for scene in state.scenes:
        rep_maps = expectation(state, scene, config, workers)
        labels = maximization(rep_maps, config, L, iteration, scene.name)
        samples.extend((view.image, label) for view, label in zip(scene.views, labels))
        all_labels.extend(labels)
        all_maps.extend(rep_maps)

    mean_rep, mean_count = _pseudo_label_stats(all_labels, all_maps)
    logger.info(kv("pseudo_labels", iteration=iteration, images=len(all_labels),
                   mean_repeatability=mean_rep, mean_count=mean_count))

    with _stage("train", iteration):
        if not config.schedule.warm_start:
            state.model = init_detector(config.runtime.seed, salt=iteration, bn_momentum=config.train.bn_momentum)
            state.optimizer = make_optimizer(state.model, config.train)
        result = train(
            samples,
            state.model,
            state.optimizer,
            config.train,
            config.augment,
            config.runtime.seed,
            salt=(iteration,),
            border=config.maximizer.border
        )

    with _stage("evaluate", iteration):
        eval_rep = eval_repeatability(state, config)

    metrics = IterationMetrics(
        iteration=iteration,
        L=L,
        mean_pgt_repeatability=mean_rep,
        mean_pgt_count=mean_count,
        final_train_loss=result.final_loss,
        eval_repeatability_3px=eval_rep
    )
    state.metrics.append(metrics)
    state.iteration = iteration + 1

    if out_dir is not None:
        with _stage("checkpoint", iteration):
            append_metrics(out_dir / METRICS_FILE, metrics)
            save_checkpoint(out_dir / (CHECKPOINT_PATTERN % iteration), state.model, state.optimizer, state.iteration)

    logger.info(kv("em_iteration_done", **metrics.to_row()))
    return state


def append_metrics(path: Path, metrics: IterationMetrics) -> None:
    """Дописывание строки метрик (заголовок пишется при создании файла)."""
    new_file = not path.is_file()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        if new_file:
            writer.writeheader()
        writer.writerow(metrics.to_row())


def write_metrics(path: Path, metrics: Sequence[IterationMetrics]) -> None:
    """Перезапись metrics.csv заданными строками."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(m.to_row() for m in metrics)


def read_metrics(path: Path) -> List[IterationMetrics]:
    """Чтение metrics.csv (отсутствующий файл — пустой список)."""
    if not Path(path).is_file():
        return []
    with open(path, newline="", encoding="utf-8") as handle:
        return [IterationMetrics.from_row(row) for row in csv.DictReader(handle)]


def latest_checkpoint(out_dir: Path) -> Optional[Path]:
    """Чекпоинт с наибольшим номером итерации в каталоге."""
    if not out_dir.is_dir():
        return None
    found = []
    for path in out_dir.iterdir():
        match = CHECKPOINT_RE.match(path.name)
        if match:
            found.append((int(match.group(1)), path))
    return max(found)[1] if found else None


def resume(state: EmState, out_dir: Path) -> EmState:
    """
    Продолжение с последнего чекпоинта.

    Строки metrics.csv после последней сохраненной итерации отбрасываются.
    """
    checkpoint = latest_checkpoint(out_dir)
    if checkpoint is None:
        return state
    state.iteration = load_checkpoint(checkpoint, state.model, state.optimizer)
    state.metrics = [m for m in read_metrics(out_dir / METRICS_FILE) if m.iteration < state.iteration]
    write_metrics(out_dir / METRICS_FILE, state.metrics)
    logger.info(kv("resumed", checkpoint=str(checkpoint), iteration=state.iteration, metrics_rows=len(state.metrics)))
    return state


def _clear_run(out_dir: Path) -> None:
    """Удаление чекпоинтов и метрик прошлого запуска."""
    for path in out_dir.iterdir():
        if CHECKPOINT_RE.match(path.name) or path.name == METRICS_FILE:
            path.unlink()


def run(config: EmConfig, resume_run: bool = True, scenes: Optional[List[SceneData]] = None) -> EmState:
    """
    Полный EM-запуск: init и n_iterations итераций.

    Args:
        config: Конфигурация
        resume_run: Продолжить с последнего чекпоинта в каталоге результатов
        scenes: Уже загруженные сцены

    Returns:
        Итоговое состояние
    """
    out_dir = Path(config.runtime.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / RESOLVED_CONFIG_FILE).write_text(ConfigManager.dump(config), encoding="utf-8")

    state = init(config, scenes)
    if not state.scenes:
        raise DatasetError(
            "No training scenes found",
            code=ErrorCode.DATASET_MISSING_FILE,
            path=", ".join(config.data.scenes)
        )
    if resume_run:
        state = resume(state, out_dir)
    else:
        _clear_run(out_dir)

    while state.iteration < config.schedule.n_iterations:
        em_iteration(state, config, out_dir)

    logger.info(kv("em_run_done", iterations=state.iteration, out=str(out_dir)))
    return state
