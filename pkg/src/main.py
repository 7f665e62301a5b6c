"""
Главный модуль SEDM: командная строка.

Подкоманды: ``gen`` (синтез сцен), ``train`` (EM-цикл), ``eval`` (оценка
чекпоинта), ``inspect`` (дампы тепловых карт, повторяемости, псевдо-разметки
и вокселей). Коды выхода: 0 — успех, 1 — ошибка использования, 2 — сбой.
"""

import argparse
import csv
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional, Tuple

import torch

from .config.config_manager import ConfigManager, EmConfig
from .detector.checkpoint import load_checkpoint
from .detector.network import HeatmapDetector, init_detector, predict_heatmaps
from .em.em_loop import load_scenes, maximization
from .em.em_loop import run as run_em
from .evaluation.benchmark import build_benchmark, evaluate
from .evaluation.keypoints import DetectorExtractor, HarrisBaseline, RandomKeypointBaseline
from .evaluation.report import report
from .geometry.camera import Intrinsics
from .maximizer.pseudo_gt import anneal_L
from .scene.dataset_io import build_dataset
from .utils.exceptions import SedmError, UsageError, handle_exception
from .utils.logger import get_logger, kv, setup_logger
from .utils.pgm import write_pgm
from .voxels.voxel_grid import accumulate, render_repeatability, visibility_stats, write_grid_dump

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2

COMMANDS = ("gen", "train", "eval", "inspect")


class CliArgumentParser(argparse.ArgumentParser):
    """argparse с UsageError вместо немедленного выхода."""

    def error(self, message: str) -> NoReturn:
        raise UsageError(message)


def build_parser() -> CliArgumentParser:
    """Парсер аргументов со всеми подкомандами."""
    common = CliArgumentParser(add_help=False)
    common.add_argument("--config", help="Файл конфигурации с секциями [data], [grid], ...")
    common.add_argument("--env-file", help="Файл .env с переменными SEDM_*")
    common.add_argument("--seed", type=int, help="Корневой seed всех потоков случайности")
    common.add_argument("--out", help="Каталог результатов")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    common.add_argument("--threads", type=int, help="Максимум рабочих потоков (0 — по числу ядер)")

    parser = CliArgumentParser(prog="sedm", description="Обучение детектора ключевых точек EM-итерациями")
    sub = parser.add_subparsers(dest="command", parser_class=CliArgumentParser)

    gen = sub.add_parser("gen", parents=[common], help="Синтез датасета сцен")
    gen.add_argument("--scenes", type=int, help="Число сцен")
    gen.add_argument("--views", type=int, help="Ракурсов на сцену")
    gen.add_argument("--complexity", choices=["small", "medium"])
    gen.add_argument("--width", type=int)
    gen.add_argument("--height", type=int)

    train = sub.add_parser("train", parents=[common], help="EM-обучение детектора")
    train.add_argument("--data", nargs="+", help="Каталоги сцен (или корни с scene_%%03d)")
    train.add_argument("--iterations", type=int, help="Число EM-итераций")
    train.add_argument("--epochs", type=int, help="Эпох обучения на итерацию")
    train.add_argument("--resume", action=argparse.BooleanOptionalAction, default=True,
                       help="Продолжить с последнего чекпоинта в --out")

    evaluate_cmd = sub.add_parser("eval", parents=[common], help="Оценка чекпоинта")
    evaluate_cmd.add_argument("--checkpoint", required=True, help="Файл iter_%%03d.ckpt")
    evaluate_cmd.add_argument("--eval-scenes", type=int, help="Число тестовых сцен")
    evaluate_cmd.add_argument("--eval-views", type=int, help="Ракурсов на тестовую сцену")

    inspect = sub.add_parser("inspect", parents=[common], help="Дампы промежуточных карт")
    inspect.add_argument("--checkpoint", help="Чекпоинт (по умолчанию — детектор после инициализации)")
    inspect.add_argument("--data", nargs="+", help="Каталоги сцен")
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Флаги командной строки в виде ``{"section.key": value}``."""
    mapping = {
        "seed": "runtime.seed",
        "out": "runtime.out_dir",
        "log_level": "runtime.log_level",
        "threads": "runtime.threads",
        "scenes": "data.n_scenes",
        "views": "data.n_views",
        "complexity": "data.complexity",
        "width": "data.width",
        "height": "data.height",
        "data": "data.scenes",
        "iterations": "schedule.n_iterations",
        "epochs": "train.epochs",
        "eval_scenes": "eval.n_scenes",
        "eval_views": "eval.n_views",
    }
    return {key: getattr(args, name) for name, key in mapping.items() if getattr(args, name, None) is not None}


class SedmApp:
    """Запуск подкоманд с разрешенной конфигурацией."""

    def __init__(self, config: EmConfig) -> None:
        self.config = config
        self.logger = setup_logger(
            name="src",
            log_file=config.runtime.log_file or None,
            log_level=config.runtime.log_level
        )
        torch.set_num_threads(config.runtime.workers)
        self.out_dir = Path(config.runtime.out_dir)

    def generate(self) -> None:
        """Синтез датасета сцен в каталог результатов."""
        data, grid = self.config.data, self.config.grid
        results = build_dataset(
            self.out_dir,
            self.config.runtime.seed,
            n_scenes=data.n_scenes,
            n_views=data.n_views,
            complexity=data.complexity,
            intrinsics=Intrinsics.from_fov(data.width, data.height, data.fov_deg),
            extent=grid.extent,
            min_views=grid.min_views,
            coverage_target=data.coverage_target,
            n_lightings=data.n_lightings,
            threads=self.config.runtime.workers
        )
        self.logger.info(kv("gen_done", scenes=len(results), out=str(self.out_dir)))

    def train(self, resume_run: bool = True) -> None:
        """EM-обучение."""
        state = run_em(self.config, resume_run=resume_run)
        last = state.last_metrics
        if last is not None:
            self.logger.info(kv("train_done", **last.to_row()))

    def _load_model(self, checkpoint: Optional[str]) -> Tuple[HeatmapDetector, int]:
        """Детектор из чекпоинта и число его итераций (без чекпоинта — после инициализации, 0)."""
        if not checkpoint:
            return init_detector(self.config.runtime.seed, bn_momentum=self.config.train.bn_momentum), 0
        model = HeatmapDetector(bn_momentum=self.config.train.bn_momentum)
        return model, load_checkpoint(checkpoint, model)

    def evaluate(self, checkpoint: str) -> None:
        """Оценка детектора и базовых линий на отложенных сценах."""
        cfg = self.config
        model, iteration = self._load_model(checkpoint)
        benchmark = build_benchmark(cfg.runtime.seed, cfg.eval, cfg.data, cfg.grid)

        detector = DetectorExtractor(model, cfg.eval)
        sources = {
            "detector": detector,
            "random": RandomKeypointBaseline(cfg.runtime.seed, reference=detector, border=cfg.eval.keypoint_border),
            "harris": HarrisBaseline(cfg.eval),
        }
        results = evaluate(sources, benchmark, cfg.eval, occlusion_tol=2.0 * cfg.grid.extent)
        results.heatmaps = [detector.heatmap(view.image) for views in benchmark.view_sets for view in views]
        report(results, self.out_dir)

        summary = results.error_summary()
        self.logger.info(kv("eval_done", checkpoint=checkpoint, iteration=iteration,
                            failed_pairs=summary["total"], out=str(self.out_dir)))

    def inspect(self, checkpoint: Optional[str]) -> None:
        """Дампы тепловых карт, повторяемости, псевдо-разметки, сетки и статистики видимости."""
        cfg = self.config
        model, iteration = self._load_model(checkpoint)
        L = anneal_L(iteration, cfg.schedule.L_schedule, cfg.schedule.period)

        for scene in load_scenes(cfg.data.scenes, cfg.grid.extent, cfg.grid.margin):
            target = self.out_dir / "inspect" / scene.name
            heatmaps = predict_heatmaps(model, [view.image for view in scene.views], cfg.train.batch_size)
            grid = accumulate(scene.views, heatmaps, scene.grid)
            rep_maps = [render_repeatability(grid, view, cfg.grid.min_views) for view in scene.views]
            labels = maximization(rep_maps, cfg, L, iteration, scene.name)

            for index, (heatmap, rep, label) in enumerate(zip(heatmaps, rep_maps, labels)):
                write_pgm(target / f"heatmap_{index:05d}.pgm", heatmap)
                write_pgm(target / f"repeatability_{index:05d}.pgm", rep.values)
                write_pgm(target / f"pseudo_gt_{index:05d}.pgm", label.mask)
            write_grid_dump(grid, target / "grid.txt")

            with open(target / "voxel_stats.csv", "w", newline="", encoding="utf-8") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(["k", "fraction_at_least_k"])
                for k, fraction in enumerate(visibility_stats(grid), start=1):
                    writer.writerow([k, f"{fraction:.9g}"])

            self.logger.info(kv("inspect_scene", scene=scene.name, views=len(scene.views), L=L,
                                occupied=grid.occupied, out=str(target)))


def main(argv: Optional[List[str]] = None) -> int:
    """
    Точка входа командной строки.

    Returns:
        Код выхода: 0 — успех, 1 — ошибка использования, 2 — сбой выполнения
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        args = parser.parse_args(argv)
        if args.command not in COMMANDS:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"sedm: error: {e.get_user_message()}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    logger = get_logger("src")
    try:
        manager = ConfigManager(args.config, args.env_file)
        config = manager.get_em_config(collect_overrides(args))
        manager.validate(config, require_scenes=args.command in ("train", "inspect"))
        print(ConfigManager.dump(config), flush=True)

        app = SedmApp(config)
        if args.command == "gen":
            app.generate()
        elif args.command == "train":
            app.train(resume_run=args.resume)
        elif args.command == "eval":
            app.evaluate(args.checkpoint)
        else:
            app.inspect(args.checkpoint)
        return EXIT_OK

    except SedmError as e:
        e.log_error(logger)
        print(f"Error: {e.get_user_message()}", file=sys.stderr)
        return EXIT_FAILURE
    except KeyboardInterrupt:
        print("\nInterrupted by user", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as e:
        error = handle_exception(e, logger, {"command": args.command})
        print(f"Unexpected error: {error.get_user_message()}", file=sys.stderr)
        return EXIT_FAILURE


def run() -> None:
    """Точка входа console_scripts."""
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    run()
