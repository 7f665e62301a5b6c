"""
Проверка состояния каталога запуска EM: метрики, чекпоинты, лог и
приемочные показатели последнего чекпоинта.
"""

from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..config.config_manager import EmConfig
from ..detector.checkpoint import load_checkpoint
from ..detector.network import HeatmapDetector
from ..evaluation.benchmark import build_benchmark
from ..evaluation.keypoints import DetectorExtractor, RandomKeypointBaseline
from ..evaluation.protocols import mma
from ..utils.logger import get_logger, kv
from .em_loop import CHECKPOINT_RE, METRICS_FILE, latest_checkpoint, load_scenes, read_metrics, source_repeatability
from .models import IterationMetrics

logger = get_logger(__name__)


class RunMonitor:
    """Монитор каталога запуска."""

    def __init__(self, out_dir: Path, slack: float = 0.02) -> None:
        """
        Инициализация монитора.

        Args:
            out_dir: Каталог запуска (metrics.csv, iter_%03d.ckpt)
            slack: Допустимое падение средней повторяемости псевдо-разметки между итерациями
        """
        self.out_dir = Path(out_dir)
        self.slack = slack

    def check_metrics(self, rows: List[IterationMetrics]) -> List[str]:
        """Нарушения в строках metrics.csv."""
        problems = []
        for expected, row in enumerate(rows):
            if row.iteration != expected:
                problems.append(f"iteration_gap: expected {expected}, got {row.iteration}")
                break
        for prev, cur in zip(rows, rows[1:]):
            if cur.mean_pgt_repeatability < prev.mean_pgt_repeatability - self.slack:
                problems.append(
                    f"repeatability_drop: iteration {cur.iteration} "
                    f"{prev.mean_pgt_repeatability:.4f} -> {cur.mean_pgt_repeatability:.4f}"
                )
            if cur.L > prev.L:
                problems.append(f"L_increase: iteration {cur.iteration} {prev.L} -> {cur.L}")
        return problems

    def check_checkpoint(self, rows: List[IterationMetrics]) -> Dict[str, Any]:
        """Последний чекпоинт должен соответствовать последней строке метрик."""
        checkpoint = latest_checkpoint(self.out_dir)
        status: Dict[str, Any] = {"checkpoint": checkpoint.name if checkpoint else None}
        if checkpoint is None:
            status["status"] = "healthy" if not rows else "unhealthy"
            return status

        match = CHECKPOINT_RE.match(checkpoint.name)
        saved = int(match.group(1)) if match else -1
        last = rows[-1].iteration if rows else None
        status["iteration"] = saved
        status["status"] = "healthy" if last == saved else "unhealthy"
        return status

    def log_analysis(self, log_file: Optional[Path]) -> Dict[str, Any]:
        """Подсчет строк лога по уровням (формат ``LEVEL ts=...``)."""
        if log_file is None:
            return {}
        counts = {"ERROR": 0, "CRITICAL": 0, "WARNING": 0, "INFO": 0}
        recent_errors: List[str] = []
        try:
            with open(log_file, "r", encoding="utf-8") as handle:
                for line in handle:
                    level = line.split(" ", 1)[0]
                    if level in counts:
                        counts[level] += 1
                        if level in ("ERROR", "CRITICAL"):
                            recent_errors.append(line.strip())
        except FileNotFoundError:
            return {"error": f"Log file not found: {log_file}"}
        return {"counts": counts, "recent_errors": recent_errors[-10:]}

    @staticmethod
    def acceptance_problems(
        repeatability: Dict[str, float],
        mma_1px: Dict[str, float],
        min_ratio: float = 2.0,
        min_mma: float = 0.5
    ) -> List[str]:
        """
        Приемочные условия для детектора против случайных точек того же числа.

        Повторяемость при eps_px не ниже min_ratio × случайной; MMA@1px на
        парах освещения не ниже случайной и не ниже min_mma.
        """
        problems = []
        detector, random = repeatability["detector"], repeatability["random"]
        if detector < min_ratio * random:
            problems.append(f"repeatability_ratio: detector {detector:.4f} < {min_ratio:g} x random {random:.4f}")
        if mma_1px["detector"] < mma_1px["random"]:
            problems.append(
                f"illumination_mma_below_random: detector {mma_1px['detector']:.4f} < random {mma_1px['random']:.4f}"
            )
        if mma_1px["detector"] < min_mma:
            problems.append(f"illumination_mma_low: detector {mma_1px['detector']:.4f} < {min_mma:g}")
        return problems

    def check_acceptance(self, config: EmConfig, min_ratio: float = 2.0, min_mma: float = 0.5) -> Dict[str, Any]:
        """
        Приемочная проверка последнего чекпоинта.

        Повторяемость считается на обучающих сценах ``config.data.scenes``,
        MMA@1px — на парах освещения отложенных сцен из потока ``eval``.

        Returns:
            Словарь с полями status, checkpoint, iteration, repeatability, mma_1px, problems
        """
        checkpoint = latest_checkpoint(self.out_dir)
        if checkpoint is None:
            return {"status": "unhealthy", "checkpoint": None, "problems": ["no_checkpoint"]}

        model = HeatmapDetector(bn_momentum=config.train.bn_momentum)
        iteration = load_checkpoint(checkpoint, model)
        detector = DetectorExtractor(model, config.eval)
        sources = {
            "detector": detector,
            "random": RandomKeypointBaseline(config.runtime.seed, reference=detector,
                                             border=config.eval.keypoint_border),
        }

        scenes = load_scenes(config.data.scenes, config.grid.extent, config.grid.margin)
        illumination = build_benchmark(config.runtime.seed, config.eval, config.data, config.grid).illumination
        repeatability = {name: source_repeatability(source, scenes, config) for name, source in sources.items()}
        mma_1px = {
            name: float(mma(source, illumination, (1.0,), config.eval.patch).accuracy[0])
            for name, source in sources.items()
        }

        problems = self.acceptance_problems(repeatability, mma_1px, min_ratio, min_mma)
        result = {
            "status": "healthy" if not problems else "unhealthy",
            "checkpoint": checkpoint.name,
            "iteration": iteration,
            "repeatability": repeatability,
            "mma_1px": mma_1px,
            "problems": problems,
        }
        logger.info(kv("acceptance_check", checkpoint=checkpoint.name, status=result["status"],
                       rep_detector=repeatability["detector"], rep_random=repeatability["random"],
                       mma_detector=mma_1px["detector"], mma_random=mma_1px["random"]))
        return result

    def report(self, log_file: Optional[Path] = None) -> Dict[str, Any]:
        """
        Полный отчет о состоянии запуска.

        Returns:
            Словарь с полями overall_status, metrics, checkpoint, problems, log
        """
        rows = read_metrics(self.out_dir / METRICS_FILE)
        problems = self.check_metrics(rows)
        checkpoint = self.check_checkpoint(rows)
        if checkpoint["status"] != "healthy":
            problems.append(f"checkpoint_mismatch: {checkpoint}")

        result = {
            "generated_at": datetime.now().isoformat(),
            "out_dir": str(self.out_dir),
            "overall_status": "healthy" if not problems else "unhealthy",
            "iterations": len(rows),
            "last_metrics": rows[-1].to_row() if rows else None,
            "checkpoint": checkpoint,
            "problems": problems,
            "log": self.log_analysis(log_file),
        }
        logger.info(kv("run_check", out=str(self.out_dir), status=result["overall_status"],
                       iterations=len(rows), problems=len(problems)))
        return result
