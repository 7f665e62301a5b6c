"""
Тесты EM-цикла.
"""

import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np
import torch

from src.config.config_manager import ConfigManager, EmConfig
from src.detector.checkpoint import load_checkpoint
from src.detector.network import HeatmapDetector
from src.em.em_loop import (
    CHECKPOINT_PATTERN,
    METRICS_FILE,
    RESOLVED_CONFIG_FILE,
    em_iteration,
    expectation,
    init,
    latest_checkpoint,
    load_scenes,
    maximization,
    read_metrics,
    run,
)
from src.em.models import IterationMetrics
from src.em.monitor import RunMonitor
from src.geometry.camera import Intrinsics
from src.scene.dataset_io import build_dataset
from src.utils.exceptions import ConfigError, DatasetError, PipelineError


def _config(scene_root: Path, out_dir: Path, n_iterations: int = 1) -> EmConfig:
    config = EmConfig()
    config.data.scenes = [str(scene_root)]
    config.grid.extent = 0.01
    config.schedule.n_iterations = n_iterations
    config.train.epochs = 2
    config.train.batch_size = 3
    config.eval.max_pairs_per_scene = 3
    config.runtime.out_dir = str(out_dir)
    config.runtime.threads = 2
    return config


class EmTestCase(unittest.TestCase):
    """Общая маленькая сцена: 6 ракурсов 64×64."""

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls.tmp.name)
        cls.data = cls.root / "data"
        build_dataset(
            cls.data, seed=0, n_scenes=1, n_views=6,
            intrinsics=Intrinsics.from_fov(64, 64, 60.0), extent=0.01, coverage_target=0.0, threads=2
        )

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def setUp(self):
        self.run_dir = tempfile.TemporaryDirectory()
        self.out = Path(self.run_dir.name)

    def tearDown(self):
        self.run_dir.cleanup()


class TestInit(EmTestCase):
    """Тесты начального состояния."""

    def test_same_seed_same_parameters(self):
        config = _config(self.data, self.out)
        first = init(config, scenes=[]).model.state_dict()
        second = init(config, scenes=[]).model.state_dict()
        config.runtime.seed = 1
        other = init(config, scenes=[]).model.state_dict()
        for name in first:
            self.assertTrue(torch.equal(first[name], second[name]), name)
        self.assertFalse(torch.equal(first["head.weight"], other["head.weight"]))

    def test_loads_scenes(self):
        state = init(_config(self.data, self.out))
        self.assertEqual(state.iteration, 0)
        self.assertEqual(len(state.scenes), 1)
        self.assertEqual(len(state.scenes[0].views), 6)
        self.assertEqual(state.scenes[0].name, "scene_000")

    def test_zero_iterations_rejected(self):
        config = _config(self.data, self.out, n_iterations=0)
        with self.assertRaises(ConfigError):
            ConfigManager().validate(config)


class TestIteration(EmTestCase):
    """Тесты отдельных шагов итерации."""

    def test_uniform_detector(self):
        """Равномерный детектор: разметка строится, средняя повторяемость 1/65."""
        config = _config(self.data, self.out)
        state = init(config)
        state.model = HeatmapDetector()
        with torch.no_grad():
            for param in state.model.parameters():
                param.zero_()

        scene = state.scenes[0]
        rep_maps = expectation(state, scene, config, workers=2)
        self.assertEqual(len(rep_maps), 6)
        for rep in rep_maps:
            self.assertTrue(rep.mask.any())
            np.testing.assert_allclose(rep.values[rep.mask], 1 / 65, atol=1e-6)

        labels = maximization(rep_maps, config, L=107, iteration=0, scene=scene.name)
        scores = np.concatenate([rep.values[label.mask] for label, rep in zip(labels, rep_maps)])
        self.assertGreater(len(scores), 0)
        self.assertAlmostEqual(float(scores.mean()), 1 / 65, delta=1e-6)
        self.assertTrue(all(label.count <= 107 for label in labels))

    def test_iteration_in_memory(self):
        config = _config(self.data, self.out)
        state = em_iteration(init(config), config)
        self.assertEqual(state.iteration, 1)
        metrics = state.last_metrics
        self.assertEqual((metrics.iteration, metrics.L), (0, 107))
        self.assertTrue(np.isfinite(metrics.final_train_loss))
        self.assertTrue(0.0 <= metrics.mean_pgt_repeatability <= 1.0)
        self.assertTrue(0.0 <= metrics.eval_repeatability_3px <= 1.0)
        self.assertIsNone(latest_checkpoint(self.out))

    def test_stage_failure(self):
        """Сбой стадии: PipelineError с именем стадии, чекпоинт не пишется."""
        config = _config(self.data, self.out)
        state = init(config)
        with patch("src.em.em_loop.accumulate", side_effect=ValueError("boom")):
            with self.assertRaises(PipelineError) as ctx:
                em_iteration(state, config, self.out)
        self.assertEqual(ctx.exception.stage, "accumulate")
        self.assertEqual(ctx.exception.context["stage"], "accumulate")
        self.assertEqual(state.iteration, 0)
        self.assertFalse((self.out / METRICS_FILE).exists())

    def test_cold_start(self):
        config = _config(self.data, self.out)
        config.schedule.warm_start = False
        state = init(config)
        before = state.model
        em_iteration(state, config)
        self.assertIsNot(state.model, before)
        self.assertEqual(state.iteration, 1)


class TestRun(EmTestCase):
    """Тесты полного запуска, чекпоинтов и продолжения."""

    def test_smoke_run(self):
        config = _config(self.data, self.out)
        state = run(config)
        self.assertEqual(state.iteration, 1)
        self.assertTrue((self.out / (CHECKPOINT_PATTERN % 0)).is_file())
        self.assertTrue((self.out / RESOLVED_CONFIG_FILE).is_file())
        rows = read_metrics(self.out / METRICS_FILE)
        self.assertEqual(len(rows), 1)
        self.assertEqual(rows[0].iteration, 0)
        self.assertEqual(load_checkpoint(self.out / (CHECKPOINT_PATTERN % 0), HeatmapDetector()), 1)

    def test_deterministic_metrics(self):
        texts = []
        for name in ("a", "b"):
            run(_config(self.data, self.out / name))
            texts.append((self.out / name / METRICS_FILE).read_text(encoding="utf-8"))
        self.assertEqual(texts[0], texts[1])

    def test_resume_matches_uninterrupted(self):
        """Остановка после первой итерации и продолжение дают те же метрики."""
        run(_config(self.data, self.out / "full", n_iterations=2))
        run(_config(self.data, self.out / "split", n_iterations=1))
        state = run(_config(self.data, self.out / "split", n_iterations=2))
        self.assertEqual(state.iteration, 2)
        self.assertEqual(
            (self.out / "full" / METRICS_FILE).read_text(encoding="utf-8"),
            (self.out / "split" / METRICS_FILE).read_text(encoding="utf-8")
        )
        self.assertEqual(latest_checkpoint(self.out / "split").name, CHECKPOINT_PATTERN % 1)

    def test_resume_drops_rows_after_checkpoint(self):
        config = _config(self.data, self.out)
        run(config)
        extra = IterationMetrics(iteration=5, L=1, mean_pgt_repeatability=0.0, mean_pgt_count=0.0,
                                 final_train_loss=0.0, eval_repeatability_3px=0.0)
        with open(self.out / METRICS_FILE, "a", encoding="utf-8") as handle:
            handle.write(",".join(extra.to_row().values()) + "\n")
        state = run(config)
        self.assertEqual(state.iteration, 1)
        self.assertEqual([m.iteration for m in read_metrics(self.out / METRICS_FILE)], [0])

    def test_no_resume_clears_run(self):
        config = _config(self.data, self.out)
        run(config)
        stale = self.out / (CHECKPOINT_PATTERN % 7)
        stale.write_bytes(b"")
        state = run(config, resume_run=False)
        self.assertEqual(state.iteration, 1)
        self.assertFalse(stale.exists())
        self.assertEqual(len(read_metrics(self.out / METRICS_FILE)), 1)

    def test_missing_scenes(self):
        config = _config(self.root / "empty", self.out)
        (self.root / "empty").mkdir(exist_ok=True)
        with self.assertRaises(DatasetError):
            run(config)

    def test_load_scenes_root(self):
        scenes = load_scenes([str(self.data)], extent=0.01, margin=0.05)
        self.assertEqual([s.name for s in scenes], ["scene_000"])


class TestRunMonitor(EmTestCase):
    """Тесты проверки каталога запуска."""

    def _row(self, iteration: int, L: int, rep: float) -> IterationMetrics:
        return IterationMetrics(iteration=iteration, L=L, mean_pgt_repeatability=rep, mean_pgt_count=10.0,
                                final_train_loss=0.1, eval_repeatability_3px=0.2)

    def test_healthy_after_run(self):
        run(_config(self.data, self.out))
        report = RunMonitor(self.out).report()
        self.assertEqual(report["overall_status"], "healthy")
        self.assertEqual(report["iterations"], 1)
        self.assertEqual(report["checkpoint"]["iteration"], 0)

    def test_empty_directory(self):
        report = RunMonitor(self.out).report()
        self.assertEqual(report["overall_status"], "healthy")
        self.assertIsNone(report["last_metrics"])

    def test_metric_problems(self):
        """Провал повторяемости больше допуска, рост L и пропуск итерации."""
        monitor = RunMonitor(self.out, slack=0.02)
        rows = [self._row(0, 107, 0.30), self._row(1, 107, 0.29), self._row(2, 120, 0.20)]
        names = [p.split(":")[0] for p in monitor.check_metrics(rows)]
        self.assertEqual(names, ["repeatability_drop", "L_increase"])
        self.assertEqual(monitor.check_metrics([self._row(1, 107, 0.3)])[0].split(":")[0], "iteration_gap")

    def test_log_analysis(self):
        log_file = self.out / "sedm.log"
        log_file.write_text(
            "INFO ts=1 logger=src event=a\nERROR ts=2 logger=src event=b\nWARNING ts=3 logger=src event=c\n",
            encoding="utf-8"
        )
        log = RunMonitor(self.out).log_analysis(log_file)
        self.assertEqual(log["counts"]["ERROR"], 1)
        self.assertEqual(log["counts"]["INFO"], 1)
        self.assertEqual(len(log["recent_errors"]), 1)
        self.assertIn("error", RunMonitor(self.out).log_analysis(self.out / "absent.log"))

    def test_acceptance_problems(self):
        """Порог отношения повторяемостей и два условия на MMA@1px освещения."""
        problems = RunMonitor.acceptance_problems
        self.assertEqual(problems({"detector": 0.5, "random": 0.2}, {"detector": 0.7, "random": 0.3}), [])
        names = [p.split(":")[0] for p in problems({"detector": 0.3, "random": 0.2}, {"detector": 0.4, "random": 0.45})]
        self.assertEqual(names, ["repeatability_ratio", "illumination_mma_below_random", "illumination_mma_low"])
        self.assertEqual(problems({"detector": 0.35, "random": 0.2}, {"detector": 0.6, "random": 0.1}, min_ratio=1.5), [])

    def test_acceptance_without_checkpoint(self):
        result = RunMonitor(self.out).check_acceptance(_config(self.data, self.out))
        self.assertEqual(result["status"], "unhealthy")
        self.assertEqual(result["problems"], ["no_checkpoint"])

    def test_acceptance_after_run(self):
        config = _config(self.data, self.out)
        config.data.width = config.data.height = 64
        config.eval.n_scenes = 1
        config.eval.n_views = 3
        run(config)
        result = RunMonitor(self.out).check_acceptance(config)
        self.assertEqual(result["checkpoint"], CHECKPOINT_PATTERN % 0)
        self.assertEqual(result["iteration"], 1)
        for values in (result["repeatability"], result["mma_1px"]):
            self.assertEqual(set(values), {"detector", "random"})
            self.assertTrue(all(0.0 <= value <= 1.0 for value in values.values()))
        saved = read_metrics(self.out / METRICS_FILE)[0].eval_repeatability_3px
        self.assertAlmostEqual(result["repeatability"]["detector"], saved, places=4)
        self.assertEqual(result["problems"], RunMonitor.acceptance_problems(result["repeatability"], result["mma_1px"]))
        self.assertEqual(result["status"], "healthy" if not result["problems"] else "unhealthy")


if __name__ == '__main__':
    unittest.main()
