"""
Тесты построения псевдо-разметки.
"""

import unittest

import numpy as np

from src.config.config_manager import MaximizerConfig
from src.maximizer.pseudo_gt import (
    PseudoLabelMask,
    anneal_L,
    build_pseudo_gt,
    edge_mask,
    greedy_select,
    nms_select,
    rasterize_selection,
    validate_pseudo_label,
)
from src.utils.exceptions import ValidationError
from src.voxels.voxel_grid import RepeatabilityMap
from tests.oracles import greedy_rescan_oracle


def _full(values: np.ndarray) -> RepeatabilityMap:
    return RepeatabilityMap(values=values, mask=np.ones(values.shape, dtype=bool))


class TestEdgeMask(unittest.TestCase):
    """Тесты фильтра ребер."""

    def test_isolated_peak_is_not_edge(self):
        values = np.zeros((32, 32))
        values[16, 16] = 1.0
        self.assertFalse(edge_mask(_full(values))[16, 16])

    def test_thin_line_is_edge(self):
        """Внутренние пиксели тонкой линии помечаются как ребро."""
        values = np.zeros((64, 64))
        values[32, :] = 1.0
        excluded = edge_mask(_full(values))
        self.assertTrue(excluded[32, 20:44].all())

    def test_constant_map_has_no_edges(self):
        self.assertFalse(edge_mask(_full(np.full((32, 32), 0.4))).any())

    def test_undefined_pixels_excluded(self):
        mask = np.ones((16, 16), dtype=bool)
        mask[3, 5] = False
        excluded = edge_mask(RepeatabilityMap(values=np.full((16, 16), 0.4), mask=mask))
        self.assertTrue(excluded[3, 5])
        self.assertEqual(int(excluded.sum()), 1)


class TestGreedySelect(unittest.TestCase):
    """Тесты жадного выбора с подавлением."""

    def _two_peaks(self, distance: int) -> np.ndarray:
        scores = np.zeros((64, 64))
        scores[20, 20] = 0.9
        scores[20, 20 + distance] = 0.8
        return scores

    def test_close_peaks_suppressed(self):
        """Пики на расстоянии 2 при r_nms=6: остается только 0.9."""
        selection = greedy_select(self._two_peaks(2), np.zeros((64, 64), bool), L=10, r_nms=6, cell=1,
                                  score_floor=0.5)
        self.assertEqual(selection.pixels.tolist(), [[20, 20]])

    def test_far_peaks_kept(self):
        selection = greedy_select(self._two_peaks(10), np.zeros((64, 64), bool), L=10, r_nms=6, cell=1,
                                  score_floor=0.5)
        self.assertEqual(selection.pixels.tolist(), [[20, 20], [30, 20]])
        np.testing.assert_allclose(selection.scores, [0.9, 0.8])

    def test_matches_rescan_oracle(self):
        """100 случайных карт 64×64: совпадение с пересканирующим эталоном."""
        generator = np.random.default_rng(0)
        for trial in range(100):
            scores = generator.random((64, 64))
            if trial % 4 == 0:
                # равные оценки проверяют порядок row-major
                scores = np.round(scores, 1)
            excluded = generator.random((64, 64)) < 0.1
            L = int(generator.integers(1, 40))
            r_nms = float(generator.choice([0.0, 1.5, 3.0, 6.0]))
            floor = float(generator.choice([0.0, 0.3]))
            selection = greedy_select(scores, excluded, L=L, r_nms=r_nms, score_floor=floor)
            expected = greedy_rescan_oracle(scores, excluded, L=L, r_nms=r_nms, score_floor=floor)
            self.assertEqual([tuple(p) for p in selection.pixels.tolist()], expected)

    def test_monotone_invariance(self):
        """Выбор не меняется при строго монотонном преобразовании оценок."""
        generator = np.random.default_rng(1)
        scores = generator.random((64, 64))
        excluded = np.zeros((64, 64), dtype=bool)
        first = greedy_select(scores, excluded, L=30, r_nms=6)
        second = greedy_select(scores ** 2, excluded, L=30, r_nms=6)
        np.testing.assert_array_equal(first.pixels, second.pixels)

    def test_top_one_is_global_maximum(self):
        generator = np.random.default_rng(2)
        scores = generator.random((32, 32))
        excluded = np.zeros((32, 32), dtype=bool)
        excluded[10, 10] = True
        scores[10, 10] = 2.0
        scores[15, 17] = 1.5
        selection = greedy_select(scores, excluded, L=1, r_nms=6)
        self.assertEqual(selection.pixels.tolist(), [[17, 15]])

    def test_uniform_map_packs_cells(self):
        """Равномерная карта: плотная упаковка, не больше одной точки на клетку 8×8."""
        scores = np.full((64, 64), 1 / 65)
        excluded = np.zeros((64, 64), bool)
        selection = greedy_select(scores, excluded, L=1000, r_nms=6)
        cells = {(u // 8, v // 8) for u, v in selection.pixels.tolist()}
        self.assertEqual(len(cells), len(selection))
        self.assertGreaterEqual(len(selection), 32)
        self.assertEqual([tuple(p) for p in selection.pixels.tolist()],
                         greedy_rescan_oracle(scores, excluded, L=1000, r_nms=6))

    def test_border_and_tiny_image(self):
        selection = greedy_select(np.ones((8, 8)), np.zeros((8, 8), bool), L=5, r_nms=1)
        self.assertEqual(len(selection), 0)

    def test_shape_mismatch(self):
        with self.assertRaises(ValidationError):
            greedy_select(np.ones((8, 8)), np.zeros((4, 4), bool), L=5, r_nms=1)


class TestPseudoGroundTruth(unittest.TestCase):
    """Тесты псевдо-разметки."""

    def setUp(self):
        self.cfg = MaximizerConfig(L=20, r_nms=6, score_floor=0.1)

    def test_all_masked(self):
        rep = RepeatabilityMap(values=np.ones((64, 64)), mask=np.zeros((64, 64), dtype=bool))
        label = build_pseudo_gt(rep, self.cfg)
        self.assertEqual(label.count, 0)
        self.assertFalse(label.valid.any())

    def test_random_maps_satisfy_constraints(self):
        """Любая построенная разметка проходит проверку инвариантов."""
        generator = np.random.default_rng(3)
        for _ in range(30):
            values = generator.random((64, 64))
            mask = generator.random((64, 64)) > 0.2
            rep = RepeatabilityMap(values=values, mask=mask)
            for edge_filter_on in (True, False):
                cfg = MaximizerConfig(L=int(generator.integers(1, 60)), r_nms=6, score_floor=0.1,
                                      edge_filter_on=edge_filter_on)
                label = build_pseudo_gt(rep, cfg)
                self.assertEqual(validate_pseudo_label(label, rep, cfg), [])
                np.testing.assert_array_equal(label.valid, rep.mask)
                self.assertTrue(np.all(rep.values[label.mask] >= cfg.score_floor))

    def test_corner_scene(self):
        """Яркий квадрат: углы дают непустую разметку."""
        values = np.zeros((64, 64))
        values[20:44, 20:44] = 0.8
        label = build_pseudo_gt(_full(values), self.cfg)
        self.assertGreater(label.count, 0)

    def test_validator_reports_violations(self):
        rep = _full(np.full((32, 32), 0.5))
        mask = np.zeros((32, 32), dtype=bool)
        mask[1, 1] = True
        mask[10, 10] = True
        mask[10, 12] = True
        violations = validate_pseudo_label(PseudoLabelMask(mask=mask, valid=rep.mask), rep, self.cfg)
        names = {v.split(":")[0] for v in violations}
        self.assertTrue({"nms_distance", "cell", "border"} <= names)

    def test_nms_select_rasterize(self):
        rep = _full(np.random.default_rng(4).random((32, 32)))
        selection = nms_select(rep, np.zeros((32, 32), dtype=bool), self.cfg)
        mask = rasterize_selection(selection, (32, 32))
        self.assertEqual(int(mask.sum()), len(selection))


class TestAnnealing(unittest.TestCase):
    """Тесты отжига L."""

    def test_schedule(self):
        schedule = [2000, 1700, 1200]
        self.assertEqual([anneal_L(i, schedule, 3) for i in range(9)],
                         [2000] * 3 + [1700] * 3 + [1200] * 3)
        self.assertEqual(anneal_L(100, schedule, 3), 1200)

    def test_invalid(self):
        with self.assertRaises(ValidationError):
            anneal_L(0, [], 3)
        with self.assertRaises(ValidationError):
            anneal_L(0, [10], 0)


if __name__ == '__main__':
    unittest.main()
