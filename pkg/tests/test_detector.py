"""
Тесты детектора: сеть, функция потерь, градиенты, Adam, аугментации и чекпоинты.
"""

import tempfile
import unittest
from pathlib import Path

import numpy as np
import torch

from src.config.config_manager import AugmentConfig, TrainConfig
from src.detector.augment import AugmentParams, apply_augmentation, augment, random_homography, warp_label
from src.detector.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from src.detector.network import HEAD_CHANNELS, HeatmapDetector, init_detector, predict_heatmaps, to_tensor
from src.detector.training import adam_step, backward, batch_loss, bce_loss, make_optimizer, train
from src.geometry.camera import warp_homography
from src.maximizer.pseudo_gt import PseudoLabelMask
from src.utils.exceptions import CheckpointError, ErrorCode, TrainingError
from tests.oracles import bce_loop_oracle

GRAD_SAMPLES = 200


def _zero_model() -> HeatmapDetector:
    model = HeatmapDetector()
    with torch.no_grad():
        for param in model.parameters():
            param.zero_()
    return model


def _label(shape, points=()) -> PseudoLabelMask:
    mask = np.zeros(shape, dtype=bool)
    for u, v in points:
        mask[v, u] = True
    return PseudoLabelMask(mask=mask, valid=np.ones(shape, dtype=bool))


class TestNetwork(unittest.TestCase):
    """Тесты прямого прохода."""

    def test_cell_softmax_is_simplex(self):
        """Сумма 64 пикселей клетки плюс dustbin равна 1."""
        model = init_detector(0)
        images = to_tensor(np.random.default_rng(0).random((2, 32, 48)))
        with torch.no_grad():
            probs = torch.softmax(model.logits(images), dim=1)
            heatmap = model(images)
        self.assertEqual(tuple(heatmap.shape), (2, 32, 48))
        self.assertEqual(probs.shape[1], HEAD_CHANNELS)
        cell_sums = heatmap.reshape(2, 4, 8, 6, 8).sum(dim=(2, 4)) + probs[:, -1]
        self.assertLess(float((cell_sums - 1.0).abs().max()), 1e-6)
        self.assertTrue(bool(((heatmap >= 0) & (heatmap <= 1)).all()))

    def test_zero_parameters_give_uniform_heatmap(self):
        heatmaps = predict_heatmaps(_zero_model(), [np.random.default_rng(1).random((16, 16))])
        np.testing.assert_allclose(heatmaps, np.full((1, 16, 16), 1 / 65), atol=1e-7)

    def test_shape_not_divisible(self):
        with self.assertRaises(TrainingError) as ctx:
            init_detector(0)(to_tensor([np.zeros((12, 16))]))
        self.assertEqual(ctx.exception.code, ErrorCode.TRAINING_SHAPE_ERROR)

    def test_init_is_seeded(self):
        first = init_detector(5).state_dict()
        second = init_detector(5).state_dict()
        other = init_detector(6).state_dict()
        for name in first:
            self.assertTrue(torch.equal(first[name], second[name]), name)
        self.assertFalse(torch.equal(first["head.weight"], other["head.weight"]))

    def test_fresh_detector_is_near_uniform(self):
        heatmap = predict_heatmaps(init_detector(0), [np.random.default_rng(2).random((64, 64))])[0]
        self.assertLess(heatmap.max() / heatmap.min(), 50.0)

    def test_inference_is_reproducible(self):
        image = np.random.default_rng(3).random((32, 32))
        first = predict_heatmaps(init_detector(9), [image])
        second = predict_heatmaps(init_detector(9), [image])
        np.testing.assert_array_equal(first, second)


class TestLoss(unittest.TestCase):
    """Тесты функции потерь и градиентов."""

    def test_single_pixel(self):
        x = torch.full((1, 4, 4), 0.5, dtype=torch.float64)
        y = torch.zeros((1, 4, 4), dtype=torch.bool)
        y[0, 2, 2] = True
        valid = torch.zeros((1, 4, 4), dtype=torch.bool)
        valid[0, 2, 2] = True
        loss = bce_loss(x, y, valid, border=0)
        self.assertAlmostEqual(float(loss[0]), 0.6931471805599453, places=9)

    def test_perfect_prediction_is_near_zero(self):
        y = torch.rand((1, 16, 16), generator=torch.Generator().manual_seed(0), dtype=torch.float64) > 0.9
        loss = bce_loss(y.double(), y, border=0)
        self.assertLess(float(loss[0]), 256 * 2e-7)

    def test_matches_loop_oracle(self):
        generator = np.random.default_rng(4)
        for _ in range(10):
            x = generator.random((16, 16))
            y = generator.random((16, 16)) > 0.8
            valid = generator.random((16, 16)) > 0.2
            border = int(generator.integers(0, 4))
            loss = bce_loss(torch.from_numpy(x), torch.from_numpy(y), torch.from_numpy(valid), border=border)
            self.assertAlmostEqual(float(loss), bce_loop_oracle(x, y, valid, border), delta=1e-10)

    def test_shape_mismatch(self):
        with self.assertRaises(TrainingError):
            bce_loss(torch.zeros((1, 8, 8)), torch.zeros((1, 8, 4)))

    def _gradient_inputs(self, generator: np.random.Generator):
        images = to_tensor(generator.random((2, 16, 16)), dtype=torch.float64)
        labels = torch.from_numpy(generator.random((2, 16, 16)) > 0.9)
        valid = torch.from_numpy(generator.random((2, 16, 16)) > 0.1)
        return images, labels, valid

    def test_gradient_matches_finite_differences(self):
        """
        Градиент autograd совпадает с центральными разностями (double, h = 1e-4).

        5 seed, каждый тензор параметров, min(200, numel) элементов. Элемент,
        у которого в [θ−h, θ+h] лежит излом ReLU, распознается по второй
        разности и пропускается; таких не больше 10%.
        """
        h = 1e-4
        for seed in range(5):
            model = init_detector(seed).double()
            generator = np.random.default_rng(100 + seed)
            images, labels, valid = self._gradient_inputs(generator)
            grads = backward(model, images, labels, valid, border=2)
            self.assertEqual(set(grads), {name for name, _ in model.named_parameters()})

            def loss_at(flat, index, value):
                with torch.no_grad():
                    flat[index] = value
                    return float(batch_loss(model, images, labels, valid, border=2)[0])

            checked = kinks = 0
            for name, param in model.named_parameters():
                flat = param.data.view(-1)
                for index in generator.choice(flat.numel(), size=min(GRAD_SAMPLES, flat.numel()), replace=False):
                    original = float(flat[index])
                    plus = loss_at(flat, index, original + h)
                    minus = loss_at(flat, index, original - h)
                    center = loss_at(flat, index, original)
                    numeric = (plus - minus) / (2 * h)
                    analytic = float(grads[name].view(-1)[index])
                    error = abs(numeric - analytic)
                    checked += 1
                    if error < 1e-6 or error / max(abs(numeric), abs(analytic)) < 1e-3:
                        continue
                    second = abs(plus - 2 * center + minus) / h
                    self.assertGreater(second, error, f"seed={seed} {name}[{index}]")
                    kinks += 1
            self.assertLessEqual(kinks, 0.1 * checked, f"seed={seed}")

    def test_logit_gradient_sums_to_zero_per_cell(self):
        """Softmax по 65 каналам: градиент по логитам клетки в сумме равен 0."""
        model = init_detector(1).double()
        images, labels, valid = self._gradient_inputs(np.random.default_rng(6))
        captured = {}

        def keep_logits(module, inputs, output):
            output.retain_grad()
            captured["logits"] = output

        handle = model.head.register_forward_hook(keep_logits)
        try:
            backward(model, images, labels, valid, border=2)
        finally:
            handle.remove()
        grad = captured["logits"].grad
        self.assertEqual(grad.shape[1], HEAD_CHANNELS)
        self.assertGreater(float(grad.abs().max()), 0.0)
        self.assertLess(float(grad.sum(dim=1).abs().max()), 1e-12)

    def test_excluded_pixels_give_zero_gradient(self):
        """Все пиксели исключены маской или полосой border: градиент ровно 0."""
        model = init_detector(2).double()
        images, labels, _ = self._gradient_inputs(np.random.default_rng(7))
        cases = (
            (torch.zeros((2, 16, 16), dtype=torch.bool), 0),
            (torch.ones((2, 16, 16), dtype=torch.bool), 8),
        )
        for valid, border in cases:
            grads = backward(model, images, labels, valid, border=border)
            for name, grad in grads.items():
                self.assertEqual(int(torch.count_nonzero(grad)), 0, f"border={border} {name}")


class TestAdam(unittest.TestCase):
    """Тесты шага Adam."""

    def _model(self):
        model = init_detector(0)
        return model, make_optimizer(model, TrainConfig(lr=1e-3))

    def test_zero_gradient_keeps_parameters(self):
        model, optimizer = self._model()
        before = {n: p.detach().clone() for n, p in model.named_parameters()}
        adam_step(model, optimizer, {n: torch.zeros_like(p) for n, p in model.named_parameters()})
        for name, param in model.named_parameters():
            self.assertTrue(torch.equal(param, before[name]), name)
        self.assertEqual(int(float(optimizer.state[model.head.weight]["step"])), 1)

    def test_first_step_magnitude_is_lr(self):
        model, optimizer = self._model()
        before = model.head.bias.detach().clone()
        adam_step(model, optimizer, {n: torch.full_like(p, 0.5) for n, p in model.named_parameters()})
        torch.testing.assert_close(before - model.head.bias.detach(), torch.full_like(before, 1e-3), rtol=1e-4, atol=0)

    def test_non_finite_gradient(self):
        model, optimizer = self._model()
        grads = {n: torch.zeros_like(p) for n, p in model.named_parameters()}
        grads["head.weight"][0, 0, 0, 0] = float("nan")
        with self.assertRaises(TrainingError) as ctx:
            adam_step(model, optimizer, grads)
        self.assertEqual(ctx.exception.code, ErrorCode.TRAINING_NON_FINITE_GRADIENT)
        self.assertEqual(ctx.exception.context["parameter"], "head.weight")

    def test_quadratic_decreases(self):
        """10 шагов на квадратичной функции: потеря строго убывает."""
        weight = torch.nn.Parameter(torch.tensor([3.0]))
        optimizer = torch.optim.Adam([weight], lr=0.1)
        losses = []
        for _ in range(10):
            optimizer.zero_grad()
            loss = (weight ** 2).sum()
            loss.backward()
            losses.append(float(loss))
            optimizer.step()
        self.assertTrue(all(a > b for a, b in zip(losses, losses[1:])))


class TestAugment(unittest.TestCase):
    """Тесты аугментаций."""

    def test_disabled_is_identity(self):
        image = np.random.default_rng(6).random((32, 32))
        label = _label((32, 32), [(10, 12)])
        out, out_label = augment(image, label, AugmentConfig(enabled=False), np.random.default_rng(0))
        np.testing.assert_array_equal(out, image)
        np.testing.assert_array_equal(out_label.mask, label.mask)
        np.testing.assert_array_equal(out_label.valid, label.valid)

    def test_brightness_keeps_mask(self):
        image = np.full((32, 32), 0.5)
        label = _label((32, 32), [(10, 12)])
        params = AugmentParams(homography=np.eye(3), brightness=0.1)
        out, out_label = apply_augmentation(image, label, params, np.random.default_rng(0))
        np.testing.assert_allclose(out, 0.6)
        np.testing.assert_array_equal(out_label.mask, label.mask)

    def test_warp_moves_keypoint(self):
        """Ключевая точка переносится в округленный warp_homography(p)."""
        angle = np.radians(10.0)
        H = np.array([[np.cos(angle), -np.sin(angle), 3.0], [np.sin(angle), np.cos(angle), -2.0], [0.0, 0.0, 1.0]])
        label = _label((64, 64), [(30, 25)])
        warped = warp_label(label, H, border=4)
        expected = np.rint(warp_homography([30.0, 25.0], H)).astype(int)
        rows, cols = np.nonzero(warped.mask)
        self.assertEqual((cols.tolist(), rows.tolist()), ([expected[0]], [expected[1]]))
        self.assertFalse(warped.valid.all())

    def test_warped_keypoint_on_invalid_pixel_dropped(self):
        H = np.array([[1.0, 0.0, 3.0], [0.0, 1.0, 2.0], [0.0, 0.0, 1.0]])
        label = _label((64, 64), [(30, 25), (40, 40)])
        label.valid[25, 30] = False
        warped = warp_label(label, H, border=4)
        self.assertFalse(warped.valid[27, 33])
        rows, cols = np.nonzero(warped.mask)
        self.assertEqual((cols.tolist(), rows.tolist()), ([43], [42]))

    def test_warped_keypoints_lie_on_valid_pixels(self):
        """Случайные гомографии и дыры в valid: перенесенная маска точек внутри перенесенной valid."""
        generator = np.random.default_rng(11)
        for _ in range(30):
            points = [tuple(p) for p in generator.integers(4, 60, size=(40, 2)).tolist()]
            label = _label((64, 64), points)
            top, left = generator.integers(0, 48, size=2)
            label.valid[top:top + 16, left:left + 16] = False
            label.mask &= label.valid
            H = random_homography(AugmentConfig(), (64, 64), generator)
            warped = warp_label(label, H, border=4)
            self.assertFalse(np.any(warped.mask & ~warped.valid))


class TestTraining(unittest.TestCase):
    """Тесты цикла обучения."""

    def _sample(self):
        generator = np.random.default_rng(7)
        image = generator.random((32, 32))
        return image, _label((32, 32), [(8, 8), (20, 12), (14, 24)])

    def test_overfit_single_sample(self):
        """Один образец: потеря падает не менее чем вдвое."""
        cfg = TrainConfig(epochs=200, batch_size=1, lr=1e-2)
        model = init_detector(0)
        result = train([self._sample()], model, make_optimizer(model, cfg), cfg, AugmentConfig(enabled=False), seed=0)
        self.assertEqual(len(result.epoch_losses), 200)
        self.assertLessEqual(result.final_loss, 0.5 * result.epoch_losses[0])

    def test_deterministic(self):
        cfg = TrainConfig(epochs=3, batch_size=2, lr=1e-3)
        losses = []
        for _ in range(2):
            model = init_detector(1)
            result = train([self._sample()] * 3, model, make_optimizer(model, cfg), cfg, AugmentConfig(), seed=4)
            losses.append(result.final_loss)
        self.assertEqual(losses[0], losses[1])

    def test_empty_dataset(self):
        cfg = TrainConfig(epochs=1)
        model = init_detector(0)
        with self.assertRaises(TrainingError) as ctx:
            train([], model, make_optimizer(model, cfg), cfg, AugmentConfig(), seed=0)
        self.assertEqual(ctx.exception.code, ErrorCode.TRAINING_EMPTY_DATASET)


class TestCheckpoint(unittest.TestCase):
    """Тесты формата чекпоинта."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / "iter_001.ckpt"

    def tearDown(self):
        self.tmp.cleanup()

    def _trained(self):
        cfg = TrainConfig(epochs=2, batch_size=1, lr=1e-3)
        model = init_detector(2)
        optimizer = make_optimizer(model, cfg)
        image = np.random.default_rng(8).random((16, 16))
        train([(image, _label((16, 16), [(8, 8)]))], model, optimizer, cfg, AugmentConfig(enabled=False), seed=0)
        return model, optimizer

    def test_round_trip_is_bitwise(self):
        model, optimizer = self._trained()
        save_checkpoint(self.path, model, optimizer, iteration=3)
        restored = HeatmapDetector()
        restored_optimizer = make_optimizer(restored, TrainConfig())
        self.assertEqual(load_checkpoint(self.path, restored, restored_optimizer), 3)
        original = model.state_dict()
        for name, tensor in restored.state_dict().items():
            if not name.endswith("num_batches_tracked"):
                self.assertTrue(torch.equal(tensor, original[name]), name)
        for p, q in zip(model.parameters(), restored.parameters()):
            self.assertTrue(torch.equal(optimizer.state[p]["exp_avg"], restored_optimizer.state[q]["exp_avg"]))
        self.assertFalse(self.path.with_name(self.path.name + ".tmp").exists())

    def test_bad_magic(self):
        self.path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
        with self.assertRaises(CheckpointError) as ctx:
            load_checkpoint(self.path, HeatmapDetector())
        self.assertEqual(ctx.exception.code, ErrorCode.CHECKPOINT_BAD_MAGIC)

    def test_truncated(self):
        save_checkpoint(self.path, init_detector(0))
        data = self.path.read_bytes()
        self.assertTrue(data.startswith(MAGIC))
        self.path.write_bytes(data[:len(data) // 2])
        with self.assertRaises(CheckpointError) as ctx:
            load_checkpoint(self.path, HeatmapDetector())
        self.assertEqual(ctx.exception.code, ErrorCode.CHECKPOINT_TRUNCATED)

    def test_architecture_mismatch(self):
        save_checkpoint(self.path, init_detector(0))
        data = self.path.read_bytes().replace(b"sedm-heatmap/v1", b"sedm-heatmap/v9")
        self.path.write_bytes(data)
        with self.assertRaises(CheckpointError) as ctx:
            load_checkpoint(self.path, HeatmapDetector())
        self.assertEqual(ctx.exception.code, ErrorCode.CHECKPOINT_ARCH_MISMATCH)


if __name__ == '__main__':
    unittest.main()
