"""
Тесты иерархии исключений.
"""

import logging
import unittest

from src.utils.exceptions import (
    ConfigError,
    DatasetError,
    ErrorCode,
    PipelineError,
    SedmError,
    ValidationError,
    VoxelError,
    create_error_summary,
    handle_exception,
)
from src.utils.logger import kv


class TestSedmError(unittest.TestCase):
    """Тесты базового исключения."""

    def test_str_contains_code(self):
        error = SedmError("boom", code=ErrorCode.CHECKPOINT_BAD_MAGIC)
        self.assertEqual(str(error), "boom [Code: 1501]")

    def test_default_codes(self):
        self.assertEqual(DatasetError("x").code, ErrorCode.DATASET_MISSING_FILE)
        self.assertEqual(VoxelError("x").code, ErrorCode.VOXEL_DIMENSION_MISMATCH)
        self.assertEqual(ValidationError("x", code=ErrorCode.VALIDATION_RANGE_ERROR).code,
                         ErrorCode.VALIDATION_RANGE_ERROR)

    def test_fields_go_to_context(self):
        """Поля со значением None в контекст не попадают."""
        error = ValidationError("bad", context={"scene": "a"}, field_name="period", invalid_value=0, expected=None)
        self.assertEqual(error.context, {"scene": "a", "field_name": "period", "invalid_value": 0})

    def test_to_dict(self):
        original = OSError("disk")
        error = DatasetError("no file", path="/tmp/x.pgm", original_error=original)
        data = error.to_dict()
        self.assertEqual(data["error_type"], "DatasetError")
        self.assertEqual(data["code_name"], "DATASET_MISSING_FILE")
        self.assertEqual(data["context"], {"path": "/tmp/x.pgm"})
        self.assertEqual(data["original_error"], "disk")

    def test_user_message_has_context(self):
        error = ConfigError("bad", invalid_values={"grid.extent": "expected > 0"})
        message = error.get_user_message()
        self.assertTrue(message.startswith("bad [Code: 1002]"))
        self.assertIn("grid.extent", message)

    def test_pipeline_error_stage(self):
        """Сбой стадии: имя стадии в атрибуте, в контексте и в сообщении."""
        error = PipelineError("failed", stage="train", iteration=2, scene="scene_000")
        self.assertEqual(error.stage, "train")
        self.assertEqual(error.context, {"stage": "train", "iteration": 2, "scene": "scene_000"})
        self.assertEqual(error.code, ErrorCode.PIPELINE_STAGE_FAILED)
        self.assertTrue(str(error).startswith("[train] failed"))

    def test_log_error_level(self):
        logger = logging.getLogger("tests.exceptions")
        with self.assertLogs(logger, level="DEBUG") as logs:
            PipelineError("x", stage="render").log_error(logger)
            DatasetError("y").log_error(logger)
            ValidationError("z").log_error(logger)
        self.assertEqual([r.levelname for r in logs.records], ["CRITICAL", "ERROR", "WARNING"])
        self.assertIn("code=PIPELINE_STAGE_FAILED", logs.output[0])
        self.assertEqual(logs.records[1].error_details["code"], 1201)


class TestHandleException(unittest.TestCase):
    """Тесты обработки непредвиденных исключений."""

    def setUp(self):
        self.logger = logging.getLogger("tests.handle")

    def test_passthrough(self):
        original = ConfigError("bad")
        with self.assertLogs(self.logger, level="DEBUG"):
            self.assertIs(handle_exception(original, self.logger), original)

    def test_unknown(self):
        original = RuntimeError("x")
        with self.assertLogs(self.logger, level="ERROR"):
            error = handle_exception(original, self.logger, {"command": "train"})
        self.assertEqual(error.code, ErrorCode.UNKNOWN_ERROR)
        self.assertIs(error.original_error, original)
        self.assertEqual(error.context, {"command": "train"})
        self.assertIn("RuntimeError: x", str(error))


class TestErrorSummary(unittest.TestCase):
    """Тесты сводки ошибок."""

    def test_empty(self):
        self.assertEqual(create_error_summary([]), {"total": 0, "by_code": {}})

    def test_counts(self):
        errors = [DatasetError("a"), DatasetError("b"), ConfigError("c")]
        self.assertEqual(create_error_summary(errors),
                         {"total": 3, "by_code": {"DATASET_MISSING_FILE": 2, "CONFIG_INVALID_VALUE": 1}})


class TestKv(unittest.TestCase):
    """Тесты форматирования событий лога."""

    def test_order_and_quoting(self):
        self.assertEqual(
            kv("em_iter", iteration=1, loss=0.123456789, scene="a b", empty=""),
            'event=em_iter iteration=1 loss=0.123457 scene="a b" empty=""'
        )


if __name__ == '__main__':
    unittest.main()
