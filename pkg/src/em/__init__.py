"""
EM-цикл: ожидание (воксели, повторяемость) и максимизация (псевдо-разметка, обучение).
"""

from .em_loop import (
    CHECKPOINT_PATTERN,
    METRICS_FILE,
    RESOLVED_CONFIG_FILE,
    em_iteration,
    eval_repeatability,
    expectation,
    init,
    latest_checkpoint,
    load_scenes,
    maximization,
    read_metrics,
    resume,
    run,
    source_repeatability,
)
from .models import METRIC_COLUMNS, EmState, IterationMetrics, SceneData
from .monitor import RunMonitor

__all__ = [
    'CHECKPOINT_PATTERN',
    'METRICS_FILE',
    'METRIC_COLUMNS',
    'RESOLVED_CONFIG_FILE',
    'RunMonitor',
    'EmState',
    'IterationMetrics',
    'SceneData',
    'em_iteration',
    'eval_repeatability',
    'expectation',
    'init',
    'latest_checkpoint',
    'load_scenes',
    'maximization',
    'read_metrics',
    'resume',
    'run',
    'source_repeatability',
]
