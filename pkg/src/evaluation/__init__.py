"""
Оценка детектора: извлечение точек, повторяемость, MMA, 3D-ошибка, отчет.
"""

from .benchmark import (
    SEQUENCES,
    Benchmark,
    EvaluationResults,
    SourceResult,
    build_benchmark,
    evaluate,
    rotation_homography,
    warp_pair,
)
from .keypoints import (
    DetectorExtractor,
    HarrisBaseline,
    KeypointSet,
    KeypointSource,
    RandomKeypointBaseline,
    extract,
    extract_from_heatmap,
)
from .protocols import (
    Correspondences,
    ImagePair,
    MatchResult,
    MmaResult,
    describe,
    localization_error_3d,
    localization_errors,
    match_repeated,
    mean_localization_error,
    mma,
    multiview_repeatability,
    mutual_nn_match,
    pair_accuracy,
    patch_descriptor,
    repeatability_score,
    view_pairs,
)
from .report import read_report_csv, report

__all__ = [
    'SEQUENCES',
    'Benchmark',
    'Correspondences',
    'DetectorExtractor',
    'EvaluationResults',
    'HarrisBaseline',
    'ImagePair',
    'KeypointSet',
    'KeypointSource',
    'MatchResult',
    'MmaResult',
    'RandomKeypointBaseline',
    'SourceResult',
    'build_benchmark',
    'describe',
    'evaluate',
    'extract',
    'extract_from_heatmap',
    'localization_error_3d',
    'localization_errors',
    'match_repeated',
    'mean_localization_error',
    'mma',
    'multiview_repeatability',
    'mutual_nn_match',
    'pair_accuracy',
    'patch_descriptor',
    'read_report_csv',
    'report',
    'repeatability_score',
    'rotation_homography',
    'view_pairs',
]
