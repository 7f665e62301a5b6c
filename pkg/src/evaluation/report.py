"""
Запись результатов оценки: CSV-таблицы и PGM тепловых карт.

Схемы CSV фиксированы; строки с ``#`` в начале файла описывают способ
усреднения и пропускаются при чтении.
"""

import csv
from pathlib import Path
from typing import Dict, List, Union

from ..utils.logger import get_logger, kv
from ..utils.pgm import write_pgm
from .benchmark import SEQUENCES, EvaluationResults

logger = get_logger(__name__)

MMA_FILE = "mma.csv"
REPEATABILITY_FILE = "repeatability.csv"
LOC3D_FILE = "loc3d.csv"
HEATMAP_DIR = "heatmaps"
HEATMAP_PATTERN = "heatmap_%05d.pgm"

MMA_COLUMNS = ["source", "sequence", "threshold_px", "accuracy", "pairs"]
REPEATABILITY_COLUMNS = ["source", "eps_px", "repeatability", "n_pairs", "mean_keypoints"]
LOC3D_COLUMNS = ["source", "eps_px", "mean_error_m", "n_matches"]

MMA_NOTE = (
    "# accuracy = correct/total mutual-NN matches per pair, averaged over pairs; "
    "pairs without matches count as 0; mean = average of illumination and homography"
)


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def _write_csv(path: Path, columns: List[str], rows: List[List], comment: str = "") -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        if comment:
            handle.write(comment + "\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def report(results: EvaluationResults, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Запись mma.csv, repeatability.csv, loc3d.csv и heatmaps/*.pgm.

    Пустые результаты дают CSV только с заголовками.

    Returns:
        Имя файла → путь
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    mma_rows, rep_rows, loc_rows = [], [], []
    for name, result in results.sources.items():
        curves = {sequence: result.mma[sequence] for sequence in SEQUENCES if sequence in result.mma}
        if curves:
            curves["mean"] = result.mean_mma
        for sequence, accuracy in curves.items():
            pairs = result.n_pairs.get(sequence, sum(result.n_pairs.values()))
            for threshold, value in zip(result.thresholds, accuracy):
                mma_rows.append([name, sequence, int(threshold), _fmt(float(value)), pairs])
        rep_rows.append([name, _fmt(results.eps_px), _fmt(result.repeatability),
                         result.repeatability_pairs, _fmt(result.mean_keypoints)])
        loc_rows.append([name, _fmt(results.eps_px), _fmt(result.loc3d), result.loc3d_matches])

    paths = {
        MMA_FILE: out / MMA_FILE,
        REPEATABILITY_FILE: out / REPEATABILITY_FILE,
        LOC3D_FILE: out / LOC3D_FILE,
    }
    _write_csv(paths[MMA_FILE], MMA_COLUMNS, mma_rows, MMA_NOTE)
    _write_csv(paths[REPEATABILITY_FILE], REPEATABILITY_COLUMNS, rep_rows)
    _write_csv(paths[LOC3D_FILE], LOC3D_COLUMNS, loc_rows)

    for index, heatmap in enumerate(results.heatmaps):
        write_pgm(out / HEATMAP_DIR / (HEATMAP_PATTERN % index), heatmap)

    summary = results.error_summary()
    logger.info(kv("report_written", out=str(out), sources=len(results.sources),
                   heatmaps=len(results.heatmaps), failed_pairs=summary["total"]))
    return paths


def read_report_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    """Чтение CSV отчета в список словарей (строки-комментарии пропускаются)."""
    with open(path, newline="", encoding="utf-8") as handle:
        lines = [line for line in handle if not line.startswith("#")]
    return list(csv.DictReader(lines))
