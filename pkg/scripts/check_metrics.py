"""
Проверка каталога запуска SEDM: согласованность metrics.csv и чекпоинтов.

Использование: python scripts/check_metrics.py runs/sedm [--log logs/sedm.log] [--json]
                   [--acceptance [--config runs/sedm/resolved.cfg]]
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.config.config_manager import ConfigManager  # noqa: E402
from src.em.em_loop import RESOLVED_CONFIG_FILE  # noqa: E402
from src.em.monitor import RunMonitor  # noqa: E402
from src.utils.logger import setup_logger  # noqa: E402


def print_summary(report: dict) -> None:
    """Печать краткого отчета."""
    print("\n=== SEDM Run Report ===")
    print(f"Generated: {report['generated_at']}")
    print(f"Run: {report['out_dir']}")
    print(f"Overall Status: {report['overall_status'].upper()}")
    print(f"Iterations: {report['iterations']}")
    if report["last_metrics"]:
        print("\n--- Last Iteration ---")
        for key, value in report["last_metrics"].items():
            print(f"{key}: {value}")
    acceptance = report.get("acceptance")
    if acceptance and acceptance.get("checkpoint"):
        print(f"\n--- Acceptance ({acceptance['checkpoint']}) ---")
        for name in ("detector", "random"):
            print(f"{name}: repeatability {acceptance['repeatability'][name]:.4f}, "
                  f"illumination MMA@1px {acceptance['mma_1px'][name]:.4f}")
    if report["problems"]:
        print("\n--- Problems ---")
        for problem in report["problems"]:
            print(f"  {problem}")
    counts = report["log"].get("counts")
    if counts:
        print(f"\nLog: {counts['ERROR'] + counts['CRITICAL']} errors, {counts['WARNING']} warnings")


def main() -> int:
    parser = argparse.ArgumentParser(description="Check a SEDM run directory")
    parser.add_argument("out_dir", help="Каталог запуска")
    parser.add_argument("--log", help="Файл лога")
    parser.add_argument("--slack", type=float, default=0.02)
    parser.add_argument("--acceptance", action="store_true",
                        help="Сравнить последний чекпоинт со случайными точками")
    parser.add_argument("--config", help="Конфигурация запуска (по умолчанию resolved.cfg каталога)")
    parser.add_argument("--min-ratio", type=float, default=2.0)
    parser.add_argument("--min-mma", type=float, default=0.5)
    parser.add_argument("--json", action="store_true", help="Полный отчет в JSON")
    args = parser.parse_args()

    setup_logger("src", log_level="WARNING")
    out_dir = Path(args.out_dir)
    monitor = RunMonitor(out_dir, args.slack)
    report = monitor.report(Path(args.log) if args.log else None)

    if args.acceptance:
        config = ConfigManager(args.config or str(out_dir / RESOLVED_CONFIG_FILE)).get_em_config()
        acceptance = monitor.check_acceptance(config, args.min_ratio, args.min_mma)
        report["acceptance"] = acceptance
        if acceptance["problems"]:
            report["problems"].extend(acceptance["problems"])
            report["overall_status"] = "unhealthy"

    if args.json:
        print(json.dumps(report, indent=2, ensure_ascii=False))
    else:
        print_summary(report)
    return 0 if report["overall_status"] == "healthy" else 1


if __name__ == "__main__":
    sys.exit(main())
