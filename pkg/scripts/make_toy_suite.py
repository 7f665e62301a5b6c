"""
Подготовка игрового набора SEDM: toy.cfg и сцены 4 × 30 ракурсов 128×128.

После выполнения: ``sedm train --config toy/toy.cfg``.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.config.config_manager import ConfigManager  # noqa: E402
from src.main import main as sedm_main  # noqa: E402
from src.utils.logger import setup_logger  # noqa: E402


def write_toy_config(root: Path, seed: int) -> Path:
    """Запись toy.cfg в каталог набора."""
    config = ConfigManager().get_em_config()
    config.data.n_scenes = 4
    config.data.n_views = 30
    config.data.width = 128
    config.data.height = 128
    config.data.scenes = [str(root / "data")]
    config.schedule.n_iterations = 3
    config.schedule.L_schedule = [107, 91, 64]
    config.runtime.seed = seed
    config.runtime.out_dir = str(root / "run")

    path = root / "toy.cfg"
    path.write_text(ConfigManager.dump(config), encoding="utf-8")
    return path


def main() -> int:
    parser = argparse.ArgumentParser(description="Create the SEDM toy suite")
    parser.add_argument("--root", default="toy", help="Каталог набора")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    logger = setup_logger(__name__)
    root = Path(args.root)
    root.mkdir(parents=True, exist_ok=True)

    config_path = write_toy_config(root, args.seed)
    logger.info(f"event=toy_config path={config_path}")

    code = sedm_main(["gen", "--config", str(config_path), "--out", str(root / "data")])
    if code == 0:
        logger.info(f"event=toy_ready train=\"sedm train --config {config_path}\"")
    return code


if __name__ == "__main__":
    sys.exit(main())
