"""Flags and helpers shared by every subcommand."""

import argparse
from pathlib import Path

from pmgan.core.config import settings

DATASET_FILE = "dataset.pmfd"
CHECKPOINT_FILE = "checkpoint.pmgk"
METRICS_FILE = "metrics.prom"


def add_common(parser: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        parser.add_argument(
            "--config", type=Path, default=None, help="key=value config file or run manifest"
        )
    parser.add_argument(
        "--out", type=Path, default=None, help="output directory (default: $PMGAN_OUTPUT_DIR)"
    )


def output_dir(args: argparse.Namespace) -> Path:
    path = Path(args.out) if args.out is not None else Path(settings.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def manifest_path(out: Path, command: str) -> Path:
    return out / f"{command}.manifest.json"
