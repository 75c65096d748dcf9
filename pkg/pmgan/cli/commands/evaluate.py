"""``pmgan eval``: modality ablation of a trained checkpoint."""

import argparse
from pathlib import Path

from structlog import get_logger

from pmgan.cli.common import (
    CHECKPOINT_FILE,
    DATASET_FILE,
    add_common,
    manifest_path,
    output_dir,
)
from pmgan.cli.config_loader import SOURCE_ARTIFACT, Option, coerce, resolve
from pmgan.cli.manifest import RunRecorder
from pmgan.core.errors import ConfigurationError
from pmgan.models.checkpoint import load_checkpoint
from pmgan.schemas.modes import TABLE_ORDER, ModalityMode
from pmgan.services.evalharness import AblationTable, evaluate, write_confusion_csv
from pmgan.services.synthdata import load_dataset
from pmgan.services.trainer import ModelSuite

logger = get_logger(__name__)

NAME = "eval"
SPLITS = ("test", "train")
DEFAULTS = {"seed": 0, "test_noise": False, "split": "test"}
OPTIONS = [
    Option("seed", "--seed", int, "seed of the test-time noise draw"),
    Option("test_noise", "--test-noise", help="draw generator noise at test time", const=True),
    Option("split", "--split", str, "dataset split to evaluate (test or train)"),
]


def _truthy(value: object) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(value)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(NAME, help="evaluate one or all modality modes")
    parser.add_argument("--checkpoint", type=Path, default=None, help="PMGK checkpoint file")
    parser.add_argument("--dataset", type=Path, default=None, help="PMFD dataset file")
    modes = parser.add_mutually_exclusive_group()
    modes.add_argument(
        "--mode", choices=[m.value for m in ModalityMode], default=None, help="evaluate one mode"
    )
    modes.add_argument("--all", action="store_true", help="evaluate all five modes")
    for option in OPTIONS:
        option.add_to(parser)
    add_common(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    resolved = resolve(DEFAULTS, args, args.config)
    seed = coerce(resolved, "seed", int)
    test_noise = coerce(resolved, "test_noise", _truthy)
    split_name = resolved["split"]
    if split_name not in SPLITS:
        raise ConfigurationError(f"split must be one of {SPLITS}, got '{split_name}'")

    out = output_dir(args)
    checkpoint_path = args.checkpoint or out / CHECKPOINT_FILE
    dataset_path = args.dataset or out / DATASET_FILE
    saved = load_checkpoint(checkpoint_path)
    dataset = load_dataset(dataset_path)
    samples = dataset.test if split_name == "test" else dataset.train

    modes = list(TABLE_ORDER) if args.all or args.mode is None else [ModalityMode(args.mode)]
    resolved.record("modes", [m.value for m in modes], SOURCE_ARTIFACT)

    recorder = RunRecorder(NAME, resolved, seed=seed)
    recorder.artifact("checkpoint", checkpoint_path)
    recorder.artifact("dataset", dataset_path)

    suite = ModelSuite(saved.params, saved.heads)
    echo = {"checkpoint": str(checkpoint_path), "dataset": str(dataset_path), "split": split_name}
    table = AblationTable(
        tuple(
            evaluate(suite, samples, mode, seed=seed, test_noise=test_noise, config=echo)
            for mode in modes
        )
    )
    for report in table.reports:
        recorder.artifact(
            f"confusion.{report.mode}",
            write_confusion_csv(report, out / f"confusion_{report.mode}.csv"),
        )
    table_name = "ablation.csv" if len(modes) > 1 else f"eval_{modes[0].value}.csv"
    recorder.artifact("report", table.write_csv(out / table_name))
    recorder.finish(manifest_path(out, NAME))

    print(table.render())
    return 0
