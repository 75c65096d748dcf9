"""``pmgan synth``: write a synthetic paired dataset."""

import argparse

from structlog import get_logger

from pmgan.cli.common import DATASET_FILE, add_common, manifest_path, output_dir
from pmgan.cli.config_loader import (
    SYNTH_DEFAULTS,
    SYNTH_OPTIONS,
    Option,
    build_synth_config,
    coerce,
    resolve,
)
from pmgan.cli.manifest import RunRecorder
from pmgan.services.synthdata import save_dataset, synthesize_shifted

logger = get_logger(__name__)

NAME = "synth"
DEFAULTS = {**SYNTH_DEFAULTS, "shift_scale": 0.0}
OPTIONS = SYNTH_OPTIONS + [
    Option("shift_scale", "--shift-scale", float, "displace test-class means (covariate shift)"),
]


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(NAME, help="synthesize a paired infrared/visible dataset")
    for option in OPTIONS:
        option.add_to(parser)
    add_common(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    resolved = resolve(DEFAULTS, args, args.config)
    config = build_synth_config(resolved)
    shift_scale = coerce(resolved, "shift_scale", float)

    out = output_dir(args)
    recorder = RunRecorder(NAME, resolved, seed=config.seed)
    split = synthesize_shifted(config, shift_scale)
    path = recorder.artifact("dataset", save_dataset(split, out / DATASET_FILE))
    recorder.finish(manifest_path(out, NAME))

    print(
        f"dataset {path}: {config.class_count} classes, "
        f"{len(split.train)} train / {len(split.test)} test samples"
    )
    return 0
