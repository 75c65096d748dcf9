"""``pmgan train``: alternating training on a dataset file."""

import argparse
from pathlib import Path

from structlog import get_logger

from pmgan.cli.common import (
    CHECKPOINT_FILE,
    DATASET_FILE,
    METRICS_FILE,
    add_common,
    manifest_path,
    output_dir,
)
from pmgan.cli.config_loader import (
    SOURCE_ARTIFACT,
    SOURCE_CHECKPOINT,
    SOURCE_DEFAULT,
    TRAIN_DEFAULTS,
    TRAIN_OPTIONS,
    build_train_config,
    resolve,
    train_config_values,
)
from pmgan.cli.manifest import RunRecorder
from pmgan.core.metrics import MetricsCollector
from pmgan.services.synthdata import load_dataset
from pmgan.services.trainer import Trainer, train_heads

logger = get_logger(__name__)

NAME = "train"
LOG_FILE = "train_log.csv"


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(NAME, help="train the generator, discriminator and heads")
    parser.add_argument("--dataset", type=Path, default=None, help="PMFD dataset file")
    parser.add_argument(
        "--resume", type=Path, default=None, help="continue from a checkpoint's training state"
    )
    for option in TRAIN_OPTIONS:
        option.add_to(parser)
    add_common(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    resolved = resolve(TRAIN_DEFAULTS, args, args.config)
    config = build_train_config(resolved)

    out = output_dir(args)
    dataset_path = args.dataset or out / DATASET_FILE
    dataset = load_dataset(dataset_path)
    # Shapes come from the dataset; echoed for reference, never read back as config.
    resolved.record("clips", dataset.config.clips, SOURCE_ARTIFACT)
    resolved.record("class_count", dataset.config.class_count, SOURCE_ARTIFACT)

    recorder = RunRecorder(NAME, resolved, seed=config.seed)
    recorder.artifact("dataset", dataset_path)
    metrics = MetricsCollector()

    if args.resume is not None:
        trainer = Trainer.resume(args.resume, dataset, metrics=metrics)
        if resolved.sources["epochs"] != SOURCE_DEFAULT:
            # An explicit epoch count moves the target of the resumed run.
            trainer.config = trainer.config.model_copy(update={"epochs": config.epochs})
        recorder.seed = trainer.config.seed
        recorder.artifact("resumed_from", args.resume)
        for key, value in train_config_values(trainer.config).items():
            resolved.record(key, value, SOURCE_CHECKPOINT)
    else:
        trainer = Trainer(dataset, config, metrics=metrics)
    log = trainer.run()
    heads = {}
    if trainer.config.train_single_heads:
        heads = train_heads(dataset, trainer.params, trainer.config)

    recorder.artifact("checkpoint", trainer.checkpoint(out / CHECKPOINT_FILE, heads=heads))
    recorder.artifact("train_log", log.write_csv(out / LOG_FILE))
    written = metrics.write(out / METRICS_FILE)
    if written is not None:
        recorder.artifact("metrics", written)
    recorder.finish(manifest_path(out, NAME))

    if len(log):
        last = log[-1]
        print(
            f"epoch {last.epoch}: L_G={last.loss_g:.4f} L_D={last.loss_d:.4f} "
            f"moment_distance={last.moment_distance:.4f}"
        )
    print(f"checkpoint {out / CHECKPOINT_FILE}")
    return 0
