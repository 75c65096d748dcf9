"""Alternating adversarial training of the generator and the discriminator/predictor."""

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np
import pandas as pd
from structlog import get_logger

from pmgan.core.errors import (
    AlternationError,
    ConfigurationError,
    ContractError,
    DimensionError,
    NonFiniteLossError,
)
from pmgan.core.metrics import MetricsCollector
from pmgan.engine.optim import AdamState, adam_step
from pmgan.engine.tensor import Tape, backward
from pmgan.models.checkpoint import Checkpoint, TrainingState, load_checkpoint, save_checkpoint
from pmgan.models.fusion import FeatureMap
from pmgan.models.network import (
    DISCRIMINATOR_KEYS,
    GENERATOR_KEYS,
    PmGanParams,
    SingleHeadParams,
    bind,
    discriminate,
    discriminator_losses,
    generate,
    loss_G,
    loss_single,
)
from pmgan.schemas.configs import ModelSpec, TrainConfig
from pmgan.schemas.modes import SINGLE_HEAD_MODES, ModalityMode
from pmgan.schemas.reports import EPOCH_COLUMNS, EpochRecord
from pmgan.services.synthdata import DatasetSplit, PairedSample, SampleArrays, fuse_samples

logger = get_logger(__name__)

# Guards the relative terms of moment_distance against an all-zero reference.
_MOMENT_FLOOR = 1e-12


class TrainLog:
    """Per-epoch records of one training run."""

    def __init__(self, records: Iterable[EpochRecord] = ()):
        self.records: list[EpochRecord] = list(records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[EpochRecord]:
        return iter(self.records)

    def __getitem__(self, index: int) -> EpochRecord:
        return self.records[index]

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch != self.records[-1].epoch + 1:
            raise ContractError(
                f"epoch {record.epoch} does not follow epoch {self.records[-1].epoch}"
            )
        self.records.append(record)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.records], columns=EPOCH_COLUMNS)

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path

    def deterministic_rows(self) -> list[tuple[float, ...]]:
        """Every field except wall time, which legitimately differs between runs."""
        columns = [c for c in EPOCH_COLUMNS if c != "wall_time_s"]
        return [tuple(getattr(r, c) for c in columns) for r in self.records]

    def as_dicts(self) -> list[dict[str, float]]:
        return [r.model_dump() for r in self.records]

    @classmethod
    def from_dicts(cls, rows: Iterable[dict[str, float]]) -> "TrainLog":
        return cls(EpochRecord(**row) for row in rows)


MapSet = Union[np.ndarray, Sequence[FeatureMap]]


def _as_matrix(maps: MapSet, name: str) -> np.ndarray:
    if isinstance(maps, np.ndarray):
        values = maps
    else:
        if not maps:
            raise ContractError(f"{name} feature set is empty")
        shapes = {m.shape for m in maps}
        if len(shapes) != 1:
            raise DimensionError(f"{name} maps have heterogeneous shapes", sorted(shapes))
        values = np.stack([m.values for m in maps])
    if values.ndim != 4 or values.shape[0] == 0:
        raise DimensionError(f"{name} feature set must be a non-empty N x H x W x D stack", [values.shape])
    return values.reshape(values.shape[0], -1)


def moment_distance(real_maps: MapSet, fake_maps: MapSet) -> float:
    """Relative distance of the means plus relative distance of the covariances.

    ``||mu_f - mu_r|| / ||mu_r|| + ||S_f - S_r||_F / ||S_r||_F`` over flattened
    maps, with population (1/N) covariances.
    """
    real = _as_matrix(real_maps, "real")
    fake = _as_matrix(fake_maps, "fake")
    if real.shape[1] != fake.shape[1]:
        raise DimensionError("real and fake maps differ in size", [real.shape, fake.shape])

    mu_r, mu_f = real.mean(axis=0), fake.mean(axis=0)
    cov_r = np.cov(real, rowvar=False, bias=True).reshape(real.shape[1], real.shape[1])
    cov_f = np.cov(fake, rowvar=False, bias=True).reshape(fake.shape[1], fake.shape[1])

    mean_term = np.linalg.norm(mu_f - mu_r) / max(np.linalg.norm(mu_r), _MOMENT_FLOOR)
    cov_term = np.linalg.norm(cov_f - cov_r) / max(np.linalg.norm(cov_r), _MOMENT_FLOOR)
    return float(mean_term + cov_term)


def model_spec_for(dataset: DatasetSplit, config: TrainConfig) -> ModelSpec:
    synth = dataset.config
    return ModelSpec(
        height=synth.height,
        width=synth.width,
        channels=synth.channels,
        class_count=synth.class_count,
        clips=synth.clips,
        kernel_size=config.kernel_size,
        noise=config.noise,
    )


def _batches(count: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(count)
    return [order[i : i + batch_size] for i in range(0, count, batch_size)]


@dataclass
class _EpochTotals:
    samples: int = 0
    loss_g: float = 0.0
    loss_a: float = 0.0
    loss_p: float = 0.0
    loss_d: float = 0.0
    real_hits: float = 0.0
    fake_hits: float = 0.0

    def add(self, n: int, **values: float) -> None:
        self.samples += n
        for key, value in values.items():
            setattr(self, key, getattr(self, key) + n * value)

    def mean(self, key: str) -> float:
        return getattr(self, key) / self.samples


class Trainer:
    """Stateful training run that can be checkpointed and resumed bit-identically.

    Each mini-batch takes ``d_steps_per_g_step`` Adam steps on the discriminative
    loss (generator held constant) followed by one Adam step on the generative
    loss (discriminator and predictor held constant).
    """

    def __init__(
        self,
        dataset: DatasetSplit,
        config: TrainConfig,
        monitor: Optional[Sequence[PairedSample]] = None,
        metrics: Optional[MetricsCollector] = None,
    ):
        if not dataset.train:
            raise ConfigurationError("dataset has no training samples")
        self.dataset = dataset
        self.config = config
        self.spec = model_spec_for(dataset, config)
        self.metrics = metrics or MetricsCollector(enabled=False)

        self.train_arrays = fuse_samples(dataset.train)
        if monitor is None:
            monitor = dataset.test or dataset.train
        self.monitor_arrays = fuse_samples(monitor)

        self.rng = np.random.default_rng(config.seed)
        self.params = PmGanParams.initialize(self.spec, self.rng)
        self.d_optimizer = AdamState.for_params(
            self.params.discriminator_arrays(), **config.adam_hyper
        )
        self.g_optimizer = AdamState.for_params(self.params.generator_arrays(), **config.adam_hyper)
        self.epoch = 0
        self.log = TrainLog()

    @classmethod
    def resume(
        cls,
        path: Path,
        dataset: DatasetSplit,
        monitor: Optional[Sequence[PairedSample]] = None,
        metrics: Optional[MetricsCollector] = None,
    ) -> "Trainer":
        """Rebuild a trainer from a checkpoint written by :meth:`checkpoint`."""
        saved = load_checkpoint(path)
        if saved.state is None or saved.train_config is None:
            raise ConfigurationError(f"{path}: checkpoint carries no training state")
        trainer = cls(dataset, saved.train_config, monitor=monitor, metrics=metrics)
        if trainer.spec != saved.params.spec:
            raise DimensionError(
                "checkpoint model does not fit the dataset",
                [saved.params.spec.map_shape, trainer.spec.map_shape],
            )
        trainer.params = saved.params
        trainer.d_optimizer = saved.state.d_optimizer
        trainer.g_optimizer = saved.state.g_optimizer
        trainer.rng.bit_generator.state = saved.state.rng_state
        trainer.epoch = saved.state.epoch
        trainer.log = TrainLog.from_dicts(saved.state.log)
        logger.info("training resumed", path=str(path), epoch=trainer.epoch)
        return trainer

    def checkpoint(self, path: Path, heads: Optional[dict[str, SingleHeadParams]] = None) -> Path:
        state = TrainingState(
            epoch=self.epoch,
            rng_state=self.rng.bit_generator.state,
            d_optimizer=self.d_optimizer,
            g_optimizer=self.g_optimizer,
            log=self.log.as_dicts(),
        )
        return save_checkpoint(
            path,
            Checkpoint(
                params=self.params,
                weights=self.config.loss_weights,
                heads=heads or {},
                train_config=self.config,
                state=state,
            ),
        )

    def run(self, epochs: Optional[int] = None) -> TrainLog:
        """Train ``epochs`` more epochs, or up to ``config.epochs`` when omitted."""
        target = self.config.epochs if epochs is None else self.epoch + epochs
        while self.epoch < target:
            self._run_epoch()
        return self.log

    # Internals

    def _check_finite(self, batch: int, **losses: float) -> None:
        for component, value in losses.items():
            if not math.isfinite(value):
                raise NonFiniteLossError(self.epoch + 1, batch, component, value)

    def _check_unchanged(self, before: str, keys: Sequence[str], player: str, batch: int) -> None:
        if self.params.digest(keys) != before:
            raise AlternationError(
                f"{player} parameters changed during the other player's update "
                f"(epoch {self.epoch + 1}, batch {batch})"
            )

    def _discriminator_step(self, batch: SampleArrays, index: int) -> dict[str, float]:
        verify = self.config.verify_alternation
        frozen = self.params.digest(GENERATOR_KEYS) if verify else ""

        fake = generate(batch.infrared, self.params, rng=self.rng)
        tape = Tape()
        bound = bind(self.params.arrays(), tape, watch=DISCRIMINATOR_KEYS)
        losses = discriminator_losses(
            batch.visible, batch.infrared, fake, batch.labels, self.config.loss_weights, bound
        )
        values = {
            "loss_a": losses.adversarial.item(),
            "loss_p": losses.predictive.item(),
            "loss_d": losses.total.item(),
        }
        self._check_finite(index, **values)

        real_prob = discriminate(batch.visible, self.params).data
        fake_prob = discriminate(fake, self.params).data
        values["real_hits"] = float(np.mean(real_prob > 0.5))
        values["fake_hits"] = float(np.mean(fake_prob < 0.5))

        grads = backward(tape, losses.total)
        updated, self.d_optimizer = adam_step(
            self.params.discriminator_arrays(), grads, self.d_optimizer
        )
        self.params = self.params.replace(updated)
        if verify:
            self._check_unchanged(frozen, GENERATOR_KEYS, "generator", index)
        return values

    def _generator_step(self, batch: SampleArrays, index: int) -> float:
        verify = self.config.verify_alternation
        frozen = self.params.digest(DISCRIMINATOR_KEYS) if verify else ""

        tape = Tape()
        bound = bind(self.params.arrays(), tape, watch=GENERATOR_KEYS)
        loss = loss_G(
            batch.infrared,
            bound,
            noise=self.spec.noise,
            rng=self.rng,
            labels=batch.labels,
            gen_cls_feedback=self.config.gen_cls_feedback,
            w2=self.config.w2,
        )
        self._check_finite(index, loss_g=loss.item())

        grads = backward(tape, loss)
        updated, self.g_optimizer = adam_step(self.params.generator_arrays(), grads, self.g_optimizer)
        self.params = self.params.replace(updated)
        if verify:
            self._check_unchanged(frozen, DISCRIMINATOR_KEYS, "discriminator", index)
        return loss.item()

    def _run_epoch(self) -> EpochRecord:
        started = time.perf_counter()
        totals = _EpochTotals()
        d_steps = self.config.d_steps_per_g_step

        for index, rows in enumerate(_batches(len(self.train_arrays), self.config.batch_size, self.rng)):
            batch = self.train_arrays.take(rows)
            for _ in range(d_steps):
                d_values = self._discriminator_step(batch, index)
            loss_g = self._generator_step(batch, index)
            totals.add(len(rows), loss_g=loss_g, **d_values)
            self.metrics.record_batch(d_steps, 1)

        fake = generate(self.monitor_arrays.infrared, self.params).data
        distance = moment_distance(self.monitor_arrays.visible, fake)
        self.epoch += 1
        record = EpochRecord(
            epoch=self.epoch,
            loss_g=totals.mean("loss_g"),
            loss_a=totals.mean("loss_a"),
            loss_p=totals.mean("loss_p"),
            loss_d=totals.mean("loss_d"),
            d_real_accuracy=totals.mean("real_hits"),
            d_fake_accuracy=totals.mean("fake_hits"),
            moment_distance=distance,
            wall_time_s=time.perf_counter() - started,
        )
        self.log.append(record)

        self.metrics.record_epoch(
            {"g": record.loss_g, "a": record.loss_a, "p": record.loss_p, "d": record.loss_d},
            distance,
            record.wall_time_s,
        )
        logger.info(
            "epoch complete",
            epoch=record.epoch,
            loss_g=round(record.loss_g, 6),
            loss_d=round(record.loss_d, 6),
            d_real_accuracy=record.d_real_accuracy,
            d_fake_accuracy=record.d_fake_accuracy,
            moment_distance=round(distance, 6),
            wall_time_s=round(record.wall_time_s, 3),
        )
        return record


def train(
    dataset: DatasetSplit,
    config: TrainConfig,
    monitor: Optional[Sequence[PairedSample]] = None,
    metrics: Optional[MetricsCollector] = None,
) -> tuple[PmGanParams, TrainLog]:
    """Run ``config.epochs`` epochs from a fresh seeded initialization."""
    trainer = Trainer(dataset, config, monitor=monitor, metrics=metrics)
    log = trainer.run()
    return trainer.params, log


def train_single_head(
    features: np.ndarray,
    labels: np.ndarray,
    spec: ModelSpec,
    config: TrainConfig,
    rng: np.random.Generator,
) -> SingleHeadParams:
    """Fit one single-modality classifier head with the run's optimizer and budget."""
    if features.ndim != 4 or features.shape[1:] != spec.map_shape:
        raise DimensionError("head features must be N x H x W x D", [features.shape, spec.map_shape])
    if features.shape[0] != labels.shape[0]:
        raise DimensionError("features and labels disagree on N", [features.shape, labels.shape])

    head = SingleHeadParams.initialize(spec, rng)
    optimizer = AdamState.for_params(head.arrays(), **config.adam_hyper)
    for epoch in range(config.epochs):
        for index, rows in enumerate(_batches(features.shape[0], config.batch_size, rng)):
            tape = Tape()
            bound = bind(head.arrays(), tape, watch=head.arrays().keys())
            loss = loss_single(features[rows], labels[rows], bound)
            if not math.isfinite(loss.item()):
                raise NonFiniteLossError(epoch + 1, index, "loss_single", loss.item())
            updated, optimizer = adam_step(head.arrays(), backward(tape, loss), optimizer)
            head = SingleHeadParams.from_arrays(updated)
    return head


@dataclass
class ModelSuite:
    """A trained PM-GAN plus the single-modality heads keyed by mode value."""

    params: PmGanParams
    heads: dict[str, SingleHeadParams] = field(default_factory=dict)

    @property
    def spec(self) -> ModelSpec:
        return self.params.spec

    def head(self, mode: ModalityMode) -> SingleHeadParams:
        try:
            return self.heads[mode.value]
        except KeyError:
            raise ConfigurationError(f"no trained head for mode '{mode.value}'") from None


def head_features(mode: ModalityMode, arrays: SampleArrays, params: PmGanParams) -> np.ndarray:
    """Inputs a single-modality head sees for ``mode``."""
    if mode is ModalityMode.INFRARED_ONLY:
        return arrays.infrared
    if mode is ModalityMode.VISIBLE_ONLY:
        return arrays.visible
    if mode is ModalityMode.GENERATED_VISIBLE_ONLY:
        return generate(arrays.infrared, params).data
    raise ContractError(f"mode '{mode.value}' has no single head")


def train_heads(
    dataset: DatasetSplit, params: PmGanParams, config: TrainConfig
) -> dict[str, SingleHeadParams]:
    """Train the three single-modality heads; the generated head sees the frozen generator."""
    arrays = fuse_samples(dataset.train)
    heads = {}
    for offset, mode in enumerate(SINGLE_HEAD_MODES):
        rng = np.random.default_rng([config.seed, offset + 1])
        heads[mode.value] = train_single_head(
            head_features(mode, arrays, params), arrays.labels, params.spec, config, rng
        )
        logger.info("single head trained", mode=mode.value, epochs=config.epochs)
    return heads


def train_suite(
    dataset: DatasetSplit,
    config: TrainConfig,
    monitor: Optional[Sequence[PairedSample]] = None,
    metrics: Optional[MetricsCollector] = None,
    checkpoint_path: Optional[Path] = None,
) -> tuple[ModelSuite, TrainLog]:
    """Train the PM-GAN and, when enabled, the single-modality heads under the same budget."""
    trainer = Trainer(dataset, config, monitor=monitor, metrics=metrics)
    log = trainer.run()
    heads = train_heads(dataset, trainer.params, config) if config.train_single_heads else {}
    if checkpoint_path is not None:
        trainer.checkpoint(checkpoint_path, heads=heads)
    return ModelSuite(trainer.params, heads), log
