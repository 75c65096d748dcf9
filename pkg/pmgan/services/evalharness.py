"""Five-mode ablation, covariate-shift generalization and confusion matrices."""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import stats as scipy_stats
from structlog import get_logger

from pmgan.core.errors import ConfigurationError, ContractError, DimensionError, VisibleDataAccessError
from pmgan.core.metrics import MetricsCollector
from pmgan.models.fusion import ClipStack, sum_fuse_batch
from pmgan.models.network import PmGanParams, generate, predict, predict_single
from pmgan.schemas.configs import SynthConfig, TrainConfig
from pmgan.schemas.modes import TABLE_ORDER, ModalityMode
from pmgan.schemas.reports import EvalReport
from pmgan.services.synthdata import PairedSample, synthesize, synthesize_shifted
from pmgan.services.trainer import ModelSuite, TrainLog, train_suite

logger = get_logger(__name__)

CONFIDENCE_LEVEL = 0.95
# Minimum gain of fusion-generated over infrared counted as a reproduced ordering
ORDERING_MARGIN = 0.02


class WithheldSample:
    """A test sample whose visible stack cannot be read."""

    __slots__ = ("_sample",)

    def __init__(self, sample: PairedSample):
        self._sample = sample

    @property
    def sample_id(self) -> int:
        return self._sample.sample_id

    @property
    def infrared(self) -> ClipStack:
        return self._sample.infrared

    @property
    def label(self) -> np.ndarray:
        return self._sample.label

    @property
    def visible(self) -> ClipStack:
        raise VisibleDataAccessError(
            f"sample {self._sample.sample_id}: visible data is withheld during this evaluation"
        )


EvalSample = Union[PairedSample, WithheldSample]
Models = Union[ModelSuite, PmGanParams]


def withhold(samples: Sequence[EvalSample]) -> list[WithheldSample]:
    return [s if isinstance(s, WithheldSample) else WithheldSample(s) for s in samples]


def wilson_interval(
    successes: int, trials: int, confidence_level: float = CONFIDENCE_LEVEL
) -> tuple[float, float]:
    """Wilson score interval of a binomial proportion."""
    if trials == 0:
        return (0.0, 0.0)

    p_hat = successes / trials
    z = scipy_stats.norm.ppf((1 + confidence_level) / 2)

    denominator = 1 + z**2 / trials
    center = (p_hat + z**2 / (2 * trials)) / denominator
    margin = z * math.sqrt((p_hat * (1 - p_hat) + z**2 / (4 * trials)) / trials) / denominator

    return (max(0.0, center - margin), min(1.0, center + margin))


def _as_suite(models: Models) -> ModelSuite:
    return models if isinstance(models, ModelSuite) else ModelSuite(models)


def _check_compatible(suite: ModelSuite, samples: Sequence[EvalSample]) -> None:
    spec = suite.spec
    for sample in samples:
        if sample.infrared.values.shape[1:] != spec.map_shape:
            raise DimensionError(
                f"sample {sample.sample_id} does not fit the model",
                [sample.infrared.values.shape[1:], spec.map_shape],
            )
        if sample.label.shape != (spec.class_count,):
            raise DimensionError(
                f"sample {sample.sample_id} label does not match the class count",
                [sample.label.shape, (spec.class_count,)],
            )


def class_probabilities(
    models: Models,
    samples: Sequence[EvalSample],
    mode: ModalityMode,
    seed: int = 0,
    test_noise: bool = False,
) -> np.ndarray:
    """N x C class probabilities of ``mode``; modes without real visible input never read it."""
    suite = _as_suite(models)
    mode = ModalityMode(mode)
    if not mode.needs_real_visible:
        samples = withhold(samples)
    _check_compatible(suite, samples)

    f_inf = sum_fuse_batch(np.stack([s.infrared.values for s in samples]))
    rng = np.random.default_rng(seed) if test_noise else None

    if mode is ModalityMode.INFRARED_ONLY:
        return predict_single(f_inf, suite.head(mode)).data
    if mode.needs_real_visible:
        f_vis = sum_fuse_batch(np.stack([s.visible.values for s in samples]))
        if mode is ModalityMode.VISIBLE_ONLY:
            return predict_single(f_vis, suite.head(mode)).data
        return predict(f_inf, f_vis, suite.params).data

    f_g = generate(f_inf, suite.params, rng=rng)
    if mode is ModalityMode.GENERATED_VISIBLE_ONLY:
        return predict_single(f_g, suite.head(mode)).data
    return predict(f_inf, f_g, suite.params).data


def evaluate(
    models: Models,
    samples: Sequence[EvalSample],
    mode: ModalityMode,
    seed: int = 0,
    test_noise: bool = False,
    config: Optional[dict[str, Any]] = None,
    metrics: Optional[MetricsCollector] = None,
) -> EvalReport:
    """Accuracy and confusion matrix of one mode on a test set.

    Predictions are the argmax of the class probabilities; ties resolve to the
    lowest class index.
    """
    if not samples:
        raise ContractError("evaluation needs at least one test sample")
    mode = ModalityMode(mode)
    suite = _as_suite(models)
    class_count = suite.spec.class_count

    probs = class_probabilities(suite, samples, mode, seed=seed, test_noise=test_noise)
    predicted = np.argmax(probs, axis=1)
    truth = np.array([int(np.argmax(s.label)) for s in samples])

    confusion = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(confusion, (truth, predicted), 1)
    correct = int(np.trace(confusion))
    n_test = len(samples)
    ci_lower, ci_upper = wilson_interval(correct, n_test)

    report = EvalReport(
        mode=mode.value,
        accuracy=correct / n_test,
        confusion=confusion.tolist(),
        n_test=n_test,
        class_counts=confusion.sum(axis=1).tolist(),
        seed=seed,
        ci_lower=ci_lower,
        ci_upper=ci_upper,
        config=config or {},
    )
    if metrics is not None:
        metrics.record_accuracy(mode.value, report.accuracy)
    logger.info(
        "mode evaluated",
        mode=mode.value,
        accuracy=round(report.accuracy, 6),
        n_test=n_test,
        ci=(round(ci_lower, 4), round(ci_upper, 4)),
    )
    return report


def confusion_frame(report: EvalReport) -> pd.DataFrame:
    classes = list(range(len(report.confusion)))
    frame = pd.DataFrame(report.confusion, index=classes, columns=classes)
    frame.index.name = "class"
    return frame


def write_confusion_csv(report: EvalReport, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    confusion_frame(report).to_csv(path)
    return path


@dataclass(frozen=True)
class AblationTable:
    """One report per mode, in table row order."""

    reports: tuple[EvalReport, ...]

    def accuracy(self, mode: ModalityMode) -> float:
        return self.report(mode).accuracy

    def report(self, mode: ModalityMode) -> EvalReport:
        for report in self.reports:
            if report.mode == ModalityMode(mode).value:
                return report
        raise ConfigurationError(f"table has no row for mode '{ModalityMode(mode).value}'")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {"mode": r.mode, "accuracy": r.accuracy, "n_test": r.n_test, "seed": r.seed}
                for r in self.reports
            ],
            columns=["mode", "accuracy", "n_test", "seed"],
        )

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path

    def render(self) -> str:
        """Console table with the accuracy and its confidence interval per row."""
        width = max(len(ModalityMode(r.mode).label) for r in self.reports)
        lines = [f"{'modality':<{width}}  accuracy  95% interval     n"]
        for r in self.reports:
            label = ModalityMode(r.mode).label
            lines.append(
                f"{label:<{width}}  {100 * r.accuracy:7.2f}%  "
                f"[{100 * r.ci_lower:5.1f}, {100 * r.ci_upper:5.1f}]  {r.n_test:>4}"
            )
        return "\n".join(lines)


def ablation_table(
    models_by_mode: Union[ModelSuite, Mapping[ModalityMode, Models]],
    samples: Sequence[PairedSample],
    seed: int = 0,
    test_noise: bool = False,
    config: Optional[dict[str, Any]] = None,
    metrics: Optional[MetricsCollector] = None,
) -> AblationTable:
    """Evaluate every mode; a single suite serves all five rows."""
    if isinstance(models_by_mode, ModelSuite):
        models_by_mode = {mode: models_by_mode for mode in TABLE_ORDER}
    keyed = {ModalityMode(mode): models for mode, models in models_by_mode.items()}
    missing = [mode.value for mode in TABLE_ORDER if mode not in keyed]
    if missing:
        raise ConfigurationError(f"no trained model for modes {missing}")

    return AblationTable(
        tuple(
            evaluate(keyed[mode], samples, mode, seed, test_noise, config, metrics)
            for mode in TABLE_ORDER
        )
    )


def orderings(table: AblationTable, margin: float = ORDERING_MARGIN) -> dict[str, bool]:
    """Which of the expected qualitative orderings hold in ``table``."""
    acc = {mode: table.accuracy(mode) for mode in TABLE_ORDER}
    return {
        "fusion_generated_beats_infrared": (
            acc[ModalityMode.FUSION_GENERATED_VISIBLE] >= acc[ModalityMode.INFRARED_ONLY] + margin
        ),
        "fusion_real_at_least_fusion_generated": (
            acc[ModalityMode.FUSION_REAL_VISIBLE] >= acc[ModalityMode.FUSION_GENERATED_VISIBLE]
        ),
        "generated_beats_infrared": (
            acc[ModalityMode.GENERATED_VISIBLE_ONLY] > acc[ModalityMode.INFRARED_ONLY]
        ),
        "visible_beats_generated": (
            acc[ModalityMode.VISIBLE_ONLY] > acc[ModalityMode.GENERATED_VISIBLE_ONLY]
        ),
    }


@dataclass(frozen=True)
class GeneralizationResult:
    standard: AblationTable
    shifted: AblationTable
    shift_scale: float
    suite: ModelSuite
    log: TrainLog

    def degradation(self) -> dict[str, float]:
        """Accuracy lost per mode when moving to the shifted test set."""
        return {
            mode.value: self.standard.accuracy(mode) - self.shifted.accuracy(mode)
            for mode in TABLE_ORDER
        }


def generalization_eval(
    synth_config: SynthConfig,
    train_config: TrainConfig,
    shift_scale: float = 0.5,
    suite: Optional[ModelSuite] = None,
    metrics: Optional[MetricsCollector] = None,
) -> GeneralizationResult:
    """Train once, then tabulate the unshifted and the shifted test sets.

    Both splits share their training half for a given seed, so one suite serves both.
    """
    standard = synthesize(synth_config)
    shifted = synthesize_shifted(synth_config, shift_scale)
    log = TrainLog()
    if suite is None:
        suite, log = train_suite(standard, train_config, metrics=metrics)

    echo = {"synth": synth_config.model_dump(mode="json"), "train": train_config.model_dump(mode="json")}
    result = GeneralizationResult(
        standard=ablation_table(suite, standard.test, seed=synth_config.seed, config=echo),
        shifted=ablation_table(
            suite, shifted.test, seed=synth_config.seed, config={**echo, "shift_scale": shift_scale}
        ),
        shift_scale=shift_scale,
        suite=suite,
        log=log,
    )
    logger.info(
        "generalization evaluated",
        seed=synth_config.seed,
        shift_scale=shift_scale,
        degradation={k: round(v, 4) for k, v in result.degradation().items()},
    )
    return result
