from pmgan.schemas.configs import (
    LossWeights,
    ModelSpec,
    NoiseSpec,
    SynthConfig,
    TrainConfig,
    validated,
)
from pmgan.schemas.modes import ModalityMode
from pmgan.schemas.reports import EpochRecord, EvalReport, GradcheckEntry, RunManifest

__all__ = [
    "EpochRecord",
    "EvalReport",
    "GradcheckEntry",
    "LossWeights",
    "ModalityMode",
    "ModelSpec",
    "NoiseSpec",
    "RunManifest",
    "SynthConfig",
    "TrainConfig",
    "validated",
]
