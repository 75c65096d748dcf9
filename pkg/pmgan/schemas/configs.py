"""Configuration schemas."""

import math
from typing import Any, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from pmgan.core.errors import ConfigurationError

ModelT = TypeVar("ModelT", bound=BaseModel)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def validated(model_cls: type[ModelT], **values: Any) -> ModelT:
    """Build ``model_cls`` and report validation failures as ``ConfigurationError``."""
    try:
        return model_cls(**values)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or model_cls.__name__}: {err['msg']}"
            for err in exc.errors()
        )
        raise ConfigurationError(f"invalid {model_cls.__name__}: {problems}") from exc


class NoiseSpec(_Strict):
    """Optional Gaussian noise channels appended to the generator input."""

    enabled: bool = False
    channels: int = Field(default=1, ge=1)
    sigma: float = Field(default=1.0, ge=0.0)


class LossWeights(_Strict):
    """Weights of the adversarial and predictive terms of the discriminative loss."""

    w1: float = Field(default=0.1, ge=0.0)
    w2: float = Field(default=0.9, ge=0.0)


class ModelSpec(_Strict):
    """Shapes and architecture choices fixed for one trained model."""

    height: int = Field(ge=1)
    width: int = Field(ge=1)
    channels: int = Field(ge=1)
    class_count: int = Field(ge=2)
    clips: int = Field(default=5, ge=1)
    kernel_size: int = Field(default=3, ge=1)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)

    @field_validator("kernel_size")
    @classmethod
    def validate_kernel(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {v}")
        return v

    @property
    def map_shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)

    @property
    def flat_size(self) -> int:
        return self.height * self.width * self.channels


class SynthConfig(_Strict):
    """Synthetic paired-modality corpus parameters."""

    class_count: int = Field(default=12, ge=2)
    samples_per_class: int = Field(default=100, ge=1)
    clips: int = Field(default=5, ge=1)
    height: int = Field(default=4, ge=1)
    width: int = Field(default=4, ge=1)
    channels: int = Field(default=8, ge=1)
    latent_dim: int = Field(default=16, ge=2)
    infrared_rank: int = Field(default=6, ge=1)
    noise_sigma: float = Field(default=0.1, ge=0.0)
    class_separation: float = Field(default=1.0, gt=0.0)
    train_fraction: float = Field(default=0.75, gt=0.0, le=1.0)
    seed: int = Field(default=0, ge=0)
    retain_latents: bool = False

    @model_validator(mode="after")
    def validate_rank(self) -> "SynthConfig":
        if self.infrared_rank >= self.latent_dim:
            raise ValueError(
                f"infrared_rank ({self.infrared_rank}) must be below latent_dim ({self.latent_dim})"
            )
        return self

    @property
    def train_per_class(self) -> int:
        return math.ceil(self.train_fraction * self.samples_per_class)


class TrainConfig(_Strict):
    """Alternating adversarial training hyperparameters."""

    w1: float = Field(default=0.1, ge=0.0)
    w2: float = Field(default=0.9, ge=0.0)
    learning_rate: float = Field(default=2e-5, ge=0.0)
    beta1: float = Field(default=0.5, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_epsilon: float = Field(default=1e-8, gt=0.0)
    batch_size: int = Field(default=30, ge=1)
    epochs: int = Field(default=200, ge=0)
    d_steps_per_g_step: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)
    gen_cls_feedback: bool = False
    kernel_size: int = Field(default=3, ge=1)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    verify_alternation: bool = False
    train_single_heads: bool = True

    @field_validator("kernel_size")
    @classmethod
    def validate_kernel(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {v}")
        return v

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(w1=self.w1, w2=self.w2)

    @property
    def adam_hyper(self) -> dict[str, float]:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.adam_epsilon,
        }
