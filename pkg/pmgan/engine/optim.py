"""Adam with bias correction."""

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from pmgan.core.errors import ConfigurationError, DimensionError

Params = dict[str, np.ndarray]


@dataclass
class AdamState:
    """Moment buffers and hyperparameters for one parameter group."""

    learning_rate: float = 2e-5
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: Params = field(default_factory=dict)
    second_moment: Params = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning rate must be >= 0, got {self.learning_rate}")
        for name, beta in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 <= beta < 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1), got {beta}")
        if self.epsilon <= 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")

    @classmethod
    def for_params(cls, params: Mapping[str, np.ndarray], **hyper: float) -> "AdamState":
        state = cls(**hyper)
        for name, value in params.items():
            state.first_moment[name] = np.zeros_like(value, dtype=np.float64)
            state.second_moment[name] = np.zeros_like(value, dtype=np.float64)
        return state

    def copy(self) -> "AdamState":
        return AdamState(
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            step_count=self.step_count,
            first_moment={k: v.copy() for k, v in self.first_moment.items()},
            second_moment={k: v.copy() for k, v in self.second_moment.items()},
        )


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update; inputs are left untouched."""
    new_state = state.copy()
    new_state.step_count += 1
    t = new_state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t

    updated: Params = {}
    for name, value in params.items():
        grad = grads[name]
        m = new_state.first_moment.setdefault(name, np.zeros_like(value, dtype=np.float64))
        v = new_state.second_moment.setdefault(name, np.zeros_like(value, dtype=np.float64))
        if not (value.shape == grad.shape == m.shape == v.shape):
            raise DimensionError(
                f"adam_step shapes disagree for '{name}'", [value.shape, grad.shape, m.shape]
            )

        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * (grad * grad)
        new_state.first_moment[name] = m
        new_state.second_moment[name] = v

        m_hat = m / bc1
        v_hat = v / bc2
        updated[name] = value - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return updated, new_state
