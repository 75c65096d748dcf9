"""Parameter initialisers."""

import numpy as np


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform in +/- sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def conv_filter(rng: np.random.Generator, k: int, c_in: int, c_out: int) -> np.ndarray:
    return glorot_uniform(rng, (k, k, c_in, c_out), k * k * c_in, k * k * c_out)


def dense(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    return glorot_uniform(rng, (n_in, n_out), n_in, n_out)
