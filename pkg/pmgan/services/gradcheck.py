"""Central finite-difference verification of every recorded gradient.

Each check reduces its function to a scalar, computes the tape gradient of every
input, and compares it element-wise with ``(f(x + h) - f(x - h)) / 2h``. The
error of one element is ``|a - n| / max(|a|, |n|, 1)``.
"""

from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np
from structlog import get_logger

from pmgan.core.errors import ConfigurationError
from pmgan.engine import ops
from pmgan.engine.tensor import Tape, Tensor, backward
from pmgan.models.network import (
    DISCRIMINATOR_KEYS,
    GENERATOR_KEYS,
    discriminator_losses,
    loss_G,
    loss_single,
    parameter_shapes,
)
from pmgan.schemas.configs import LossWeights, ModelSpec, NoiseSpec
from pmgan.schemas.reports import GradcheckEntry

logger = get_logger(__name__)

STEP = 1e-6
TOLERANCE = 1e-6
# Relative above magnitude 1, absolute below it.
METRIC = "|a-n| / max(|a|, |n|, 1)"
SCOPES = ("op", "model", "all")

Bound = Mapping[str, Tensor]

# Model-scope checks run on the smallest shapes that exercise every code path.
CHECK_SPEC = ModelSpec(height=2, width=2, channels=3, class_count=3, clips=2)
CHECK_BATCH = 2


@dataclass(frozen=True)
class GradcheckCase:
    check: str
    inputs: dict[str, np.ndarray]
    loss: Callable[[Bound], Tensor]


def scaled_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """Element-wise ``METRIC``."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return np.abs(analytic - numeric) / scale


def analytic_gradients(case: GradcheckCase) -> dict[str, np.ndarray]:
    tape = Tape()
    bound = {name: tape.watch(value, name) for name, value in case.inputs.items()}
    return backward(tape, case.loss(bound))


def numeric_gradient(case: GradcheckCase, name: str, step: float = STEP) -> np.ndarray:
    base = case.inputs[name]
    grad = np.zeros_like(base)

    def evaluate(value: np.ndarray) -> float:
        bound = {n: Tensor(value if n == name else v) for n, v in case.inputs.items()}
        return case.loss(bound).item()

    for index in np.ndindex(base.shape):
        plus, minus = base.copy(), base.copy()
        plus[index] += step
        minus[index] -= step
        grad[index] = (evaluate(plus) - evaluate(minus)) / (2 * step)
    return grad


def run_case(
    case: GradcheckCase,
    step: float = STEP,
    tolerance: float = TOLERANCE,
    corrupt: Optional[tuple[str, float]] = None,
) -> list[GradcheckEntry]:
    analytic = analytic_gradients(case)
    entries = []
    for name in case.inputs:
        grad = analytic[name]
        if corrupt is not None and corrupt[0] == name:
            grad = grad + corrupt[1]
        error = float(np.max(scaled_error(grad, numeric_gradient(case, name, step)), initial=0.0))
        entries.append(
            GradcheckEntry(
                check=case.check,
                parameter=name,
                max_scaled_error=error,
                passed=error < tolerance,
            )
        )
    return entries


def _projected(
    check: str,
    inputs: dict[str, np.ndarray],
    fn: Callable[[Bound], Tensor],
    rng: np.random.Generator,
) -> GradcheckCase:
    """Scalarize ``fn`` by a fixed random projection of its output."""
    shape = fn({n: Tensor(v) for n, v in inputs.items()}).shape
    weights = Tensor(rng.normal(size=shape))
    return GradcheckCase(check, inputs, lambda b: ops.reduce_sum(ops.multiply(fn(b), weights)))


def _away_from_zero(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    values = rng.uniform(0.1, 1.0, size=shape)
    return values * rng.choice((-1.0, 1.0), size=shape)


def op_cases(rng: np.random.Generator) -> list[GradcheckCase]:
    """One case per primitive op, on small random operands."""
    n, h, w, c = 2, 3, 3, 2
    specs: list[tuple[str, dict[str, np.ndarray], Callable[[Bound], Tensor]]] = [
        (
            "matmul",
            {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4, 2))},
            lambda b: ops.matmul(b["a"], b["b"]),
        ),
        (
            "conv1x1",
            {
                "x": rng.normal(size=(n, h, w, c)),
                "filter": rng.normal(size=(1, 1, c, 3)),
                "bias": rng.normal(size=3),
            },
            lambda b: ops.conv1x1(b["x"], b["filter"], b["bias"]),
        ),
        (
            "conv_same",
            {
                "x": rng.normal(size=(n, h, w, c)),
                "filter": rng.normal(size=(3, 3, c, 3)),
                "bias": rng.normal(size=3),
            },
            lambda b: ops.conv_same(b["x"], b["filter"], b["bias"]),
        ),
        (
            "conv_same_k5",
            {
                "x": rng.normal(size=(h, w, c)),
                "filter": rng.normal(size=(5, 5, c, 2)),
                "bias": rng.normal(size=2),
            },
            lambda b: ops.conv_same(b["x"], b["filter"], b["bias"]),
        ),
        (
            "add_bias",
            {"x": rng.normal(size=(3, 4)), "bias": rng.normal(size=4)},
            lambda b: ops.add_bias(b["x"], b["bias"]),
        ),
        (
            "add",
            {"a": rng.normal(size=(2, 3)), "b": rng.normal(size=(2, 3))},
            lambda b: ops.add(b["a"], b["b"]),
        ),
        (
            "add_scalar",
            {"a": rng.normal(size=(2, 3)), "b": rng.normal(size=())},
            lambda b: ops.add(b["a"], b["b"]),
        ),
        (
            "multiply",
            {"a": rng.normal(size=(2, 3)), "b": rng.normal(size=(2, 3))},
            lambda b: ops.multiply(b["a"], b["b"]),
        ),
        ("scale", {"x": rng.normal(size=(2, 3))}, lambda b: ops.scale(b["x"], 0.3)),
        ("negate", {"x": rng.normal(size=(2, 3))}, lambda b: ops.negate(b["x"])),
        ("relu", {"x": _away_from_zero(rng, (2, 3))}, lambda b: ops.relu(b["x"])),
        ("sigmoid", {"x": rng.normal(size=(2, 3))}, lambda b: ops.sigmoid(b["x"])),
        ("log", {"x": rng.uniform(0.5, 2.0, size=(2, 3))}, lambda b: ops.log(b["x"])),
        ("softmax", {"x": rng.normal(size=(2, 4))}, lambda b: ops.softmax(b["x"])),
        ("reduce_sum", {"x": rng.normal(size=(2, 3))}, lambda b: ops.reduce_sum(b["x"], axis=-1)),
        ("mean", {"x": rng.normal(size=(2, 3))}, lambda b: ops.mean(b["x"])),
        ("reshape", {"x": rng.normal(size=(2, 3))}, lambda b: ops.reshape(b["x"], (3, 2))),
        ("flatten", {"x": rng.normal(size=(n, 2, 2, c))}, lambda b: ops.flatten(b["x"])),
        (
            "concat_channels",
            {"a": rng.normal(size=(2, 2, 2)), "b": rng.normal(size=(2, 2, 1))},
            lambda b: ops.concat_channels(b["a"], b["b"]),
        ),
        (
            "interleave_channels",
            {"first": rng.normal(size=(2, 2, 3)), "second": rng.normal(size=(2, 2, 3))},
            lambda b: ops.interleave_channels(b["first"], b["second"]),
        ),
    ]
    return [_projected(f"op.{name}", inputs, fn, rng) for name, inputs, fn in specs]


def _one_hot(rng: np.random.Generator, n: int, classes: int) -> np.ndarray:
    labels = np.zeros((n, classes))
    labels[np.arange(n), rng.integers(0, classes, size=n)] = 1.0
    return labels


def _uniform(
    rng: np.random.Generator, shapes: Mapping[str, tuple[int, ...]]
) -> dict[str, np.ndarray]:
    return {name: rng.uniform(-0.5, 0.5, size=shape) for name, shape in shapes.items()}


def model_cases(rng: np.random.Generator, spec: ModelSpec = CHECK_SPEC) -> list[GradcheckCase]:
    """Generative, discriminative and single-head losses on a tiny model.

    Parameters are drawn uniformly from [-0.5, 0.5]. The noise case rebuilds its
    rng on every evaluation so each finite difference sees the same draw.
    """
    arrays = _uniform(rng, parameter_shapes(spec))
    shape = (CHECK_BATCH,) + spec.map_shape
    f_inf = rng.normal(size=shape)
    f_vis = np.tanh(rng.normal(size=shape))
    f_fake = rng.normal(size=shape)
    labels = _one_hot(rng, CHECK_BATCH, spec.class_count)
    weights = LossWeights()
    head = _uniform(
        rng, {"s.weights": (spec.flat_size, spec.class_count), "s.bias": (spec.class_count,)}
    )

    noise = NoiseSpec(enabled=True, channels=2, sigma=1.0)
    noisy_arrays = _uniform(rng, parameter_shapes(spec.model_copy(update={"noise": noise})))
    noise_seed = int(rng.integers(2**31))

    def merged(bound: Bound, base: Mapping[str, np.ndarray] = arrays) -> dict[str, Tensor]:
        return {**{n: Tensor(v) for n, v in base.items()}, **bound}

    def subset(base: Mapping[str, np.ndarray], keys: tuple[str, ...]) -> dict[str, np.ndarray]:
        return {k: base[k] for k in keys}

    generator_inputs = subset(arrays, GENERATOR_KEYS)
    return [
        GradcheckCase(
            "model.loss_G",
            generator_inputs,
            lambda b: loss_G(f_inf, merged(b), noise=spec.noise),
        ),
        GradcheckCase(
            "model.loss_G_noise",
            subset(noisy_arrays, GENERATOR_KEYS),
            lambda b: loss_G(
                f_inf,
                merged(b, noisy_arrays),
                noise=noise,
                rng=np.random.default_rng(noise_seed),
            ),
        ),
        GradcheckCase(
            "model.loss_G_feedback",
            generator_inputs,
            lambda b: loss_G(
                f_inf, merged(b), noise=spec.noise, labels=labels, gen_cls_feedback=True, w2=weights.w2
            ),
        ),
        GradcheckCase(
            "model.loss_D",
            subset(arrays, DISCRIMINATOR_KEYS),
            lambda b: discriminator_losses(f_vis, f_inf, f_fake, labels, weights, merged(b)).total,
        ),
        GradcheckCase(
            "model.loss_single",
            head,
            lambda b: loss_single(f_vis, labels, b),
        ),
    ]


def gradcheck(
    scope: str = "all",
    seed: int = 0,
    step: float = STEP,
    tolerance: float = TOLERANCE,
    corrupt: Optional[tuple[str, float]] = None,
) -> list[GradcheckEntry]:
    """Run every check of ``scope``; ``corrupt`` offsets one named analytic gradient."""
    if scope not in SCOPES:
        raise ConfigurationError(f"gradcheck scope must be one of {SCOPES}, got '{scope}'")
    rng = np.random.default_rng(seed)
    cases = []
    if scope in ("op", "all"):
        cases += op_cases(rng)
    if scope in ("model", "all"):
        cases += model_cases(rng)

    entries = [entry for case in cases for entry in run_case(case, step, tolerance, corrupt)]
    failed = [e for e in entries if not e.passed]
    logger.info(
        "gradcheck finished",
        scope=scope,
        checks=len(cases),
        parameters=len(entries),
        failed=len(failed),
        worst=max((e.max_scaled_error for e in entries), default=0.0),
    )
    return entries
