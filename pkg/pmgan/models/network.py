"""Transferable generator, discriminator/predictor heads and their losses.

Forward functions work on *bound* parameters: a mapping from parameter name to
:class:`Tensor`. Binding decides which parameters a tape watches, and each loss
additionally detaches the parameters it must treat as constants, so gradients
only ever reach the player the loss belongs to.

Maps may be a single ``H x W x D`` map or an ``N x H x W x D`` batch; losses are
batch means, which equal the per-sample formulas for N = 1.
"""

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Optional, Union

import numpy as np

from pmgan.core.errors import ConfigurationError, ContractError, DimensionError
from pmgan.core.hashing import digest_arrays
from pmgan.engine import init, ops
from pmgan.engine.tensor import Tape, Tensor
from pmgan.models.fusion import MapLike, as_map_tensor, conv_fuse
from pmgan.schemas.configs import LossWeights, ModelSpec, NoiseSpec

Arrays = dict[str, np.ndarray]
Bound = Mapping[str, Tensor]

BLOCKS = ("block1", "block2")
GENERATOR_KEYS = tuple(f"g.{b}.{p}" for b in BLOCKS for p in ("w1", "b1", "w2", "b2"))
ADVERSARIAL_KEYS = ("d.weights", "d.bias")
PREDICTOR_KEYS = ("p.weights", "p.bias")
FUSION_KEYS = ("fuse.filter", "fuse.bias")
DISCRIMINATOR_KEYS = ADVERSARIAL_KEYS + PREDICTOR_KEYS + FUSION_KEYS
SINGLE_HEAD_KEYS = ("s.weights", "s.bias")


@dataclass(frozen=True)
class ResidualBlockParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass(frozen=True)
class GeneratorParams:
    block1: ResidualBlockParams
    block2: ResidualBlockParams

    def arrays(self) -> Arrays:
        out: Arrays = {}
        for name in BLOCKS:
            block = getattr(self, name)
            for field in ("w1", "b1", "w2", "b2"):
                out[f"g.{name}.{field}"] = getattr(block, field)
        return out

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "GeneratorParams":
        blocks = {
            name: ResidualBlockParams(
                **{f: np.asarray(arrays[f"g.{name}.{f}"], dtype=np.float64) for f in ("w1", "b1", "w2", "b2")}
            )
            for name in BLOCKS
        }
        return cls(**blocks)


@dataclass(frozen=True)
class DiscriminatorParams:
    """Adversarial head, predictor head and the fusion filter feeding the predictor."""

    d_weights: np.ndarray
    d_bias: np.ndarray
    p_weights: np.ndarray
    p_bias: np.ndarray
    fuse_filter: np.ndarray
    fuse_bias: np.ndarray

    _NAMES = {
        "d_weights": "d.weights",
        "d_bias": "d.bias",
        "p_weights": "p.weights",
        "p_bias": "p.bias",
        "fuse_filter": "fuse.filter",
        "fuse_bias": "fuse.bias",
    }

    def arrays(self) -> Arrays:
        return {key: getattr(self, attr) for attr, key in self._NAMES.items()}

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "DiscriminatorParams":
        return cls(
            **{attr: np.asarray(arrays[key], dtype=np.float64) for attr, key in cls._NAMES.items()}
        )


@dataclass(frozen=True)
class SingleHeadParams:
    """Fully-connected head used when one modality is classified on its own."""

    weights: np.ndarray
    bias: np.ndarray

    def arrays(self) -> Arrays:
        return {"s.weights": self.weights, "s.bias": self.bias}

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "SingleHeadParams":
        return cls(
            weights=np.asarray(arrays["s.weights"], dtype=np.float64),
            bias=np.asarray(arrays["s.bias"], dtype=np.float64),
        )

    @classmethod
    def initialize(cls, spec: ModelSpec, rng: np.random.Generator) -> "SingleHeadParams":
        return cls(
            weights=init.dense(rng, spec.flat_size, spec.class_count),
            bias=np.zeros(spec.class_count),
        )

    @classmethod
    def zeros(cls, spec: ModelSpec) -> "SingleHeadParams":
        return cls(np.zeros((spec.flat_size, spec.class_count)), np.zeros(spec.class_count))


@dataclass(frozen=True)
class PmGanParams:
    """All learnable parameters of one model."""

    spec: ModelSpec
    generator: GeneratorParams
    discriminator: DiscriminatorParams

    def generator_arrays(self) -> Arrays:
        return self.generator.arrays()

    def discriminator_arrays(self) -> Arrays:
        return self.discriminator.arrays()

    def arrays(self) -> Arrays:
        return {**self.generator_arrays(), **self.discriminator_arrays()}

    def replace(self, updates: Mapping[str, np.ndarray]) -> "PmGanParams":
        merged = {**self.arrays(), **updates}
        params = PmGanParams(
            spec=self.spec,
            generator=GeneratorParams.from_arrays(merged),
            discriminator=DiscriminatorParams.from_arrays(merged),
        )
        params.check_shapes()
        return params

    def digest(self, keys: Iterable[str]) -> str:
        arrays = self.arrays()
        return digest_arrays({k: arrays[k] for k in keys})

    def check_shapes(self) -> None:
        expected = parameter_shapes(self.spec)
        for name, value in self.arrays().items():
            if value.shape != expected[name]:
                raise DimensionError(f"parameter '{name}' has the wrong shape", [value.shape, expected[name]])

    @classmethod
    def from_arrays(cls, spec: ModelSpec, arrays: Mapping[str, np.ndarray]) -> "PmGanParams":
        params = cls(spec, GeneratorParams.from_arrays(arrays), DiscriminatorParams.from_arrays(arrays))
        params.check_shapes()
        return params

    @classmethod
    def initialize(cls, spec: ModelSpec, rng: np.random.Generator) -> "PmGanParams":
        """Glorot-uniform weights, zero biases; drawn in a fixed order from ``rng``."""
        arrays: Arrays = {}
        for name, shape in parameter_shapes(spec).items():
            if len(shape) == 4:
                k, c_in, c_out = shape[0], shape[2], shape[3]
                arrays[name] = init.conv_filter(rng, k, c_in, c_out)
            elif len(shape) == 2:
                arrays[name] = init.dense(rng, shape[0], shape[1])
            else:
                arrays[name] = np.zeros(shape)
        return cls.from_arrays(spec, arrays)

    @classmethod
    def zeros(cls, spec: ModelSpec) -> "PmGanParams":
        return cls.from_arrays(spec, {n: np.zeros(s) for n, s in parameter_shapes(spec).items()})


def parameter_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    k, d, c = spec.kernel_size, spec.channels, spec.class_count
    c_in = d + (spec.noise.channels if spec.noise.enabled else 0)
    flat = spec.flat_size
    shapes: dict[str, tuple[int, ...]] = {}
    for block in BLOCKS:
        first_in = c_in if block == "block1" else d
        shapes[f"g.{block}.w1"] = (k, k, first_in, d)
        shapes[f"g.{block}.b1"] = (d,)
        shapes[f"g.{block}.w2"] = (k, k, d, d)
        shapes[f"g.{block}.b2"] = (d,)
    shapes["d.weights"] = (flat, 1)
    shapes["d.bias"] = ()
    shapes["p.weights"] = (flat, c)
    shapes["p.bias"] = (c,)
    shapes["fuse.filter"] = (1, 1, 2 * d, d)
    shapes["fuse.bias"] = (d,)
    return shapes


def bind(
    arrays: Mapping[str, np.ndarray],
    tape: Optional[Tape] = None,
    watch: Iterable[str] = (),
) -> dict[str, Tensor]:
    """Wrap arrays as tensors; names in ``watch`` become leaves on ``tape``."""
    watched = set(watch)
    if watched and tape is None:
        raise ContractError("watching parameters needs a tape")
    unknown = watched - set(arrays)
    if unknown:
        raise ContractError(f"cannot watch unknown parameters {sorted(unknown)}")
    return {
        name: tape.watch(value, name) if name in watched else Tensor(value)
        for name, value in arrays.items()
    }


ParamsLike = Union[PmGanParams, Bound]
HeadLike = Union[SingleHeadParams, Bound]


def _resolve(params: ParamsLike) -> Bound:
    return bind(params.arrays()) if isinstance(params, PmGanParams) else params


def _resolve_head(head: HeadLike) -> Bound:
    return bind(head.arrays()) if isinstance(head, SingleHeadParams) else head


def _detached(bound: Bound, keys: Iterable[str]) -> dict[str, Tensor]:
    frozen = set(keys)
    return {n: (t.detach() if n in frozen else t) for n, t in bound.items()}


def _batch(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return ops.reshape(x, (1,) + x.shape), True
    if x.ndim == 4:
        return x, False
    raise DimensionError("feature maps must be H x W x D or N x H x W x D", [x.shape])


def _residual_block(x_in: Tensor, skip: Tensor, bound: Bound, block: str) -> Tensor:
    hidden = ops.relu(ops.conv_same(x_in, bound[f"g.{block}.w1"], bound[f"g.{block}.b1"]))
    return ops.add(skip, ops.conv_same(hidden, bound[f"g.{block}.w2"], bound[f"g.{block}.b2"]))


def generate(
    f_inf: MapLike,
    params: ParamsLike,
    noise: Optional[NoiseSpec] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Fake visible map ``G(f_inf, z)`` with the shape of ``f_inf``.

    Block ``b(x) = x + conv(relu(conv(x)))``; with noise enabled, block1's first
    convolution also sees the appended noise channels while its skip carries
    ``f_inf`` alone.
    """
    bound = _resolve(params)
    if noise is None:
        noise = params.spec.noise if isinstance(params, PmGanParams) else NoiseSpec()
    x, single = _batch(as_map_tensor(f_inf))

    first_in = bound["g.block1.w1"].shape[2]
    expected_in = x.shape[-1] + (noise.channels if noise.enabled else 0)
    if first_in != expected_in:
        raise DimensionError(
            "generator input channels do not match block1", [x.shape, bound["g.block1.w1"].shape]
        )

    x_in = x
    if noise.enabled:
        # Without an rng the noise channels are zero (deterministic inference).
        z_shape = x.shape[:-1] + (noise.channels,)
        z = rng.normal(0.0, noise.sigma, size=z_shape) if rng is not None else np.zeros(z_shape)
        x_in = ops.concat_channels(x, Tensor(z))

    hidden = _residual_block(x_in, x, bound, "block1")
    out = _residual_block(hidden, hidden, bound, "block2")
    return ops.reshape(out, out.shape[1:]) if single else out


def _fc_probabilities(flat: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    if weights.ndim != 2 or weights.shape[0] != flat.shape[1]:
        raise DimensionError("head weights do not match the flattened map", [flat.shape, weights.shape])
    return ops.softmax(ops.add_bias(ops.matmul(flat, weights), bias))


def discriminate(f: MapLike, params: ParamsLike) -> Tensor:
    """Probability that ``f`` is a real visible map: ``sigmoid(flatten(f) . w + b)``."""
    bound = _resolve(params)
    x, single = _batch(as_map_tensor(f))
    flat = ops.flatten(x)
    weights = bound["d.weights"]
    if weights.shape != (flat.shape[1], 1):
        raise DimensionError("discriminator weights do not match the map", [x.shape, weights.shape])
    logits = ops.add(ops.matmul(flat, weights), bound["d.bias"])
    probs = ops.sigmoid(ops.reshape(logits, (flat.shape[0],)))
    return ops.reshape(probs, ()) if single else probs


def predict(f_inf: MapLike, f_g: MapLike, params: ParamsLike) -> Tensor:
    """Class probabilities from the convolutional fusion of both maps."""
    bound = _resolve(params)
    a, single = _batch(as_map_tensor(f_inf))
    b, _ = _batch(as_map_tensor(f_g))
    if a.shape != b.shape:
        raise DimensionError("predict needs maps of identical shape", [a.shape, b.shape])
    fused = conv_fuse(a, b, bound["fuse.filter"], bound["fuse.bias"])
    probs = _fc_probabilities(ops.flatten(fused), bound["p.weights"], bound["p.bias"])
    return ops.reshape(probs, probs.shape[1:]) if single else probs


def predict_single(f: MapLike, head: HeadLike) -> Tensor:
    """Class probabilities from one modality's map, without fusion."""
    bound = _resolve_head(head)
    x, single = _batch(as_map_tensor(f))
    probs = _fc_probabilities(ops.flatten(x), bound["s.weights"], bound["s.bias"])
    return ops.reshape(probs, probs.shape[1:]) if single else probs


def _neg_log_mean(p: Tensor) -> Tensor:
    return ops.mean(ops.negate(ops.log(p)))


def _check_one_hot(labels: np.ndarray) -> None:
    if labels.ndim not in (1, 2):
        raise ContractError(f"labels must be C or N x C, got shape {labels.shape}")
    binary = np.isin(labels, (0.0, 1.0)).all()
    if not binary or not np.all(labels.sum(axis=-1) == 1.0):
        raise ContractError("labels must be one-hot")


def loss_predictive(f_inf: MapLike, f_g: MapLike, labels: np.ndarray, params: ParamsLike) -> Tensor:
    """Cross-entropy of the fused prediction against one-hot ``labels``."""
    labels = np.asarray(labels, dtype=np.float64)
    _check_one_hot(labels)
    probs = predict(f_inf, f_g, params)
    if probs.shape != labels.shape:
        raise DimensionError("labels do not match the predicted classes", [labels.shape, probs.shape])
    picked = ops.reduce_sum(ops.multiply(probs, Tensor(labels)), axis=-1)
    return _neg_log_mean(picked)


def loss_G(
    f_inf: MapLike,
    params: ParamsLike,
    noise: Optional[NoiseSpec] = None,
    rng: Optional[np.random.Generator] = None,
    labels: Optional[np.ndarray] = None,
    gen_cls_feedback: bool = False,
    w2: float = 0.9,
) -> Tensor:
    """Generative loss ``-log D_d(G(f_inf, z))``; discriminator side held constant.

    With ``gen_cls_feedback`` the predictive loss, weighted by ``w2``, is added so
    the generator also receives classification signal.
    """
    bound = _detached(_resolve(params), DISCRIMINATOR_KEYS)
    if noise is None and isinstance(params, PmGanParams):
        noise = params.spec.noise
    f_g = generate(f_inf, bound, noise, rng)
    loss = _neg_log_mean(discriminate(f_g, bound))
    if gen_cls_feedback:
        if labels is None:
            raise ContractError("gen_cls_feedback needs labels")
        loss = ops.add(loss, ops.scale(loss_predictive(f_inf, f_g, labels, bound), w2))
    return loss


def loss_adversarial(f_vis_real: MapLike, f_g: MapLike, params: ParamsLike) -> Tensor:
    """``-log D_d(f_vis) - log(1 - D_d(f_g))`` with ``f_g`` treated as a constant."""
    bound = _resolve(params)
    fake = as_map_tensor(f_g).detach()
    real_term = _neg_log_mean(discriminate(f_vis_real, bound))
    fake_term = _neg_log_mean(ops.add(1.0, ops.negate(discriminate(fake, bound))))
    return ops.add(real_term, fake_term)


class DiscriminatorLosses(NamedTuple):
    total: Tensor
    adversarial: Tensor
    predictive: Tensor


def discriminator_losses(
    f_vis_real: MapLike,
    f_inf: MapLike,
    f_g: MapLike,
    labels: np.ndarray,
    weights: LossWeights,
    params: ParamsLike,
) -> DiscriminatorLosses:
    """Both components and their weighted sum from one forward pass."""
    if weights.w1 < 0 or weights.w2 < 0:
        raise ConfigurationError(f"loss weights must be non-negative, got {weights.w1}, {weights.w2}")
    bound = _detached(_resolve(params), GENERATOR_KEYS)
    fake = as_map_tensor(f_g).detach()
    adversarial = loss_adversarial(f_vis_real, fake, bound)
    predictive = loss_predictive(f_inf, fake, labels, bound)
    total = ops.add(ops.scale(adversarial, weights.w1), ops.scale(predictive, weights.w2))
    return DiscriminatorLosses(total, adversarial, predictive)


def loss_D(
    f_vis_real: MapLike,
    f_inf: MapLike,
    f_g: MapLike,
    labels: np.ndarray,
    weights: LossWeights,
    params: ParamsLike,
) -> Tensor:
    """Discriminative loss ``w1 * L_a + w2 * L_p``."""
    return discriminator_losses(f_vis_real, f_inf, f_g, labels, weights, params).total


def loss_single(f: MapLike, labels: np.ndarray, head: HeadLike) -> Tensor:
    """Cross-entropy of a single-modality head."""
    labels = np.asarray(labels, dtype=np.float64)
    _check_one_hot(labels)
    probs = predict_single(f, head)
    if probs.shape != labels.shape:
        raise DimensionError("labels do not match the predicted classes", [labels.shape, probs.shape])
    return _neg_log_mean(ops.reduce_sum(ops.multiply(probs, Tensor(labels)), axis=-1))
