"""Clip-level sum fusion and channel-interleaved convolutional fusion."""

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from pmgan.core.errors import ContractError, DimensionError
from pmgan.engine import ops
from pmgan.engine.tensor import Tensor


@dataclass(frozen=True)
class FeatureMap:
    """One H x W x D map of pooled clip (or video) features."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise DimensionError("feature map must be H x W x D", [values.shape])
        if not np.all(np.isfinite(values)):
            raise ContractError("feature map contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def tensor(self) -> Tensor:
        return Tensor(self.values)


@dataclass(frozen=True)
class ClipStack:
    """T clip feature maps of one video, stored as a T x H x W x D array."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 4 or values.shape[0] < 1:
            raise DimensionError("clip stack must be T x H x W x D with T >= 1", [values.shape])
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_maps(cls, maps: Sequence[FeatureMap]) -> "ClipStack":
        if not maps:
            raise ContractError("clip stack needs at least one clip")
        shapes = {m.shape for m in maps}
        if len(shapes) != 1:
            raise DimensionError("clips have heterogeneous shapes", sorted(shapes))
        return cls(np.stack([m.values for m in maps]))

    @property
    def clips(self) -> list[FeatureMap]:
        return [FeatureMap(clip) for clip in self.values]

    def __len__(self) -> int:
        return self.values.shape[0]


MapLike = Union[FeatureMap, Tensor, np.ndarray]


def as_map_tensor(value: MapLike) -> Tensor:
    if isinstance(value, Tensor):
        return value
    if isinstance(value, FeatureMap):
        return value.tensor()
    return Tensor(value)


def sum_fuse(stack: Union[ClipStack, Sequence[FeatureMap]]) -> FeatureMap:
    """Per-location sum over the T clips followed by the per-location average."""
    if not isinstance(stack, ClipStack):
        stack = ClipStack.from_maps(list(stack))
    values = stack.values
    return FeatureMap(values.sum(axis=0) / values.shape[0])


def sum_fuse_batch(stacks: np.ndarray) -> np.ndarray:
    """:func:`sum_fuse` over an N x T x H x W x D array."""
    if stacks.ndim != 5:
        raise DimensionError("batched clip stacks must be N x T x H x W x D", [stacks.shape])
    return stacks.sum(axis=1) / stacks.shape[1]


def interleave(f_a: MapLike, f_b: MapLike) -> Tensor:
    """Stack two maps channel-wise: 1-based channel 2d-1 is ``f_b[d]``, 2d is ``f_a[d]``.

    ``f_a`` is the available (infrared) map and ``f_b`` the generated one, so the
    generated channels land in the odd 1-based slots (even 0-based indices).
    """
    a, b = as_map_tensor(f_a), as_map_tensor(f_b)
    if a.shape != b.shape:
        raise DimensionError("interleave needs identical shapes", [a.shape, b.shape])
    return ops.interleave_channels(b, a)


def deinterleave(fused: Union[Tensor, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`interleave`; returns ``(f_a, f_b)``."""
    data = fused.data if isinstance(fused, Tensor) else np.asarray(fused)
    if data.shape[-1] % 2:
        raise DimensionError("interleaved map needs an even channel count", [data.shape])
    return data[..., 1::2].copy(), data[..., 0::2].copy()


def conv_fuse(f_inf: MapLike, f_g: MapLike, filt: Tensor, bias: Tensor) -> Tensor:
    """Learnable 1 x 1 x 2D x D fusion of the interleaved maps."""
    a = as_map_tensor(f_inf)
    depth = a.shape[-1]
    if filt.shape != (1, 1, 2 * depth, depth):
        raise DimensionError(
            f"fusion filter must be 1 x 1 x {2 * depth} x {depth}", [filt.shape]
        )
    if bias.shape != (depth,):
        raise DimensionError(f"fusion bias must have {depth} entries", [bias.shape])
    return ops.conv1x1(interleave(a, f_g), filt, bias)
