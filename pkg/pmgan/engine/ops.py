"""Differentiable operations over :class:`Tensor`.

Operations are broadcast-free: element-wise operands must have identical
shapes unless one of them is a scalar. Spatial operations take channel-last
maps ``H x W x C`` with an optional leading batch axis.
"""

from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from pmgan.core.errors import ConfigurationError, ContractError, DimensionError
from pmgan.engine.tensor import Tape, Tensor, Vjp

EPSILON_LOG = 1e-12

Operand = Union[Tensor, float, int]

ELEMENTWISE_KINDS = ("add", "multiply", "relu", "sigmoid", "log", "negate", "scale")


def as_tensor(value: Operand) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _tape_of(inputs: Sequence[Tensor]) -> Optional[Tape]:
    tape = None
    for tensor in inputs:
        if tensor.tape is None:
            continue
        if tape is not None and tensor.tape is not tape:
            raise ContractError("operands are recorded on different tapes")
        tape = tensor.tape
    return tape


def _emit(value: np.ndarray, inputs: Sequence[Tensor], vjp: Vjp) -> Tensor:
    tape = _tape_of(inputs)
    if tape is None:
        return Tensor(value)
    return tape.record(value, inputs, vjp)


def _same_shape_or_scalar(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise DimensionError(f"{op} needs identical shapes or a scalar operand", [a.shape, b.shape])


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    return np.asarray(grad.sum()) if shape == () and grad.shape != () else grad


# Linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of ``m x k`` and ``k x n`` operands."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError("matmul inner dimensions differ", [a.shape, b.shape])
    value = a.data @ b.data

    def vjp(g: np.ndarray):
        return g @ b.data.T, a.data.T @ g

    return _emit(value, (a, b), vjp)


def _check_map(x: Tensor, op: str) -> None:
    if x.ndim not in (3, 4):
        raise DimensionError(f"{op} expects H x W x C or N x H x W x C input", [x.shape])


def conv1x1(x: Tensor, filt: Tensor, bias: Tensor) -> Tensor:
    """Per-location channel mixing: ``out = filt[0, 0]^T . x + bias``."""
    _check_map(x, "conv1x1")
    if filt.ndim != 4 or filt.shape[:2] != (1, 1) or filt.shape[2] != x.shape[-1]:
        raise DimensionError("conv1x1 filter does not match input channels", [x.shape, filt.shape])
    if bias.shape != (filt.shape[3],):
        raise DimensionError("conv1x1 bias does not match output channels", [filt.shape, bias.shape])
    kernel = filt.data[0, 0]
    value = x.data @ kernel + bias.data
    lead_axes = tuple(range(x.ndim - 1))

    def vjp(g: np.ndarray):
        grad_x = g @ kernel.T
        grad_w = np.tensordot(x.data, g, axes=(lead_axes, lead_axes))[None, None]
        grad_b = g.sum(axis=lead_axes)
        return grad_x, grad_w, grad_b

    return _emit(value, (x, filt, bias), vjp)


def _correlate_same(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Zero-padded 'same' cross-correlation of a batched N x H x W x Cin map."""
    k = kernel.shape[0]
    pad = (k - 1) // 2
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    windows = sliding_window_view(padded, (k, k), axis=(1, 2))
    return np.einsum("nhwcij,ijco->nhwo", windows, kernel, optimize=True)


def conv_same(x: Tensor, filt: Tensor, bias: Tensor) -> Tensor:
    """Odd-kernel convolution with zero padding that preserves H x W."""
    _check_map(x, "conv_same")
    if filt.ndim != 4 or filt.shape[0] != filt.shape[1]:
        raise DimensionError("conv_same filter must be k x k x Cin x Cout", [filt.shape])
    k = filt.shape[0]
    if k % 2 == 0:
        raise ConfigurationError(f"conv_same kernel size must be odd, got {k}")
    if k == 1:
        return conv1x1(x, filt, bias)
    if filt.shape[2] != x.shape[-1]:
        raise DimensionError("conv_same filter does not match input channels", [x.shape, filt.shape])
    if bias.shape != (filt.shape[3],):
        raise DimensionError("conv_same bias does not match output channels", [filt.shape, bias.shape])

    batched = x.ndim == 4
    xb = x.data if batched else x.data[None]
    kernel = filt.data
    value = _correlate_same(xb, kernel) + bias.data
    if not batched:
        value = value[0]

    def vjp(g: np.ndarray):
        gb = g if batched else g[None]
        # Input gradient is the same-correlation with the flipped, transposed kernel.
        flipped = kernel[::-1, ::-1].transpose(0, 1, 3, 2)
        grad_x = _correlate_same(gb, flipped)
        pad = (k - 1) // 2
        padded = np.pad(xb, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
        windows = sliding_window_view(padded, (k, k), axis=(1, 2))
        grad_w = np.einsum("nhwcij,nhwo->ijco", windows, gb, optimize=True)
        grad_b = gb.sum(axis=(0, 1, 2))
        return (grad_x if batched else grad_x[0]), grad_w, grad_b

    return _emit(value, (x, filt, bias), vjp)


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a vector along the last axis of ``x``."""
    if bias.ndim != 1 or x.ndim < 1 or x.shape[-1] != bias.shape[0]:
        raise DimensionError("bias length must equal the last axis", [x.shape, bias.shape])
    lead_axes = tuple(range(x.ndim - 1))

    def vjp(g: np.ndarray):
        return g, g.sum(axis=lead_axes)

    return _emit(x.data + bias.data, (x, bias), vjp)


# Element-wise


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape_or_scalar(a, b, "add")

    def vjp(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit(a.data + b.data, (a, b), vjp)


def multiply(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape_or_scalar(a, b, "multiply")

    def vjp(g: np.ndarray):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit(a.data * b.data, (a, b), vjp)


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a constant (not differentiated)."""
    factor = float(factor)

    def vjp(g: np.ndarray):
        return (g * factor,)

    return _emit(x.data * factor, (x,), vjp)


def negate(x: Tensor) -> Tensor:
    def vjp(g: np.ndarray):
        return (-g,)

    return _emit(-x.data, (x,), vjp)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def vjp(g: np.ndarray):
        return (g * mask,)

    return _emit(np.where(mask, x.data, 0.0), (x,), vjp)


def sigmoid(x: Tensor) -> Tensor:
    value = special.expit(x.data)

    def vjp(g: np.ndarray):
        return (g * value * (1.0 - value),)

    return _emit(value, (x,), vjp)


def log(x: Tensor, epsilon: float = EPSILON_LOG) -> Tensor:
    """Natural log with the argument clamped to at least ``epsilon``."""
    clamped = np.maximum(x.data, epsilon)
    active = x.data >= epsilon

    def vjp(g: np.ndarray):
        return (np.where(active, g / clamped, 0.0),)

    return _emit(np.log(clamped), (x,), vjp)


def elementwise(op_kind: str, *inputs: Operand, factor: float = 1.0) -> Tensor:
    """Dispatch by name to one of :data:`ELEMENTWISE_KINDS`."""
    if op_kind == "add":
        return add(*inputs)
    if op_kind == "multiply":
        return multiply(*inputs)
    if op_kind == "scale":
        return scale(as_tensor(inputs[0]), factor)
    unary = {"relu": relu, "sigmoid": sigmoid, "log": log, "negate": negate}
    if op_kind not in unary:
        raise ContractError(f"unknown element-wise op '{op_kind}'")
    if len(inputs) != 1:
        raise ContractError(f"{op_kind} takes one operand, got {len(inputs)}")
    return unary[op_kind](as_tensor(inputs[0]))


# Normalisation and reductions


def softmax(logits: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max subtraction."""
    if logits.ndim == 0 or logits.shape[-1] < 1:
        raise DimensionError("softmax needs at least one class", [logits.shape])
    value = special.softmax(logits.data, axis=-1)

    def vjp(g: np.ndarray):
        inner = (g * value).sum(axis=-1, keepdims=True)
        return (value * (g - inner),)

    return _emit(value, (logits,), vjp)


def reduce_sum(x: Tensor, axis: Optional[int] = None) -> Tensor:
    value = x.data.sum(axis=axis)

    def vjp(g: np.ndarray):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _emit(np.asarray(value), (x,), vjp)


def mean(x: Tensor) -> Tensor:
    return scale(reduce_sum(x), 1.0 / x.size)


# Shape manipulation


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    value = x.data.reshape(tuple(shape))

    def vjp(g: np.ndarray):
        return (g.reshape(x.shape),)

    return _emit(value, (x,), vjp)


def flatten(x: Tensor) -> Tensor:
    """Row-major flatten; a 4-D batch keeps its leading axis."""
    if x.ndim == 4:
        return reshape(x, (x.shape[0], -1))
    return reshape(x, (1, -1))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack ``b`` after ``a`` along the channel axis."""
    if a.shape[:-1] != b.shape[:-1]:
        raise DimensionError("concat_channels needs equal leading shapes", [a.shape, b.shape])
    split = a.shape[-1]

    def vjp(g: np.ndarray):
        return g[..., :split], g[..., split:]

    return _emit(np.concatenate([a.data, b.data], axis=-1), (a, b), vjp)


def interleave_channels(first: Tensor, second: Tensor) -> Tensor:
    """Output channel ``2d`` (0-based) is ``first[d]`` and ``2d + 1`` is ``second[d]``."""
    if first.shape != second.shape:
        raise DimensionError("interleave needs identical shapes", [first.shape, second.shape])
    value = np.empty(first.shape[:-1] + (2 * first.shape[-1],), dtype=np.float64)
    value[..., 0::2] = first.data
    value[..., 1::2] = second.data

    def vjp(g: np.ndarray):
        return g[..., 0::2], g[..., 1::2]

    return _emit(value, (first, second), vjp)
