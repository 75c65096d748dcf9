"""Dense float64 tensors and a define-by-run gradient tape."""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from pmgan.core.errors import ContractError

ArrayLike = Union[np.ndarray, float, int, Sequence]
# Maps the upstream gradient to one gradient per recorded parent.
Vjp = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """Immutable n-dimensional float64 array, optionally recorded on a tape."""

    __slots__ = ("data", "tape", "grad_id")

    def __init__(
        self,
        data: ArrayLike,
        tape: Optional["Tape"] = None,
        grad_id: Optional[int] = None,
    ):
        array = np.array(data, dtype=np.float64)
        array.flags.writeable = False
        self.data = array
        self.tape = tape
        self.grad_id = grad_id

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def numpy(self) -> np.ndarray:
        """Writable copy of the values."""
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Same values, no tape participation."""
        return Tensor(self.data)

    def __repr__(self) -> str:
        marker = f", grad_id={self.grad_id}" if self.tracked else ""
        return f"Tensor(shape={self.shape}{marker})"

    def __add__(self, other: Union["Tensor", float]) -> "Tensor":
        from pmgan.engine import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        from pmgan.engine import ops

        return ops.multiply(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        from pmgan.engine import ops

        return ops.negate(self)

    def __sub__(self, other: Union["Tensor", float]) -> "Tensor":
        from pmgan.engine import ops

        return ops.add(self, ops.negate(ops.as_tensor(other)))

    def __rsub__(self, other: Union["Tensor", float]) -> "Tensor":
        from pmgan.engine import ops

        return ops.add(ops.negate(self), other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from pmgan.engine import ops

        return ops.matmul(self, other)


@dataclass(frozen=True)
class _Node:
    parents: tuple[Optional[int], ...]
    vjp: Optional[Vjp]
    shape: tuple[int, ...]


class Tape:
    """Records operations in execution order; parents always precede children."""

    def __init__(self) -> None:
        self.nodes: list[_Node] = []
        self.leaves: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def watch(self, values: ArrayLike, name: str) -> Tensor:
        """Register a leaf parameter under ``name``."""
        if name in self.leaves:
            raise ContractError(f"leaf '{name}' is already registered on this tape")
        array = np.array(values, dtype=np.float64)
        grad_id = len(self.nodes)
        self.nodes.append(_Node(parents=(), vjp=None, shape=array.shape))
        self.leaves[name] = grad_id
        return Tensor(array, tape=self, grad_id=grad_id)

    def record(self, value: np.ndarray, inputs: Sequence[Tensor], vjp: Vjp) -> Tensor:
        parents = tuple(t.grad_id if t.tape is self else None for t in inputs)
        grad_id = len(self.nodes)
        self.nodes.append(_Node(parents=parents, vjp=vjp, shape=value.shape))
        return Tensor(value, tape=self, grad_id=grad_id)

    def gradients(self, root: Tensor) -> dict[str, np.ndarray]:
        """Reverse sweep from ``root``; every node is visited exactly once."""
        grads: list[Optional[np.ndarray]] = [None] * len(self.nodes)
        grads[root.grad_id] = np.ones(root.shape, dtype=np.float64)

        for index in range(root.grad_id, -1, -1):
            upstream = grads[index]
            node = self.nodes[index]
            if upstream is None or node.vjp is None:
                continue
            for parent, local in zip(node.parents, node.vjp(upstream)):
                if parent is None or local is None:
                    continue
                if grads[parent] is None:
                    grads[parent] = np.array(local, dtype=np.float64)
                else:
                    grads[parent] = grads[parent] + local

        result = {}
        for name, grad_id in self.leaves.items():
            grad = grads[grad_id]
            result[name] = (
                np.zeros(self.nodes[grad_id].shape, dtype=np.float64) if grad is None else grad
            )
        return result


def backward(tape: Tape, root: Tensor) -> dict[str, np.ndarray]:
    """Gradient of a scalar ``root`` with respect to every leaf on ``tape``."""
    if root.shape != ():
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    if root.tape is not tape:
        raise ContractError("backward root is not recorded on the given tape")
    return tape.gradients(root)
