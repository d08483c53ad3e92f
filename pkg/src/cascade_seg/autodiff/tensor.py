"""Tensor, computation tape and reverse-mode backward pass.

Every differentiable op produces a Tensor carrying a ``Node``: references to
its input tensors and a rule mapping the output gradient to input gradients.
``backward`` linearizes the nodes reachable from a scalar loss into a
``ComputationTape`` (topological order, each node once) and walks it in
reverse.
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_state = threading.local()


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Run forward passes without recording nodes (this thread only)."""
    previous = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


@dataclass(eq=False)
class Node:
    """One executed operation."""
    op: str
    parents: tuple["Tensor", ...]
    rule: BackwardRule


class Tensor:
    """Dense real array with optional gradient tracking."""

    __array_priority__ = 100

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Optional[np.dtype] = None,
    ):
        array = np.asarray(data, dtype=dtype)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None

    # ------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------

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
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------
    # Elementwise arithmetic (same shape or python scalar)
    # ------------------------------------------------------------

    def __add__(self, other: Union["Tensor", float]) -> "Tensor":
        if not isinstance(other, Tensor):
            c = float(other)
            return record(self.data + c, (self,), lambda g: (g,), "add_scalar")
        _same_shape("add", self, other)
        return record(self.data + other.data, (self, other), lambda g: (g, g), "add")

    __radd__ = __add__

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        if not isinstance(other, Tensor):
            c = float(other)
            return record(self.data * c, (self,), lambda g: (g * c,), "mul_scalar")
        _same_shape("mul", self, other)
        a, b = self.data, other.data
        return record(a * b, (self, other), lambda g: (g * b, g * a), "mul")

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __sub__(self, other: Union["Tensor", float]) -> "Tensor":
        return self + (-other)

    def sum(self) -> "Tensor":
        shape = self.shape
        return record(
            np.asarray(self.data.sum()),
            (self,),
            lambda g: (np.broadcast_to(g, shape).copy(),),
            "sum",
        )

    def mean(self) -> "Tensor":
        return self.sum() * (1.0 / self.size)

    def backward(self) -> None:
        backward(self)


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def record(
    data: np.ndarray,
    parents: tuple[Tensor, ...],
    rule: BackwardRule,
    op: str,
) -> Tensor:
    """Wrap an op result, attaching a tape node when any input needs gradients."""
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = Node(op=op, parents=parents, rule=rule)
    return out


class ComputationTape:
    """Topologically ordered record of the nodes that produced ``root``."""

    def __init__(self, tensors: list[Tensor]):
        self.tensors = tensors

    @classmethod
    def from_root(cls, root: Tensor) -> "ComputationTape":
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        # iterative post-order DFS; deep U-Nets overflow the recursion limit
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor._node is not None:
                for parent in tensor._node.parents:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.tensors)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every leaf tensor that requires gradients.

    Gradients accumulate across calls until ``zero_grad``.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    tape = ComputationTape.from_root(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}

    for tensor in reversed(tape.tensors):
        g = grads.pop(id(tensor), None)
        if g is None:
            continue
        node = tensor._node
        if node is None:
            g = g.astype(tensor.dtype, copy=False)
            tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g
            continue
        for parent, pg in zip(node.parents, node.rule(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
