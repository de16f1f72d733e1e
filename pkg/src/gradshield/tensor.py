"""Dense float tensors with reverse-mode automatic differentiation.

The graph is define-by-run: every operation records its inputs and a
backward closure on the output tensor, and ``Tensor.backward`` replays the
recorded operations in reverse topological order. A fresh graph is built on
every forward pass, which keeps attack loops (one graph per PGD step) simple.
"""

from __future__ import annotations

import numpy as np

from .errors import GraphError, ShapeError

__all__ = ["Tensor", "Parameter", "Tape", "snap32"]


def snap32(arr: np.ndarray) -> np.ndarray:
    """Round a float64 array onto the float32 grid, keeping float64 dtype.

    Values at rest (parameters, running statistics) live on the float32 grid
    so the 32-bit checkpoint encoding is lossless at any point in training,
    while all arithmetic stays in float64.
    """
    return arr.astype(np.float32).astype(np.float64)


class Tensor:
    """N-dimensional float64 array with an optional gradient slot.

    Once created, ``data`` is treated as immutable; only ``grad`` is written
    after construction (by ``backward``). Gradients accumulate additively:
    running backward twice without clearing doubles every gradient.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_grad_fn", "_op")

    def __init__(self, data, requires_grad=False, _parents=(), _grad_fn=None, _op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = tuple(_parents)
        self._grad_fn = _grad_fn
        self._op = _op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(op={self._op!r}, shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph construction -------------------------------------------------

    @staticmethod
    def result(data, parents, grad_fn, op):
        """Wrap an operation output, recording the edge only if it can matter.

        If no parent requires a gradient the subgraph is dropped entirely, so
        frozen-parameter forward passes build no dead tape.
        """
        if any(p.requires_grad for p in parents):
            return Tensor(data, requires_grad=True, _parents=parents, _grad_fn=grad_fn, _op=op)
        return Tensor(data, requires_grad=False, _op=op)

    # -- backward ------------------------------------------------------------

    def backward(self):
        """Populate ``grad`` on every requires_grad tensor reachable from here.

        Raises GraphError if this tensor is not scalar or was not produced by
        recorded operations.
        """
        if self.data.size != 1:
            raise GraphError(f"backward requires a scalar, got shape {self.data.shape}")
        if self._grad_fn is None:
            raise GraphError("backward on a tensor with no recorded operations")

        tape = Tape(self)
        # Propagate through a scratch map and only then flush into .grad, so
        # repeated backward calls accumulate instead of compounding. Stored
        # gradients may share buffers with each other; nothing in the engine
        # mutates a gradient array in place, so that sharing is safe.
        flowing: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in tape.reverse():
            g = flowing.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._grad_fn is None:
                continue
            for parent, pg in zip(node._parents, node._grad_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = flowing.get(id(parent))
                flowing[id(parent)] = pg if prev is None else prev + pg

    # -- elementwise helpers (same shape or scalar operand) -------------------

    def _coerce(self, other):
        if isinstance(other, Tensor):
            if other.data.shape != self.data.shape:
                raise ShapeError(
                    f"elementwise op needs matching shapes, got {self.data.shape} and {other.data.shape}"
                )
            return other
        return Tensor(np.full_like(self.data, float(other)))

    def __add__(self, other):
        other = self._coerce(other)
        return Tensor.result(
            self.data + other.data,
            (self, other),
            lambda g: (g, g),
            "add",
        )

    def __mul__(self, other):
        other = self._coerce(other)
        a, b = self, other
        return Tensor.result(
            a.data * b.data,
            (a, b),
            lambda g: (g * b.data, g * a.data),
            "mul",
        )

    def __neg__(self):
        return Tensor.result(-self.data, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def sum(self):
        """Sum of all elements, as a scalar tensor."""
        shape = self.data.shape
        return Tensor.result(
            np.asarray(self.data.sum()),
            (self,),
            lambda g: (np.full(shape, float(g)),),
            "sum",
        )

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        return Tensor.result(
            self.data.reshape(shape),
            (self,),
            lambda g: (g.reshape(old),),
            "reshape",
        )


class Tape:
    """Topologically ordered record of the operations reachable from a root.

    ``nodes`` lists every reachable tensor with inputs strictly before the
    tensors that consume them; a backward replay visits each node exactly once.
    """

    def __init__(self, root: Tensor):
        order: list[Tensor] = []
        visited: set[int] = set()
        placed: set[int] = set()
        stack = [root]
        while stack:
            node = stack[-1]
            if id(node) in visited:
                stack.pop()
                if id(node) not in placed:
                    placed.add(id(node))
                    order.append(node)
                continue
            visited.add(id(node))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append(p)
        self.nodes = order

    def reverse(self):
        return reversed(self.nodes)

    def __len__(self):
        return len(self.nodes)


class Parameter:
    """Named trainable tensor; the tensor's ``grad`` slot is the accumulator."""

    __slots__ = ("name", "tensor")

    def __init__(self, name: str, value):
        self.name = name
        self.tensor = Tensor(snap32(np.asarray(value, dtype=np.float64)), requires_grad=True)

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self):
        return self.tensor.grad

    def as_input(self, frozen: bool) -> Tensor:
        """The tensor to feed into a graph; a constant view when frozen."""
        if frozen:
            return Tensor(self.tensor.data)
        return self.tensor

    def zero_grad(self):
        self.tensor.grad = None

    def assign(self, value: np.ndarray):
        """Replace the value in place, snapping onto the float32 grid."""
        np.copyto(self.tensor.data, snap32(np.asarray(value, dtype=np.float64)))

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape})"
