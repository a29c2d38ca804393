"""Reverse-mode autodiff core: a numpy-backed Tensor with a tape of
vector-Jacobian products.

Graphs are built eagerly as ops run (unless inside :func:`no_grad`) and
freed once backward() consumes them.  Gradients accumulate into ``.grad``
of leaf tensors, so calling backward from two losses sums contributions.
Graph construction and backward are single-threaded per graph; distinct
graphs are independent.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import InvalidArgumentError

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """N-dimensional array participating in reverse-mode differentiation.

    ``_vjps`` holds ``(parent, vjp)`` pairs; ``vjp(g)`` maps the upstream
    gradient to this parent's gradient contribution.
    """

    __slots__ = ("data", "requires_grad", "grad", "_vjps")

    def __init__(self, data, requires_grad: bool = False, _vjps=()):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._vjps = _vjps

    # -- introspection ------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._vjps

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- autograd -----------------------------------------------------------

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Backpropagate from this tensor, accumulating into leaf ``.grad``."""
        if grad is None:
            if self.data.size != 1:
                raise InvalidArgumentError("backward() without a seed needs a scalar tensor")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise InvalidArgumentError(
                    f"seed gradient shape {grad.shape} != tensor shape {self.data.shape}"
                )

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._vjps:
                if id(parent) not in seen and parent.requires_grad:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjps:
                for parent, vjp in node._vjps:
                    if not parent.requires_grad:
                        continue
                    pg = vjp(g)
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg
            elif node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g

    # -- operator sugar (implemented in functional.py) ----------------------

    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        from . import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F
        return F.sub(other, self)

    def __neg__(self):
        from . import functional as F
        return F.neg(self)

    def __truediv__(self, other):
        from . import functional as F
        return F.div(self, other)

    def sum(self, axis=None, keepdims=False):
        from . import functional as F
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import functional as F
        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        from . import functional as F
        return F.reshape(self, shape)

    def transpose(self, axes):
        from . import functional as F
        return F.transpose(self, axes)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])


def astensor(x, dtype=None) -> Tensor:
    """Wrap a value as a constant (non-grad) Tensor."""
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if dtype is not None:
        arr = arr.astype(dtype)
    return Tensor(arr)
