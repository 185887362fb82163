"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation that touches a tensor with ``requires_grad`` records its
inputs and a backward closure on the result. ``backward`` walks the recorded
graph in reverse topological order, which plays the role of the tape.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, op: str = ""):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> Tensor:
        return Tensor(self.data.copy())

    def backward(self):
        backward(self)

    # operator sugar
    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise TypeError("only division by a Python scalar is supported")
        return scale(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return tsum(self)

    def mean(self):
        return mean(self)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    """Wrap ``data`` as the output of an operation on ``parents``.

    ``backward_fn(g)`` receives the upstream gradient and must accumulate into
    the ``grad`` of each parent that requires it (use :func:`accumulate`).
    Nothing is recorded when no parent requires a gradient.
    """
    out = Tensor.__new__(Tensor)
    out.data = data if data.dtype == np.float64 else data.astype(np.float64)
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out.op = op
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def accumulate(t: Tensor, g: np.ndarray):
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


def topological_order(root: Tensor) -> list[Tensor]:
    """Recorded operations reachable from ``root``, inputs before outputs."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor):
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor that requires grad")
    order = topological_order(loss)
    for node in order:
        # intermediate buffers restart at zero; leaves keep accumulating
        if node._parents:
            node.grad = np.zeros_like(node.data)
    loss.grad = loss.grad + 1.0 if not loss._parents else np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise and reduction ops


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a row vector added to every row of ``a``."""
    if a.shape == b.shape:
        def _bw(g):
            accumulate(a, g)
            accumulate(b, g)
    elif a.data.ndim == 2 and b.data.ndim == 1 and b.shape[0] == a.shape[1]:
        def _bw(g):
            accumulate(a, g)
            accumulate(b, g.sum(axis=0))
    elif b.data.ndim == 0:
        def _bw(g):
            accumulate(a, g)
            accumulate(b, np.asarray(g.sum()))
    else:
        raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}")
    return make_op(a.data + b.data, (a, b), _bw, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"cannot subtract shapes {a.shape} and {b.shape}")

    def _bw(g):
        accumulate(a, g)
        accumulate(b, -g)

    return make_op(a.data - b.data, (a, b), _bw, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")

    def _bw(g):
        accumulate(a, g * b.data)
        accumulate(b, g * a.data)

    return make_op(a.data * b.data, (a, b), _bw, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    def _bw(g):
        accumulate(a, g * c)

    return make_op(a.data * c, (a,), _bw, "scale")


def tsum(a: Tensor) -> Tensor:
    def _bw(g):
        accumulate(a, np.broadcast_to(g, a.shape).copy())

    return make_op(np.asarray(a.data.sum()), (a,), _bw, "sum")


def mean(a: Tensor) -> Tensor:
    n = a.data.size

    def _bw(g):
        accumulate(a, np.full(a.shape, float(g) / n))

    return make_op(np.asarray(a.data.mean()), (a,), _bw, "mean")


def ordered_dot(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``x @ w`` accumulated over the inner index in a fixed order.

    BLAS picks its summation order from the operand shapes, so a row's
    result can change in the last bit with the batch it sits in. Here every
    output row depends on its input row alone. ``w`` may carry leading axes
    (``(..., n_in, n_out)``), giving ``(batch, ..., n_out)``.
    """
    lead = (slice(None),) + (None,) * (w.ndim - 1)
    out = x[:, 0][lead] * w[..., 0, :]
    for i in range(1, x.shape[1]):
        out += x[:, i][lead] * w[..., i, :]
    return out


def matmul(a: Tensor, b: Tensor, ordered: bool = False) -> Tensor:
    """Matrix product; ``ordered=True`` makes rows independent of the batch (see ordered_dot)."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def _bw(g):
        accumulate(a, g @ b.data.T)
        accumulate(b, a.data.T @ g)

    out = ordered_dot(a.data, b.data) if ordered else a.data @ b.data
    return make_op(out, (a, b), _bw, "matmul")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def _bw(g):
        accumulate(x, g * mask)

    return make_op(np.where(mask, x.data, 0.0), (x,), _bw, "relu")


def log_softmax_np(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_np(z: np.ndarray) -> np.ndarray:
    shifted = np.exp(z - z.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under softmax(``logits``)."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2:
        raise DimensionError(f"logits must be 2-D, got {logits.shape}")
    batch, classes = logits.shape
    if batch < 1 or labels.shape != (batch,):
        raise DimensionError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.min() < 0 or labels.max() >= classes:
        raise IndexError(f"label out of range [0, {classes})")
    logp = log_softmax_np(logits.data)
    rows = np.arange(batch)
    loss = -logp[rows, labels].mean()

    def _bw(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        accumulate(logits, d * (float(g) / batch))

    return make_op(np.asarray(loss), (logits,), _bw, "cross_entropy")


def parameters_finite(params: Iterable[Tensor]) -> bool:
    return all(np.all(np.isfinite(p.data)) for p in params)
