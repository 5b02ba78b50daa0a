"""
Reverse-mode automatic differentiation on numpy arrays.

A :class:`GradientTape` records every differentiable operation executed while it
is active and at least one input requires a gradient. :func:`backward` replays
the recording once, in reverse, and returns a :class:`Gradients` mapping.

    with GradientTape() as tape:
        loss = (w * x).sum()
    grads = backward(loss, tape)
    grads[w]                      # d loss / d w

Layers with hand-written adjoints (convolutions, GRUs, norms) record a single
node through :func:`record`; the generic ops below cover the glue between them.
"""
import contextlib
import contextvars
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import UsageError

_active_tape = contextvars.ContextVar("fdfnet_active_tape", default=None)
_grad_enabled = contextvars.ContextVar("fdfnet_grad_enabled", default=True)


class Tensor:
    """N-dimensional array that may take part in gradient recording.

    Tensors hash by identity and do not overload ``==``, so they can key dicts.
    """

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        data = np.asarray(data)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        self.data = data
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self):
        return mean(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


@dataclass
class Node:
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class GradientTape:
    """Execution-ordered record of differentiable operations."""

    def __init__(self):
        self.nodes = []
        self.consumed = False
        self._token = None

    def __enter__(self):
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc):
        _active_tape.reset(self._token)
        self._token = None
        return False

    def __len__(self):
        return len(self.nodes)


@contextlib.contextmanager
def no_grad():
    """Suspend recording, e.g. for the frozen stage-1 network."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_recording() -> bool:
    return _grad_enabled.get() and _active_tape.get() is not None


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def record(data: np.ndarray, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    """Wrap ``data`` as the output of an op and put the op on the active tape.

    ``backward_fn(grad_out)`` must return one gradient (or ``None``) per input.
    """
    out = Tensor(data)
    tape = _active_tape.get()
    if tape is not None and _grad_enabled.get() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append(Node(tuple(inputs), out, backward_fn))
    return out


class Gradients(Mapping):
    """Gradient lookup keyed by tensor; non-participating tensors get zeros."""

    def __init__(self, grads: dict):
        self._grads = grads

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        g = self._grads.get(tensor)
        return np.zeros_like(tensor.data) if g is None else g

    def get(self, tensor, default=None):
        return self._grads.get(tensor, default)

    def __contains__(self, tensor):
        return tensor in self._grads

    def __iter__(self):
        return iter(self._grads)

    def __len__(self):
        return len(self._grads)


def backward(loss: Tensor, tape: GradientTape) -> Gradients:
    """Propagate d(loss) to every tensor recorded on ``tape``."""
    if tape.consumed:
        raise UsageError("gradient tape was already replayed", hint="record a fresh forward pass")
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape.consumed = True

    grads = {loss: np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.get(node.output)
        if g is None:
            continue
        for tensor, gi in zip(node.inputs, node.backward_fn(g)):
            if gi is None or not tensor.requires_grad:
                continue
            gi = np.asarray(gi, dtype=tensor.dtype)
            if gi.shape != tensor.shape:
                gi = np.broadcast_to(gi, tensor.shape)
            prev = grads.get(tensor)
            grads[tensor] = gi.copy() if prev is None else prev + gi

    for tensor, g in grads.items():
        tensor.grad = g
    return Gradients(grads)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return record(a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return record(a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return record(a.data * b.data, (a, b),
                  lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def neg(a) -> Tensor:
    return record(-a.data, (a,), lambda g: (-g,))


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return record(out, (a,), backward_fn)


def mean(a: Tensor) -> Tensor:
    """Mean over all elements, accumulated in float64."""
    n = a.data.size
    out = np.asarray(a.data.mean(dtype=np.float64))
    return record(out, (a,), lambda g: (np.full(a.shape, float(g) / n),))


def absolute(a: Tensor) -> Tensor:
    return record(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def square(a: Tensor) -> Tensor:
    return record(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def reshape(a: Tensor, shape) -> Tensor:
    return record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    inverse = None if axes is None else tuple(np.argsort(axes))
    return record(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return record(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                  lambda g: tuple(np.split(g, bounds, axis=axis)))


def take(a: Tensor, index) -> Tensor:
    def backward_fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return record(a.data[index], (a,), backward_fn)
