"""Tensors, parameters and the gradient tape.

Every primitive in :mod:`synergykgc.numerics.ops` computes its forward value
eagerly with numpy and, when a :class:`Tape` is active and at least one input
requires a gradient, appends a node holding a closure that maps the output
gradient to the input gradients.  :func:`backward` replays those nodes in
exact reverse order of recording.
"""

from __future__ import annotations

import contextlib
from collections.abc import Callable, Iterator, Sequence

import numpy as np

DTYPE = np.float64


class NumericError(RuntimeError):
    """Non-finite value met where a finite one is required."""


class Tensor:
    """A float64 array that may take part in gradient propagation."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> Tensor:
        """Copy of the value that no tape can see through."""
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.data)

    # arithmetic sugar, resolved lazily to avoid an import cycle
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


class Parameter(Tensor):
    """A named leaf tensor updated by the optimizer.

    ``grad`` always exists and has the value's shape.  A non-trainable
    parameter never requires a gradient, so tapes do not record through it.
    """

    def __init__(self, data, name: str, trainable: bool = True):
        super().__init__(data, requires_grad=trainable, name=name)
        self.trainable = bool(trainable)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def freeze(self) -> None:
        self.trainable = False
        self.requires_grad = False

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, trainable={self.trainable})"


class _Node:
    __slots__ = ("out", "inputs", "backward_fn", "op")

    def __init__(self, out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable, op: str):
        self.out = out
        self.inputs = tuple(inputs)
        self.backward_fn = backward_fn
        self.op = op


class Tape:
    """Ordered record of primitive applications, consumed by one backward pass."""

    def __init__(self) -> None:
        self.nodes: list[_Node] = []
        self.consumed = False

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable, op: str) -> None:
        if self.consumed:
            raise RuntimeError("tape already consumed by a backward pass")
        self.nodes.append(_Node(out, inputs, backward_fn, op))

    def __enter__(self) -> Tape:
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.remove(self)


_TAPE_STACK: list[Tape] = []


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


@contextlib.contextmanager
def no_tape() -> Iterator[None]:
    """Suspend recording, e.g. for evaluation passes."""
    saved = list(_TAPE_STACK)
    _TAPE_STACK.clear()
    try:
        yield
    finally:
        _TAPE_STACK.extend(saved)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_output(data: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    """Wrap ``data`` and record it on the active tape if any input needs a gradient."""
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(out, inputs, backward_fn, op)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(param) into every trainable parameter the tape reached."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape.consumed:
        raise RuntimeError("tape already consumed by a backward pass")
    tape.consumed = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    reached: dict[int, Parameter] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        in_grads = node.backward_fn(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if gi.shape != t.shape:
                raise AssertionError(f"{node.op}: gradient shape {gi.shape} != input shape {t.shape}")
            key = id(t)
            grads[key] = grads[key] + gi if key in grads else gi
            if isinstance(t, Parameter):
                reached[key] = t

    for key, p in reached.items():
        g = grads[key]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {p.name!r}")
        p.grad = p.grad + g
    # free (non-parameter) leaves keep their gradient for inspection
    for node in tape.nodes:
        for t in node.inputs:
            if t.requires_grad and not isinstance(t, Parameter) and id(t) in grads:
                t.grad = grads[id(t)] if t.grad is None else t.grad + grads[id(t)]
                del grads[id(t)]


def zero_grads(params: Sequence[Parameter]) -> None:
    for p in params:
        p.zero_grad()
