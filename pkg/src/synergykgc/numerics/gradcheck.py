"""Central finite-difference checks against reverse-mode gradients."""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

from .tensor import Parameter, Tape, Tensor, backward, no_tape


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """``max|a-b| / max(max|a|, max|b|)``, 0 when both are identically zero."""
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - b)) / scale)


def numeric_grad(loss_fn: Callable[[], Tensor], t: Tensor, step: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn()`` with respect to every element of ``t``."""
    g = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    gflat = g.reshape(-1)
    with no_tape():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn().item()
            flat[i] = orig - step
            down = loss_fn().item()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
    return g


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    step: float = 1e-5,
) -> dict[str, float]:
    """Relative error per tensor between tape gradients and central differences.

    ``loss_fn`` must be a pure function of the tensors' current values (reseed
    any randomness inside it).
    """
    for t in tensors:
        if isinstance(t, Parameter):
            t.zero_grad()
        else:
            t.grad = None
    tape = Tape()
    with tape:
        loss = loss_fn()
    backward(loss, tape)
    errors = {}
    for i, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        analytic = analytic.copy()
        numeric = numeric_grad(loss_fn, t, step)
        errors[t.name or f"tensor{i}"] = relative_error(analytic, numeric)
    return errors
