"""AdamW with decoupled weight decay, plus global-norm gradient clipping."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

from .tensor import NumericError, Parameter


@dataclass
class OptimizerState:
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def arrays(self) -> dict[str, np.ndarray]:
        """Moments keyed for checkpointing."""
        out = {f"adam.m.{k}": a for k, a in self.m.items()}
        out.update({f"adam.v.{k}": a for k, a in self.v.items()})
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.m = {k[len("adam.m."):]: a.copy() for k, a in arrays.items() if k.startswith("adam.m.")}
        self.v = {k[len("adam.v."):]: a.copy() for k, a in arrays.items() if k.startswith("adam.v.")}


def clip_grad_norm(params: Iterable[Parameter], max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    params = [p for p in params if p.trainable]
    total = float(np.sqrt(np.sum([np.sum(p.grad * p.grad) for p in params]))) if params else 0.0
    if not np.isfinite(total):
        raise NumericError("non-finite gradient norm")
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            p.grad = p.grad * scale
    return total


def adamw_step(params: Iterable[Parameter], opt: OptimizerState) -> None:
    """One bias-corrected Adam update with weight decay applied to the values only.

    Gradients are zeroed afterwards.
    """
    params = list(params)
    opt.step += 1
    t = opt.step
    bc1 = 1.0 - opt.beta1 ** t
    bc2 = 1.0 - opt.beta2 ** t
    for p in params:
        if not p.trainable:
            p.zero_grad()
            continue
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {p.name!r}")
        m = opt.m.get(p.name)
        v = opt.v.get(p.name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = opt.beta1 * m + (1.0 - opt.beta1) * g
        v = opt.beta2 * v + (1.0 - opt.beta2) * g * g
        opt.m[p.name], opt.v[p.name] = m, v
        if opt.weight_decay:
            p.data = p.data * (1.0 - opt.lr * opt.weight_decay)
        p.data = p.data - opt.lr * (m / bc1) / (np.sqrt(v / bc2) + opt.eps)
        if not np.all(np.isfinite(p.data)):
            raise NumericError(f"non-finite value after update for parameter {p.name!r}")
        p.zero_grad()
