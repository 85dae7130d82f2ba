"""Differentiable primitives over :class:`~synergykgc.numerics.tensor.Tensor`.

Broadcasting is supported for the elementwise ops; the backward pass sums
gradients back to each input's shape.  Reductions, softmax and layer norm act
on the last axis unless told otherwise.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .tensor import NumericError, Parameter, Tensor, as_tensor, make_output


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_output(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_output(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_output(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return make_output(
        out, (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape),
                   _unbroadcast(-g * out / b.data, b.shape)), "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_output(-a.data, (a,), lambda g: (-g,), "neg")


def square(a) -> Tensor:
    a = as_tensor(a)
    return make_output(a.data ** 2, (a,), lambda g: (2.0 * a.data * g,), "square")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_output(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    return make_output(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # stable in both tails
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return make_output(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return make_output(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def dropout(a, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p); eval mode is the identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    a = as_tensor(a)
    if not train or p == 0.0:
        return a
    if rng is None:
        raise ValueError("train-mode dropout needs a random generator")
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    return make_output(a.data * mask, (a,), lambda g: (g * mask,), "dropout")


# ---------------------------------------------------------------------------
# shape

def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    return make_output(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    inverse = np.argsort(axes)
    return make_output(np.transpose(a.data, axes), (a,),
                       lambda g: (np.transpose(g, inverse),), "transpose")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_output(np.concatenate([t.data for t in ts], axis=axis), ts, grad_fn, "concat")


def take_rows(table, index) -> Tensor:
    """Gather rows of a 2-D table; ``index`` may have any integer shape."""
    table = as_tensor(table)
    index = np.asarray(index, dtype=np.int64)

    def grad_fn(g):
        full = np.zeros_like(table.data)
        np.add.at(full, index.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return make_output(table.data[index], (table,), grad_fn, "take_rows")


# ---------------------------------------------------------------------------
# reductions and products

def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_output(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), grad_fn, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return div(sum(a, axis=axis, keepdims=keepdims), float(n))


def matmul(a, b) -> Tensor:
    """numpy ``@`` semantics for operands of rank >= 1, batched over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[0 if b.ndim == 1 else -2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    A = a.data[None, :] if a.ndim == 1 else a.data
    B = b.data[:, None] if b.ndim == 1 else b.data
    out = A @ B

    def grad_fn(g):
        G = g
        if a.ndim == 1:
            G = np.expand_dims(G, -2)
        if b.ndim == 1:
            G = np.expand_dims(G, -1)
        ga = G @ np.swapaxes(B, -1, -2)
        gb = np.swapaxes(A, -1, -2) @ G
        ga = ga.reshape(ga.shape[:-2] + (ga.shape[-1],)) if a.ndim == 1 else ga
        gb = gb.reshape(gb.shape[:-1]) if b.ndim == 1 else gb
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    if a.ndim == 1:
        out = out.reshape(out.shape[:-2] + (out.shape[-1],))
    if b.ndim == 1:
        out = out.reshape(out.shape[:-1])
    return make_output(out, (a, b), grad_fn, "matmul")


def affine(W, x, b=None) -> Tensor:
    """``W x + b`` for ``x`` of shape [n] or a batch [..., n]."""
    W, x = as_tensor(W), as_tensor(x)
    if W.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise ValueError(f"affine shape mismatch: W {W.shape} vs x {x.shape}")
    if b is not None and as_tensor(b).shape != (W.shape[0],):
        raise ValueError(f"affine shape mismatch: W {W.shape} vs b {as_tensor(b).shape}")
    # einsum rather than BLAS: each output row is then computed the same way
    # whatever the batch size, so batched and one-at-a-time results agree bitwise
    Wd, xd = W.data, x.data
    out = np.einsum("...j,ij->...i", xd, Wd)

    def grad_fn(g):
        g2 = g.reshape(-1, g.shape[-1])
        gW = g2.T @ xd.reshape(-1, xd.shape[-1])
        return gW, g @ Wd

    y = make_output(out, (W, x), grad_fn, "affine")
    return y if b is None else add(y, b)


# ---------------------------------------------------------------------------
# normalisation

def softmax(a, axis: int = -1, mask=None) -> Tensor:
    """Max-shifted softmax; entries where ``mask`` is False get weight exactly 0."""
    a = as_tensor(a)
    x = a.data
    if not np.all(np.isfinite(x)):
        raise NumericError("softmax input contains non-finite values")
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        x = np.where(mask, x, -np.inf)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def grad_fn(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return make_output(out, (a,), grad_fn, "softmax")


def logsumexp(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    s = np.sum(np.exp(a.data - m), axis=axis, keepdims=True)
    out = (m + np.log(s)).squeeze(axis)
    weights = np.exp(a.data - m) / s
    return make_output(out, (a,), lambda g: (np.expand_dims(g, axis) * weights,), "logsumexp")


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis with 1/d variance, then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if d < 2:
        raise ValueError(f"layer_norm needs at least 2 features, got {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gain.data * xhat + bias.data

    def grad_fn(g):
        gx_hat = g * gain.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        ggain = _unbroadcast(g * xhat, gain.shape)
        gbias = _unbroadcast(g, bias.shape)
        return gx, ggain, gbias

    return make_output(out, (x, gain, bias), grad_fn, "layer_norm")


def l2_normalize(a, axis: int = -1) -> Tensor:
    """Rows scaled to unit length; a zero row is an error."""
    a = as_tensor(a)
    norm = np.sqrt(np.sum(a.data * a.data, axis=axis, keepdims=True))
    if np.any(norm == 0.0):
        raise NumericError("cannot normalise a zero-norm vector")
    out = a.data / norm

    def grad_fn(g):
        return ((g - out * np.sum(g * out, axis=axis, keepdims=True)) / norm,)

    return make_output(out, (a,), grad_fn, "l2_normalize")


# ---------------------------------------------------------------------------
# losses and similarities

def cosine(u, v) -> Tensor:
    """Cosine similarity along the last axis (broadcasting over leading axes)."""
    return sum(mul(l2_normalize(u), l2_normalize(v)), axis=-1)


def cosine_matrix(U, V) -> Tensor:
    """Pairwise cosine scores, ``[B, d] x [N, d] -> [B, N]``."""
    return matmul(l2_normalize(U), transpose(l2_normalize(V), (1, 0)))


def info_nce(scores, temperature: float, margin: float = 0.0) -> Tensor:
    """Batch-mean InfoNCE over a square score matrix whose diagonal holds the positives.

    ``margin`` is subtracted from each positive score before the temperature
    scaling.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    scores = as_tensor(scores)
    n = scores.shape[0]
    if scores.ndim != 2 or scores.shape[1] != n or n < 1:
        raise ValueError(f"info_nce needs a non-empty square score matrix, got {scores.shape}")
    eye = np.eye(n)
    logits = div(sub(scores, margin * eye), temperature)
    positive = sum(mul(logits, eye), axis=1)
    return mean(sub(logsumexp(logits, axis=1), positive))


def mse_rows(pred, target) -> Tensor:
    """Mean over the batch of squared L2 row distances."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = sub(pred, target)
    rows = sum(square(diff), axis=-1)
    return mean(rows)


def stop_gradient(a) -> Tensor:
    return as_tensor(a).detach()


__all__ = [
    "Parameter", "add", "sub", "mul", "div", "neg", "square", "exp", "log", "sigmoid", "tanh",
    "dropout", "reshape", "transpose", "concat", "take_rows", "sum", "mean", "matmul", "affine",
    "softmax", "logsumexp", "layer_norm", "l2_normalize", "cosine", "cosine_matrix", "info_nce",
    "mse_rows", "stop_gradient",
]
