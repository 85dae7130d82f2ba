"""Structure-aware refinement of semantic embeddings.

For an entity ``x`` the context pool holds the semantic vectors of its graph
neighbourhood, plus ``x``'s own vector when its train degree is at most the
anchor threshold ``phi``.  The semantic vector, projected to a query, attends
over the projected pool; a small MLP gate blends the projected query with the
attended context, and a residual layer norm produces the final vector.

All functions work on batches: ``e_sem`` is ``[B, d]`` and a pool batch is a
``[B, P]`` id matrix with a boolean mask.  1-D inputs are promoted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .kg_store import TripleStore
from .numerics import Parameter, Tensor, glorot_uniform, ops
from .semantic import EmbeddingTable

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynergyConfig:
    phi: float = 1
    hops: int = 1
    pool_cap: int = 64
    heads: int = 1
    dropout: float = 0.1
    enable_cross: bool = True
    enable_gate: bool = True
    enable_anchor: bool = True

    def __post_init__(self):
        if not 1 <= self.hops <= 5:
            raise ValueError(f"hops must be in [1, 5], got {self.hops}")
        if self.pool_cap < 1:
            raise ValueError("pool_cap must be >= 1")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")


class SynergyParams:
    """Projections, gate MLP and layer-norm affine.

    The gate's output weights start at zero and its output bias at
    ``gate_bias_init``, so the initial gate value is ``sigmoid(gate_bias_init)``
    for every input.
    """

    def __init__(self, d: int, gate_hidden: int, rng: np.random.Generator, gate_bias_init: float = 2.0):
        self.d = d
        self.W_Q = Parameter(glorot_uniform(rng, d, d), "syn.W_Q")
        self.W_KV = Parameter(glorot_uniform(rng, d, d), "syn.W_KV")
        self.W_g1 = Parameter(glorot_uniform(rng, gate_hidden, 2 * d), "syn.W_g1")
        self.b_g1 = Parameter(np.zeros(gate_hidden), "syn.b_g1")
        self.w_g2 = Parameter(np.zeros(gate_hidden), "syn.w_g2")
        self.b_g2 = Parameter(np.full(1, float(gate_bias_init)), "syn.b_g2")
        self.ln_gain = Parameter(np.ones(d), "syn.ln_gain")
        self.ln_bias = Parameter(np.zeros(d), "syn.ln_bias")

    def parameters(self) -> list[Parameter]:
        return [self.W_Q, self.W_KV, self.W_g1, self.b_g1, self.w_g2, self.b_g2, self.ln_gain, self.ln_bias]


def anchor_fires(degree: int, phi: float, enable_anchor: bool = True) -> bool:
    return bool(enable_anchor) and degree <= phi


@dataclass
class ContextPool:
    member_ids: np.ndarray
    is_self_anchor: np.ndarray
    degenerate: bool = False
    H_C: Tensor | None = None

    def __len__(self) -> int:
        return len(self.member_ids)

    @property
    def has_self(self) -> bool:
        return bool(self.is_self_anchor.any())


def build_context_pool(x: int, cfg: SynergyConfig, store: TripleStore, table: EmbeddingTable | None = None,
                       rng: np.random.Generator | None = None,
                       neighbors: list[int] | None = None) -> ContextPool:
    """Pool for entity ``x``: self anchor (if it fires) followed by its neighbourhood.

    An isolated entity with the anchor switched off would get an empty pool;
    it falls back to a self-only pool flagged ``degenerate`` (the member is
    not marked as an anchor, since the anchor did not fire).
    """
    if neighbors is None:
        neighbors = store.neighborhood(x, cfg.hops, cfg.pool_cap, rng)
    anchored = anchor_fires(int(store.degree[x]), cfg.phi, cfg.enable_anchor)
    ids = ([x] if anchored else []) + list(neighbors)
    is_self = [anchored] + [False] * len(neighbors) if anchored else [False] * len(neighbors)
    degenerate = False
    if not ids:
        log.info("entity %d has an empty context pool; using itself", x)
        ids, is_self, degenerate = [x], [False], True
    pool = ContextPool(np.asarray(ids, dtype=np.int64), np.asarray(is_self, dtype=bool), degenerate)
    if table is not None:
        pool.H_C = ops.take_rows(table.entity, pool.member_ids)
    return pool


class PoolIndex:
    """Context pools for every entity, padded into a ``[E, P]`` id matrix.

    Neighbourhood samples are drawn once, so training and evaluation see the
    same pool for a given entity throughout a run.
    """

    def __init__(self, store: TripleStore, cfg: SynergyConfig, rng: np.random.Generator):
        pools = [build_context_pool(x, cfg, store, rng=rng) for x in range(store.n_entities)]
        width = max((len(p) for p in pools), default=1)
        self.ids = np.zeros((len(pools), width), dtype=np.int64)
        self.mask = np.zeros((len(pools), width), dtype=bool)
        self.self_anchor = np.zeros(len(pools), dtype=bool)
        self.degenerate = np.zeros(len(pools), dtype=bool)
        for x, p in enumerate(pools):
            self.ids[x, :len(p)] = p.member_ids
            self.mask[x, :len(p)] = True
            self.self_anchor[x] = p.has_self
            self.degenerate[x] = p.degenerate
        self.pools = pools

    def batch(self, entities) -> tuple[np.ndarray, np.ndarray]:
        """Ids and mask at the run-wide pool width.

        A fixed width keeps every reduction over pool slots the same length,
        so an entity's vector does not depend on what else is in the batch.
        """
        entities = np.asarray(entities, dtype=np.int64)
        return self.ids[entities], self.mask[entities]


def _as_batch(x) -> tuple[Tensor, bool]:
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim == 1:
        return ops.reshape(x, (1, x.shape[0])), True
    return x, False


def attend(e_sem, members, params: SynergyParams, cfg: SynergyConfig, mask=None):
    """Cross-attention with the projected semantic vector as query.

    ``members`` is ``[B, P, d]`` (or ``[P, d]`` with a 1-D ``e_sem``).  Returns
    ``(q, c_syn, weights)`` with weights of shape ``[B, heads, P]``.  Each
    head scores with ``1/sqrt(d_head)``, so one head uses ``1/sqrt(d)``.
    With cross attention disabled the context is the plain mean of the
    projected members.
    """
    e_sem, single = _as_batch(e_sem)
    members = members if isinstance(members, Tensor) else Tensor(members)
    if single and members.ndim == 2:
        members = ops.reshape(members, (1,) + members.shape)
    B, P, d = members.shape
    if e_sem.shape != (B, d):
        raise ValueError(f"attend shape mismatch: e_sem {e_sem.shape} vs members {members.shape}")
    mask = np.ones((B, P), dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(B, P)
    h = cfg.heads
    if d % h:
        raise ValueError(f"heads={h} must divide d={d}")
    dh = d // h

    q = ops.affine(params.W_Q, e_sem)
    V = ops.affine(params.W_KV, members)
    if cfg.enable_cross:
        q4 = ops.reshape(q, (B, h, 1, dh))
        K4 = ops.transpose(ops.reshape(V, (B, P, h, dh)), (0, 2, 3, 1))
        logits = ops.div(ops.matmul(q4, K4), math.sqrt(dh))
        weights = ops.softmax(logits, axis=-1, mask=mask[:, None, None, :])
    else:
        uniform = mask / mask.sum(axis=-1, keepdims=True)
        weights = Tensor(np.broadcast_to(uniform[:, None, None, :], (B, h, 1, P)).copy())
    V4 = ops.transpose(ops.reshape(V, (B, P, h, dh)), (0, 2, 1, 3))
    c = ops.reshape(ops.matmul(weights, V4), (B, d))
    w = ops.reshape(weights, (B, h, P))
    if single:
        return ops.reshape(q, (d,)), ops.reshape(c, (d,)), ops.reshape(w, (h, P))
    return q, c, w


def gate_coefficient(q, c_syn, params: SynergyParams, cfg: SynergyConfig) -> Tensor:
    """``sigmoid(w_g2 . tanh(W_g1 [q; c] + b_g1) + b_g2)``, or 0.5 when the gate is off."""
    q, single = _as_batch(q)
    c_syn, _ = _as_batch(c_syn)
    if not cfg.enable_gate:
        alpha = Tensor(np.full(q.shape[0], 0.5))
    else:
        hidden = ops.tanh(ops.affine(params.W_g1, ops.concat([q, c_syn], axis=-1), params.b_g1))
        alpha = ops.sigmoid(ops.add(ops.matmul(hidden, params.w_g2), params.b_g2))
    return ops.reshape(alpha, ()) if single else alpha


def fuse(e_sem, q, c_syn, alpha, params: SynergyParams, p: float = 0.1, train: bool = False,
         rng: np.random.Generator | None = None) -> Tensor:
    """``LayerNorm(e_sem + Dropout(alpha q + (1 - alpha) c_syn))``."""
    e_sem, single = _as_batch(e_sem)
    q, _ = _as_batch(q)
    c_syn, _ = _as_batch(c_syn)
    alpha = alpha if isinstance(alpha, Tensor) else Tensor(alpha)
    a = ops.reshape(alpha, (-1, 1))
    h_syn = ops.add(ops.mul(a, q), ops.mul(ops.sub(1.0, a), c_syn))
    out = ops.layer_norm(ops.add(e_sem, ops.dropout(h_syn, p, train, rng)), params.ln_gain, params.ln_bias)
    return ops.reshape(out, (out.shape[-1],)) if single else out


@dataclass
class SynergyOutput:
    phi: Tensor
    alpha: Tensor
    weights: Tensor
    q: Tensor
    c_syn: Tensor


def synergize(e_sem, pool_ids, pool_mask, table: EmbeddingTable, params: SynergyParams,
              cfg: SynergyConfig, train: bool = False, rng: np.random.Generator | None = None) -> SynergyOutput:
    """Full refinement for a batch: gather pool members, attend, gate, fuse.

    ``e_sem`` is the tower's semantic vector: the composed (head, relation)
    vector for queries, or the entity row for candidates.  ``pool_ids`` are
    the pools of the head entity or of the candidate respectively.
    """
    members = ops.take_rows(table.entity, pool_ids)
    q, c, w = attend(e_sem, members, params, cfg, mask=pool_mask)
    alpha = gate_coefficient(q, c, params, cfg)
    out = fuse(e_sem, q, c, alpha, params, cfg.dropout, train, rng)
    return SynergyOutput(out, alpha, w, q, c)
