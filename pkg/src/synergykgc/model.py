"""The dual-tower model and its two training objectives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .kg_store import TripleStore
from .numerics import Parameter, Tensor, as_tensor, ops, spawn_rngs
from .semantic import EmbeddingTable, QueryComposer, encode_entity, encode_query
from .synergy import PoolIndex, SynergyConfig, SynergyOutput, SynergyParams, synergize


def synergy_config(cfg: TrainConfig) -> SynergyConfig:
    return SynergyConfig(phi=cfg.phi, hops=cfg.hops, pool_cap=cfg.pool_cap, heads=cfg.heads,
                         dropout=cfg.dropout, enable_cross=cfg.enable_cross,
                         enable_gate=cfg.enable_gate, enable_anchor=cfg.enable_anchor)


class SynergyKGC:
    """Semantic tables + query composer + synergy expert + fixed context pools."""

    def __init__(self, store: TripleStore, cfg: TrainConfig, entity_vectors: np.ndarray | None = None):
        self.store = store
        self.cfg = cfg
        self.syn_cfg = synergy_config(cfg)
        rngs = spawn_rngs(cfg.seed, "init.table", "init.composer", "init.synergy", "pools")
        self.table = EmbeddingTable(store.n_entities, store.vocab.n_relations, cfg.d, rngs["init.table"],
                                    entity_vectors=entity_vectors)
        self.composer = QueryComposer(cfg.d, rngs["init.composer"])
        self.synergy = SynergyParams(cfg.d, cfg.gate_width, rngs["init.synergy"], cfg.gate_bias_init)
        self.pools = PoolIndex(store, self.syn_cfg, rngs["pools"])

    def parameters(self) -> list[Parameter]:
        return self.table.parameters() + self.composer.parameters() + self.synergy.parameters()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name not in arrays:
                raise KeyError(f"checkpoint lacks parameter {p.name!r}")
            if arrays[p.name].shape != p.shape:
                raise ValueError(f"{p.name}: checkpoint shape {arrays[p.name].shape} != {p.shape}")
            p.data = np.array(arrays[p.name], dtype=np.float64)
            p.zero_grad()

    # towers ---------------------------------------------------------------
    def query_semantic(self, h, r) -> Tensor:
        return encode_query(self.table, self.composer, h, r)

    def entity_semantic(self, t) -> Tensor:
        return encode_entity(self.table, t)

    def query_synergy(self, h, r, train: bool = False, rng=None, e_sem: Tensor | None = None) -> SynergyOutput:
        e_sem = self.query_semantic(h, r) if e_sem is None else e_sem
        ids, mask = self.pools.batch(np.atleast_1d(h))
        return synergize(e_sem, ids, mask, self.table, self.synergy, self.syn_cfg, train, rng)

    def entity_synergy(self, t, train: bool = False, rng=None, e_sem: Tensor | None = None) -> SynergyOutput:
        e_sem = self.entity_semantic(t) if e_sem is None else e_sem
        ids, mask = self.pools.batch(np.atleast_1d(t))
        return synergize(e_sem, ids, mask, self.table, self.synergy, self.syn_cfg, train, rng)


@dataclass
class LossTerms:
    total: Tensor
    nce: Tensor
    align_hr: Tensor | None = None
    align_t: Tensor | None = None
    alpha: np.ndarray | None = None


def semantic_loss(model: SynergyKGC, batch: np.ndarray) -> LossTerms:
    """Warm-up objective: InfoNCE over cosine scores of the semantic towers."""
    cfg = model.cfg
    e_hr = model.query_semantic(batch[:, 0], batch[:, 1])
    e_t = model.entity_semantic(batch[:, 2])
    nce = ops.info_nce(ops.cosine_matrix(e_hr, e_t), cfg.tau, cfg.gamma)
    return LossTerms(total=nce, nce=nce)


def joint_loss(model: SynergyKGC, batch: np.ndarray, train: bool = True,
               rng: np.random.Generator | None = None, anchors=None) -> LossTerms:
    """Joint objective: synergy InfoNCE plus ``lam`` times the two alignment terms.

    Alignment targets are detached copies of the semantic vectors, so that
    term pulls the refined vectors towards the semantic ones and never the
    other way round.  ``anchors`` (a pair of ``[B, d]`` arrays for the query
    and entity side) pins the targets instead; finite-difference checks need
    this, since perturbing a table would otherwise move the targets too.
    """
    cfg = model.cfg
    e_hr = model.query_semantic(batch[:, 0], batch[:, 1])
    e_t = model.entity_semantic(batch[:, 2])
    out_hr = model.query_synergy(batch[:, 0], batch[:, 1], train, rng, e_sem=e_hr)
    out_t = model.entity_synergy(batch[:, 2], train, rng, e_sem=e_t)
    nce = ops.info_nce(ops.cosine_matrix(out_hr.phi, out_t.phi), cfg.tau, cfg.gamma)
    alpha = np.concatenate([out_hr.alpha.data.reshape(-1), out_t.alpha.data.reshape(-1)])
    if not cfg.enable_align or cfg.lam == 0:
        return LossTerms(total=nce, nce=nce, alpha=alpha)
    if anchors is None:
        anchors = ops.stop_gradient(e_hr), ops.stop_gradient(e_t)
    align_hr = alignment_loss(out_hr.phi, as_tensor(anchors[0]))
    align_t = alignment_loss(out_t.phi, as_tensor(anchors[1]))
    total = ops.add(nce, ops.mul(cfg.lam, ops.add(align_hr, align_t)))
    return LossTerms(total=total, nce=nce, align_hr=align_hr, align_t=align_t, alpha=alpha)


def alignment_loss(phi_batch, anchors) -> Tensor:
    """Batch mean of ``||phi - anchor||^2``; pass anchors already detached."""
    return ops.mse_rows(phi_batch, anchors)
