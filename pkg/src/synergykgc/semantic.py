"""Semantic tower: embedding tables, the (head, relation) composer, cosine scores
and the in-batch contrastive warming loss.

The text encoder is replaced by lookup tables.  The query side mixes head and
relation vectors through a one-layer tanh composer, the entity side is the
bare table row, so the tail stream never sees a relation id.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .numerics import Parameter, Tensor, glorot_uniform, ops


class EmbeddingTable:
    """Per-entity and per-relation vectors of width ``d``.

    Rows start as N(0, 1/d) so every row has roughly unit norm.  Vectors
    loaded from a file are frozen: they never enter a tape.
    """

    def __init__(self, n_entities: int, n_relations: int, d: int, rng: np.random.Generator,
                 entity_vectors: np.ndarray | None = None):
        self.d = d
        ent = rng.normal(0.0, 1.0 / np.sqrt(d), size=(n_entities, d))
        rel = rng.normal(0.0, 1.0 / np.sqrt(d), size=(n_relations, d))
        self.frozen = entity_vectors is not None
        if self.frozen:
            if entity_vectors.shape != (n_entities, d):
                raise ValueError(f"entity vectors have shape {entity_vectors.shape}, expected {(n_entities, d)}")
            ent = np.array(entity_vectors, dtype=np.float64)
        self.entity = Parameter(ent, "emb.entity", trainable=not self.frozen)
        self.relation = Parameter(rel, "emb.relation")

    @property
    def n_entities(self) -> int:
        return self.entity.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relation.shape[0]

    def parameters(self) -> list[Parameter]:
        return [self.entity, self.relation]


class QueryComposer:
    def __init__(self, d: int, rng: np.random.Generator):
        self.W = Parameter(glorot_uniform(rng, d, 2 * d), "composer.W")
        self.b = Parameter(np.zeros(d), "composer.b")

    def parameters(self) -> list[Parameter]:
        return [self.W, self.b]


def _check_ids(ids: np.ndarray, n: int, kind: str) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexError(f"{kind} id out of range [0, {n}): {ids[(ids < 0) | (ids >= n)][:5].tolist()}")
    return ids


def encode_query(table: EmbeddingTable, composer: QueryComposer, h, r) -> Tensor:
    """``tanh(W_c [emb(h); emb(r)] + b_c)``; scalar ids give a [d] vector, arrays a batch."""
    h = _check_ids(h, table.n_entities, "entity")
    r = _check_ids(r, table.n_relations, "relation")
    x = ops.concat([ops.take_rows(table.entity, h), ops.take_rows(table.relation, r)], axis=-1)
    return ops.tanh(ops.affine(composer.W, x, composer.b))


def encode_entity(table: EmbeddingTable, t) -> Tensor:
    return ops.take_rows(table.entity, _check_ids(t, table.n_entities, "entity"))


def cosine_score(u, v) -> Tensor:
    return ops.cosine(u, v)


def info_nce(scores, tau: float, gamma: float = 0.0) -> Tensor:
    """In-batch InfoNCE; row ``i`` of ``scores`` pairs query ``i`` with every batch tail."""
    return ops.info_nce(scores, tau, gamma)


def load_entity_vectors(path, entity_ids: dict[str, int], d: int | None = None) -> np.ndarray:
    """Read ``entity<TAB>v1,v2,...`` lines into a matrix ordered by vocabulary id.

    Every vocabulary entity must be present; unknown labels are ignored.
    """
    rows: dict[int, np.ndarray] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        label, _, values = line.partition("\t")
        vec = np.array([float(v) for v in values.split(",")], dtype=np.float64)
        if d is None:
            d = len(vec)
        if len(vec) != d:
            raise ValueError(f"{path}:{lineno}: expected {d} values, got {len(vec)}")
        if label in entity_ids:
            rows[entity_ids[label]] = vec
    missing = [e for e, i in entity_ids.items() if i not in rows]
    if missing:
        raise ValueError(f"{path}: no vector for {len(missing)} entities, e.g. {missing[:3]}")
    return np.stack([rows[i] for i in range(len(entity_ids))])


def save_entity_vectors(path, vectors: np.ndarray, labels: list[str]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for label, vec in zip(labels, vectors):
            fh.write(label + "\t" + ",".join(repr(float(v)) for v in vec) + "\n")
    return path
