"""Filtered link-prediction ranking and metrics.

Each test triple ``(h, r, t)`` yields a forward query ``(h, r) -> t`` and a
backward query ``(t, r_inv) -> h``.  Ties are resolved by average rank.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kg_store import TripleStore
from .model import SynergyKGC
from .numerics import no_tape

log = logging.getLogger(__name__)

MODES = ("semantic", "synergy")
METRIC_KEYS = ("mrr", "mr", "hits1", "hits3", "hits10")
_CHUNK_ELEMENTS = 1 << 22


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def entity_representations(model: SynergyKGC, mode: str = "synergy", batch_size: int = 1024) -> np.ndarray:
    """Candidate-tower vectors for every entity under frozen parameters (eval mode)."""
    _check_mode(mode)
    n = model.store.n_entities
    parts = []
    with no_tape():
        for lo in range(0, n, batch_size):
            ids = np.arange(lo, min(n, lo + batch_size))
            if mode == "semantic":
                parts.append(model.entity_semantic(ids).data)
            else:
                parts.append(model.entity_synergy(ids, train=False).phi.data)
    return np.concatenate(parts, axis=0)


def query_representations(model: SynergyKGC, heads, relations, mode: str = "synergy") -> np.ndarray:
    _check_mode(mode)
    heads = np.atleast_1d(np.asarray(heads, dtype=np.int64))
    relations = np.atleast_1d(np.asarray(relations, dtype=np.int64))
    with no_tape():
        if mode == "semantic":
            return model.query_semantic(heads, relations).data
        return model.query_synergy(heads, relations, train=False).phi.data


def _unit_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    zero = norm[..., 0] == 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(norm > 0, x / np.where(norm > 0, norm, 1.0), 0.0)
    return unit, zero


def cosine_scores(queries: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """``[Q, d] x [E, d] -> [Q, E]`` cosine scores; zero-norm candidates score ``-inf``.

    Each score is a last-axis sum of elementwise products, so a score does
    not depend on how many queries or candidates share the call.
    """
    queries = np.atleast_2d(queries)
    qn, qzero = _unit_rows(queries)
    cn, czero = _unit_rows(candidates)
    if czero.any():
        log.warning("%d zero-norm candidate vectors ranked last", int(czero.sum()))
    if qzero.any():
        log.warning("%d zero-norm query vectors", int(qzero.sum()))
    out = np.empty((len(qn), len(cn)))
    step = max(1, _CHUNK_ELEMENTS // max(1, cn.size))
    for lo in range(0, len(qn), step):
        out[lo:lo + step] = np.sum(qn[lo:lo + step, None, :] * cn[None, :, :], axis=-1)
    out[:, czero] = -np.inf
    return out


def score_candidates(h: int, r: int, model: SynergyKGC, mode: str = "synergy",
                     entity_reps: np.ndarray | None = None) -> np.ndarray:
    """Cosine score of query ``(h, r)`` against every entity, both towers in ``mode``."""
    if entity_reps is None:
        entity_reps = entity_representations(model, mode)
    return cosine_scores(query_representations(model, [h], [r], mode), entity_reps)[0]


def filtered_rank(scores: np.ndarray, gold: int, filter_ids=()) -> float:
    """``1 + #{above} + #{tied}/2`` over candidates not in ``filter_ids`` (gold never filtered)."""
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= gold < len(scores):
        raise IndexError(f"gold id {gold} out of range [0, {len(scores)})")
    keep = np.ones(len(scores), dtype=bool)
    drop = np.fromiter((i for i in filter_ids if i != gold), dtype=np.int64)
    keep[drop] = False
    keep[gold] = False
    s = scores[keep]
    g = scores[gold]
    return 1.0 + float(np.count_nonzero(s > g)) + float(np.count_nonzero(s == g)) / 2.0


def metrics_from_ranks(ranks) -> dict[str, float]:
    """MRR, MR and Hits@k; sums are correctly rounded (fsum), so query order never matters."""
    ranks = [float(r) for r in ranks]
    n = len(ranks)
    if n == 0:
        return {k: float("nan") for k in METRIC_KEYS}
    return {
        "mrr": math.fsum(1.0 / r for r in ranks) / n,
        "mr": math.fsum(ranks) / n,
        "hits1": sum(r <= 1 for r in ranks) / n,
        "hits3": sum(r <= 3 for r in ranks) / n,
        "hits10": sum(r <= 10 for r in ranks) / n,
    }


@dataclass
class RankResult:
    head: int
    relation: int
    gold: int
    rank: float
    direction: str


@dataclass
class MetricsReport:
    overall: dict[str, float]
    forward: dict[str, float]
    backward: dict[str, float]
    n_queries: int
    mode: str = "synergy"
    coords: dict = field(default_factory=dict)

    def by_direction(self) -> dict[str, dict[str, float]]:
        return {"both": self.overall, "forward": self.forward, "backward": self.backward}

    def to_dict(self) -> dict:
        return {"mode": self.mode, "n_queries": self.n_queries, **self.overall,
                "forward": self.forward, "backward": self.backward, "coords": self.coords}

    def write_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def summary(self) -> str:
        o = self.overall
        return (f"MRR {100 * o['mrr']:.1f}  MR {o['mr']:.1f}  H@1 {100 * o['hits1']:.1f}  "
                f"H@3 {100 * o['hits3']:.1f}  H@10 {100 * o['hits10']:.1f}  ({self.n_queries} queries)")


def rank_split(store: TripleStore, triples: np.ndarray, model: SynergyKGC, mode: str = "synergy",
               entity_reps: np.ndarray | None = None, query_batch: int = 512) -> list[RankResult]:
    _check_mode(mode)
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if entity_reps is None:
        entity_reps = entity_representations(model, mode)
    R = store.vocab.n_base_relations
    queries = [(h, r, t, "forward") for h, r, t in triples.tolist()]
    queries += [(t, r + R, h, "backward") for h, r, t in triples.tolist()]
    results = []
    for lo in range(0, len(queries), query_batch):
        chunk = queries[lo:lo + query_batch]
        reps = query_representations(model, [q[0] for q in chunk], [q[1] for q in chunk], mode)
        scores = cosine_scores(reps, entity_reps)
        for (h, r, gold, direction), row in zip(chunk, scores):
            rank = filtered_rank(row, gold, store.filtered_candidates(h, r))
            results.append(RankResult(h, r, gold, rank, direction))
    return results


def report_from_ranks(results: list[RankResult], mode: str = "synergy", coords: dict | None = None) -> MetricsReport:
    fwd = [x.rank for x in results if x.direction == "forward"]
    bwd = [x.rank for x in results if x.direction == "backward"]
    return MetricsReport(
        overall=metrics_from_ranks(fwd + bwd),
        forward=metrics_from_ranks(fwd),
        backward=metrics_from_ranks(bwd),
        n_queries=len(results),
        mode=mode,
        coords=dict(coords or {}),
    )


def evaluate_split(store: TripleStore, triples: np.ndarray, model: SynergyKGC, mode: str = "synergy",
                   coords: dict | None = None) -> MetricsReport:
    """Filtered MRR, MR and Hits@{1,3,10} over both directions of every triple."""
    if len(triples) == 0:
        raise ValueError("cannot evaluate an empty split")
    return report_from_ranks(rank_split(store, triples, model, mode), mode, coords)
