"""Knowledge-graph ingestion and indexing.

Triples are stored as ``int64`` arrays of shape ``[n, 3]`` holding
``(head, relation, tail)`` ids.  Relation ids ``[0, R)`` are the base
relations; ``r + R`` is the inverse of ``r`` and is labelled ``<label>_inv``.
Adjacency and degree come from the train split only.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

INVERSE_SUFFIX = "_inv"
PERCENTILES = (1, 10, 25, 50, 75, 90, 100)
MAX_MALFORMED_FRACTION = 0.01


class DataError(ValueError):
    """Input data that cannot be ingested."""


class Vocabulary:
    """Bijective label <-> dense id maps for entities and (augmented) relations."""

    def __init__(self, entities: Sequence[str], relations: Sequence[str]):
        self.entities = list(entities)
        self.base_relations = list(relations)
        self.entity_ids = {e: i for i, e in enumerate(self.entities)}
        self.relations = self.base_relations + [r + INVERSE_SUFFIX for r in self.base_relations]
        self.relation_ids = {r: i for i, r in enumerate(self.relations)}
        if len(self.entity_ids) != len(self.entities) or len(self.relation_ids) != len(self.relations):
            raise DataError("duplicate labels in vocabulary")

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_base_relations(self) -> int:
        return len(self.base_relations)

    @property
    def n_relations(self) -> int:
        """Relation count including inverses."""
        return len(self.relations)

    def inverse(self, r: int) -> int:
        R = self.n_base_relations
        return r + R if r < R else r - R

    def encode(self, triples: Iterable[tuple[str, str, str]]) -> np.ndarray:
        rows = [(self.entity_ids[h], self.relation_ids[r], self.entity_ids[t]) for h, r, t in triples]
        return np.asarray(rows, dtype=np.int64).reshape(-1, 3)

    def decode(self, triple: Sequence[int]) -> tuple[str, str, str]:
        h, r, t = (int(v) for v in triple)
        return self.entities[h], self.relations[r], self.entities[t]


def augment_inverses(triples: np.ndarray, n_base_relations: int) -> np.ndarray:
    """Originals followed by ``(t, r + R, h)`` for each ``(h, r, t)``, in input order."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    inverse = np.stack([triples[:, 2], triples[:, 1] + n_base_relations, triples[:, 0]], axis=1)
    return np.concatenate([triples, inverse], axis=0)


@dataclass(frozen=True)
class DegreeProfile:
    percentiles: dict[int, int]
    entity_count: int
    relation_count: int
    triple_counts: dict[str, int]

    def as_table(self) -> dict:
        """Field names as used in dataset-statistics tables (``P50``, ``Entities``...)."""
        out = {"Entities": self.entity_count, "Relations": self.relation_count}
        out.update({name.capitalize(): n for name, n in self.triple_counts.items()})
        out.update({f"P{p}": v for p, v in self.percentiles.items()})
        return out


@dataclass
class TripleStore:
    vocab: Vocabulary
    splits: dict[str, np.ndarray]
    descriptions: dict[str, tuple[str, str]] = field(default_factory=dict)
    malformed: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        n_e, R = self.vocab.n_entities, self.vocab.n_base_relations
        for name, arr in self.splits.items():
            arr = np.asarray(arr, dtype=np.int64).reshape(-1, 3)
            if arr.size and (arr[:, [0, 2]].min() < 0 or arr[:, [0, 2]].max() >= n_e
                             or arr[:, 1].min() < 0 or arr[:, 1].max() >= R):
                raise DataError(f"split {name!r} holds ids outside the vocabulary")
            arr.setflags(write=False)
            self.splits[name] = arr
        self.splits.setdefault("train", np.zeros((0, 3), dtype=np.int64))

        self.adjacency: list[list[tuple[int, int, int]]] = [[] for _ in range(n_e)]
        for h, r, t in self.splits["train"].tolist():
            self.adjacency[h].append((r, t, +1))
            self.adjacency[t].append((r, h, -1))
        self.degree = np.array([len(a) for a in self.adjacency], dtype=np.int64)
        self._undirected = [sorted({n for _, n, _ in a}) for a in self.adjacency]

        index: dict[tuple[int, int], set[int]] = {}
        for arr in self.splits.values():
            for h, r, t in augment_inverses(arr, R).tolist():
                index.setdefault((h, r), set()).add(t)
        self.filter_index = {k: frozenset(v) for k, v in index.items()}

    @property
    def n_entities(self) -> int:
        return self.vocab.n_entities

    def augmented(self, split: str = "train") -> np.ndarray:
        return augment_inverses(self.splits[split], self.vocab.n_base_relations)

    def filtered_candidates(self, h: int, r: int) -> frozenset[int]:
        """Every tail ``t`` with ``(h, r, t)`` in some split (inverses included)."""
        return self.filter_index.get((int(h), int(r)), frozenset())

    def neighborhood(self, x: int, hops: int, cap: int | None = None,
                     rng: np.random.Generator | None = None) -> list[int]:
        """Entities within ``hops`` undirected train edges of ``x``, in BFS order.

        When more than ``cap`` are reachable, ``cap`` of them are drawn
        uniformly with ``rng`` (BFS order is kept among the survivors).
        """
        if hops < 1:
            raise ValueError(f"hops must be >= 1, got {hops}")
        seen = {x}
        order: list[int] = []
        frontier = deque([(x, 0)])
        while frontier:
            node, depth = frontier.popleft()
            if depth == hops:
                continue
            for n in self._undirected[node]:
                if n not in seen:
                    seen.add(n)
                    order.append(n)
                    frontier.append((n, depth + 1))
        if cap is not None and len(order) > cap:
            if rng is None:
                raise ValueError("sampling a capped neighbourhood needs a random generator")
            keep = np.sort(rng.choice(len(order), size=cap, replace=False))
            order = [order[i] for i in keep]
        return order


def _read_triples(path: Path, name: str) -> tuple[list[tuple[str, str, str]], int, int]:
    if not path.is_file():
        raise FileNotFoundError(f"{name} split not found: {path}")
    rows, bad, total = [], 0, 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            total += 1
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                bad += 1
                log.warning("%s:%d: expected 3 tab-separated fields, got %d", path, lineno, len(parts))
                continue
            rows.append((parts[0], parts[1], parts[2]))
    if total and bad / total > MAX_MALFORMED_FRACTION:
        raise DataError(f"{path}: {bad} of {total} lines malformed (> 1%)")
    return rows, bad, total


def load_descriptions(path) -> dict[str, tuple[str, str]]:
    """``entity<TAB>name<TAB>description`` lines, kept for provenance only."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\r\n").split("\t")
            if len(parts) >= 2:
                out[parts[0]] = (parts[1], parts[2] if len(parts) > 2 else "")
    return out


def build_store(splits: dict[str, list[tuple[str, str, str]]], malformed: dict[str, int] | None = None) -> TripleStore:
    entities: dict[str, None] = {}
    relations: dict[str, None] = {}
    for name in ("train", "valid", "test"):
        for h, r, t in splits.get(name, []):
            entities.setdefault(h)
            entities.setdefault(t)
            relations.setdefault(r)
    vocab = Vocabulary(list(entities), list(relations))
    encoded = {name: vocab.encode(rows) for name, rows in splits.items()}
    return TripleStore(vocab, encoded, malformed=dict(malformed or {}))


def load_dataset(train_path, valid_path=None, test_path=None,
                 descriptions_path=None) -> tuple[Vocabulary, TripleStore]:
    """Read tab-separated split files into a vocabulary and an indexed store.

    Entities seen only in valid/test join the vocabulary with degree 0.
    """
    raw, malformed = {}, {}
    for name, path in (("train", train_path), ("valid", valid_path), ("test", test_path)):
        if path is None:
            raw[name] = []
            continue
        raw[name], malformed[name], _ = _read_triples(Path(path), name)
    store = build_store(raw, malformed)
    if descriptions_path is not None:
        store.descriptions = load_descriptions(descriptions_path)
    if any(malformed.values()):
        log.warning("skipped malformed lines: %s", malformed)
    return store.vocab, store


def nearest_rank(sorted_values: np.ndarray, p: float) -> int:
    n = len(sorted_values)
    k = max(1, math.ceil(p / 100.0 * n))
    return int(sorted_values[k - 1])


def degree_profile(store: TripleStore) -> DegreeProfile:
    """Nearest-rank percentiles of the undirected train degree over all entities."""
    if store.n_entities == 0:
        raise DataError("degree profile of an empty graph")
    degrees = np.sort(store.degree)
    return DegreeProfile(
        percentiles={p: nearest_rank(degrees, p) for p in PERCENTILES},
        entity_count=store.n_entities,
        relation_count=store.vocab.n_base_relations,
        triple_counts={name: int(len(arr)) for name, arr in store.splits.items()},
    )


def random_kg(n_entities: int, n_relations: int, n_triples: int, seed: int = 0) -> list[tuple[str, str, str]]:
    """Distinct random triples without self loops.

    A first pass gives every entity one incident edge, so all entities are
    touched whenever ``n_triples`` covers that pass.
    """
    if n_triples > n_entities * (n_entities - 1) * n_relations:
        raise ValueError("more triples requested than distinct ones exist")
    if 2 * n_triples < n_entities:
        raise ValueError("too few triples to touch every entity")
    rng = np.random.default_rng(seed)
    seen: set[tuple[int, int, int]] = set()
    triples = []
    # one edge per entity first, pairing it with a random partner
    for e in rng.permutation(n_entities).tolist():
        if any(e in (h, t) for h, _, t in triples):
            continue
        while True:
            other = int(rng.integers(n_entities))
            if other != e:
                break
        h, t = (e, other) if rng.random() < 0.5 else (other, e)
        trip = (h, int(rng.integers(n_relations)), t)
        if trip not in seen:
            seen.add(trip)
            triples.append(trip)
    while len(triples) < n_triples:
        h, t = rng.choice(n_entities, size=2, replace=False).tolist()
        trip = (h, int(rng.integers(n_relations)), t)
        if trip not in seen:
            seen.add(trip)
            triples.append(trip)
    return [(f"e{h}", f"r{r}", f"e{t}") for h, r, t in triples[:n_triples]]


def write_triples(path, triples: Iterable[tuple[str, str, str]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in triples:
            fh.write(f"{h}\t{r}\t{t}\n")
    return path
