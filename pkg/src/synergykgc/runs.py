"""Run directories: dataset resolution, manifests and the train/eval pipeline."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

from . import __version__
from .config import DataConfig, TrainConfig
from .evaluator import METRIC_KEYS, evaluate_split
from .kg_store import TripleStore, build_store, load_dataset, random_kg
from .model import SynergyKGC
from .semantic import load_entity_vectors
from .trainer import FINAL_CHECKPOINT, PHASE1_CHECKPOINT, Phase, TrainResult, phase_of, read_checkpoint, train

MANIFEST = "manifest.json"
RESOLVED_CONFIG = "config_resolved.json"
DIRECTION_CURVES = "direction_curves.csv"


def load_store(data: DataConfig) -> TripleStore:
    """Triple files when a train path is given, otherwise the configured synthetic graph."""
    if data.train:
        _, store = load_dataset(data.train, data.valid, data.test, data.descriptions)
        return store
    rows = random_kg(data.synthetic_entities, data.synthetic_relations, data.synthetic_triples,
                     seed=data.synthetic_seed)
    return build_store({"train": rows})


def entity_vectors_for(cfg: TrainConfig, store: TripleStore):
    if not cfg.data.entity_vectors:
        return None
    return load_entity_vectors(cfg.data.entity_vectors, store.vocab.entity_ids, cfg.d)


def fingerprint(path) -> dict:
    path = Path(path)
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    return {"path": str(path), "bytes": path.stat().st_size, "sha256": digest}


def dataset_fingerprints(data: DataConfig) -> dict:
    out = {}
    for key in ("train", "valid", "test", "descriptions", "entity_vectors"):
        value = getattr(data, key)
        if value:
            out[key] = fingerprint(value)
    if not data.train:
        out["synthetic"] = {"entities": data.synthetic_entities, "relations": data.synthetic_relations,
                            "triples": data.synthetic_triples, "seed": data.synthetic_seed}
    return out


def write_manifest(out_dir, cfg: TrainConfig, artifacts: list[str]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "synergykgc",
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "datasets": dataset_fingerprints(cfg.data),
        "artifacts": artifacts,
    }
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / RESOLVED_CONFIG).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return path


def run_training(cfg: TrainConfig, out_dir, store: TripleStore | None = None) -> TrainResult:
    """Manifest first, then training; optional per-epoch direction curves."""
    store = store or load_store(cfg.data)
    out = Path(out_dir)
    artifacts = [MANIFEST, RESOLVED_CONFIG, "curves.csv", "timings.csv", PHASE1_CHECKPOINT, FINAL_CHECKPOINT]
    if cfg.eval_every:
        artifacts.append(DIRECTION_CURVES)
    write_manifest(out, cfg, artifacts)

    on_epoch = None
    if cfg.eval_every:
        triples = store.splits.get(cfg.eval_split)
        if triples is None or len(triples) == 0:
            triples = store.splits["train"]
        fh = open(out / DIRECTION_CURVES, "w", newline="", encoding="utf-8")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "phase", "mode", "direction", *METRIC_KEYS])

        def on_epoch(state, record):
            if (record.epoch + 1) % cfg.eval_every:
                return
            mode = "synergy" if phase_of(record.epoch, cfg.t_start) is Phase.SYNERGY else "semantic"
            rep = evaluate_split(store, triples, state.model, mode)
            for direction, m in rep.by_direction().items():
                writer.writerow([record.epoch, record.phase, mode, direction, *[repr(m[k]) for k in METRIC_KEYS]])

    try:
        return train(cfg, store, out, entity_vectors=entity_vectors_for(cfg, store), on_epoch=on_epoch)
    finally:
        if cfg.eval_every:
            fh.close()


def load_model(checkpoint, store: TripleStore | None = None) -> tuple[SynergyKGC, TrainConfig, TripleStore]:
    """Rebuild a model (and its dataset) from a checkpoint file."""
    snap, cfg = read_checkpoint(checkpoint)
    store = store or load_store(cfg.data)
    model = SynergyKGC(store, cfg, entity_vectors_for(cfg, store))
    model.load_state_arrays(snap["arrays"])
    return model, cfg, store
