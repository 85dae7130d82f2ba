"""Two-phase training loop.

Epochs before ``t_start`` warm the semantic towers alone; from ``t_start`` on
the synergy expert is active and the joint objective is optimised.  Both
prediction directions are trained through the inverse-augmented train split.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .kg_store import TripleStore
from .model import SynergyKGC, joint_loss, semantic_loss
from .numerics import (NumericError, OptimizerState, Tape, adamw_step, backward, clip_grad_norm,
                       load_checkpoint, no_tape, save_checkpoint, spawn_rngs)

log = logging.getLogger(__name__)

PHASE1_CHECKPOINT = "checkpoint_phase1"
FINAL_CHECKPOINT = "checkpoint_final"


class Phase(str, Enum):
    SEMANTIC = "I"
    SYNERGY = "II"


def phase_of(epoch: int, t_start: int) -> Phase:
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return Phase.SYNERGY if epoch >= t_start else Phase.SEMANTIC


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    loss_nce: float
    loss_nce_sem: float
    loss_nce_syn: float
    loss_align_hr: float
    loss_align_t: float
    loss_total: float
    alpha_mean: float
    wall_time: float = 0.0


CURVE_FIELDS = [f for f in EpochRecord.__dataclass_fields__ if f != "wall_time"]


class _Mean:
    def __init__(self):
        self.total, self.weight = 0.0, 0

    def add(self, value: float | None, weight: int) -> None:
        if value is not None:
            self.total += float(value) * weight
            self.weight += weight

    @property
    def value(self) -> float:
        return self.total / self.weight if self.weight else math.nan


@dataclass
class TrainState:
    """Everything needed to continue a run bit-exactly from an epoch boundary."""
    model: SynergyKGC
    opt: OptimizerState
    rngs: dict[str, np.random.Generator]
    next_epoch: int = 0


@dataclass
class TrainResult:
    model: SynergyKGC
    records: list[EpochRecord]
    checkpoints: dict[str, Path] = field(default_factory=dict)
    snapshots: dict[int, dict] = field(default_factory=dict)


def new_state(store: TripleStore, cfg: TrainConfig, entity_vectors=None) -> TrainState:
    model = SynergyKGC(store, cfg, entity_vectors)
    opt = OptimizerState(lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    return TrainState(model, opt, spawn_rngs(cfg.seed, "shuffle", "dropout"))


def snapshot(state: TrainState) -> dict:
    """In-memory copy of a training state (arrays plus generator states)."""
    return {
        "arrays": {**state.model.state_arrays(), **{k: v.copy() for k, v in state.opt.arrays().items()}},
        "meta": {
            "next_epoch": state.next_epoch,
            "opt_step": state.opt.step,
            "rng": {k: g.bit_generator.state for k, g in state.rngs.items()},
        },
    }


def restore(state: TrainState, snap: dict) -> TrainState:
    state.model.load_state_arrays(snap["arrays"])
    state.opt.load_arrays(snap["arrays"])
    state.opt.step = int(snap["meta"]["opt_step"])
    for k, s in snap["meta"]["rng"].items():
        state.rngs[k].bit_generator.state = s
    state.next_epoch = int(snap["meta"]["next_epoch"])
    return state


def write_checkpoint(path, state: TrainState, cfg: TrainConfig) -> Path:
    snap = snapshot(state)
    meta = dict(snap["meta"], config=cfg.to_dict())
    return save_checkpoint(path, snap["arrays"], meta)


def read_checkpoint(path) -> tuple[dict, TrainConfig]:
    arrays, meta = load_checkpoint(path)
    cfg = TrainConfig.from_dict(meta["config"])
    return {"arrays": arrays, "meta": meta}, cfg


def train_step(state: TrainState, batch: np.ndarray, phase: Phase) -> dict:
    """Forward, backward, clip and update on one batch; returns scalar loss terms."""
    model, cfg = state.model, state.model.cfg
    tape = Tape()
    with tape:
        if phase is Phase.SEMANTIC:
            terms = semantic_loss(model, batch)
        else:
            terms = joint_loss(model, batch, train=True, rng=state.rngs["dropout"])
    total = terms.total.item()
    if not math.isfinite(total):
        raise NumericError(f"non-finite loss on batch {batch.tolist()}")
    params = model.parameters()
    backward(terms.total, tape)
    if cfg.grad_clip:
        clip_grad_norm(params, cfg.grad_clip)
    adamw_step(params, state.opt)
    return {
        "total": total,
        "nce": terms.nce.item(),
        "align_hr": terms.align_hr.item() if terms.align_hr is not None else None,
        "align_t": terms.align_t.item() if terms.align_t is not None else None,
        "alpha": float(terms.alpha.mean()) if terms.alpha is not None else None,
    }


def run_epoch(state: TrainState, epoch: int) -> EpochRecord:
    model, cfg = state.model, state.model.cfg
    phase = phase_of(epoch, cfg.t_start)
    started = time.perf_counter()
    train = model.store.augmented("train")
    order = state.rngs["shuffle"].permutation(len(train))
    means = {k: _Mean() for k in ("total", "nce", "nce_sem", "align_hr", "align_t", "alpha")}
    for lo in range(0, len(order), cfg.batch_size):
        batch = train[order[lo:lo + cfg.batch_size]]
        n = len(batch)
        if phase is Phase.SYNERGY and epoch == cfg.t_start:
            # semantic-score loss at the activation epoch, for the discontinuity plot
            with no_tape():
                means["nce_sem"].add(semantic_loss(model, batch).nce.item(), n)
        out = train_step(state, batch, phase)
        for k in ("total", "nce", "align_hr", "align_t", "alpha"):
            means[k].add(out[k], n)
        if phase is Phase.SEMANTIC:
            means["nce_sem"].add(out["nce"], n)
    nce = means["nce"].value
    return EpochRecord(
        epoch=epoch,
        phase=phase.value,
        loss_nce=nce,
        loss_nce_sem=means["nce_sem"].value,
        loss_nce_syn=nce if phase is Phase.SYNERGY else math.nan,
        loss_align_hr=means["align_hr"].value,
        loss_align_t=means["align_t"].value,
        loss_total=means["total"].value,
        alpha_mean=means["alpha"].value,
        wall_time=time.perf_counter() - started,
    )


def train(cfg: TrainConfig, store: TripleStore, out_dir=None, *, state: TrainState | None = None,
          entity_vectors=None, snapshot_epochs=(), stop_epoch: int | None = None,
          on_epoch: Callable[[TrainState, EpochRecord], None] | None = None) -> TrainResult:
    """Run epochs ``state.next_epoch .. total_epochs - 1``.

    With ``out_dir`` set, writes ``curves.csv``, ``timings.csv`` and the two
    checkpoints (after epoch ``t_start - 1`` and at the end; for
    ``t_start == 0`` the first holds the initial state).  ``snapshot_epochs``
    lists epochs after which an in-memory snapshot is kept, with ``-1``
    meaning the initial state.
    """
    state = state or new_state(store, cfg, entity_vectors)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    result = TrainResult(state.model, [])
    end = cfg.total_epochs if stop_epoch is None else min(stop_epoch, cfg.total_epochs)
    snapshot_epochs = set(snapshot_epochs)

    def boundary(epoch_done: int) -> None:
        if epoch_done in snapshot_epochs:
            result.snapshots[epoch_done] = snapshot(state)
        if out is not None and epoch_done == cfg.t_start - 1:
            result.checkpoints["phase1"] = write_checkpoint(out / PHASE1_CHECKPOINT, state, cfg)

    if state.next_epoch == 0:
        boundary(-1)
    for epoch in range(state.next_epoch, end):
        record = run_epoch(state, epoch)
        state.next_epoch = epoch + 1
        result.records.append(record)
        log.info("epoch %d phase %s loss %.5f alpha %.4f", epoch, record.phase, record.loss_total,
                 record.alpha_mean)
        boundary(epoch)
        if on_epoch is not None:
            on_epoch(state, record)
    if out is not None:
        if state.next_epoch >= cfg.total_epochs:
            result.checkpoints["final"] = write_checkpoint(out / FINAL_CHECKPOINT, state, cfg)
        write_curves(out / "curves.csv", result.records)
        write_timings(out / "timings.csv", result.records)
    return result


def write_curves(path, records: list[EpochRecord]) -> Path:
    """Loss curves without wall-clock columns, so equal runs give equal files."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_FIELDS)
        for rec in records:
            row = asdict(rec)
            w.writerow([_fmt(row[k]) for k in CURVE_FIELDS])
    return path


def write_timings(path, records: list[EpochRecord]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "wall_time"])
        for rec in records:
            w.writerow([rec.epoch, f"{rec.wall_time:.6f}"])
    return path


def read_curves(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for k, v in row.items():
            row[k] = v if k == "phase" else (int(v) if k == "epoch" else float(v))
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def moving_average(values, window: int = 5) -> np.ndarray:
    """Trailing mean over up to ``window`` values ending at each index."""
    values = np.asarray(values, dtype=np.float64)
    out = np.empty_like(values)
    for i in range(len(values)):
        out[i] = values[max(0, i - window + 1):i + 1].mean()
    return out


__all__ = ["Phase", "phase_of", "EpochRecord", "TrainState", "TrainResult", "new_state", "train",
           "train_step", "run_epoch", "snapshot", "restore", "write_checkpoint", "read_checkpoint",
           "write_curves", "read_curves", "moving_average"]
