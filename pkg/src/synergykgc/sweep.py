"""Grid sweeps over anchor threshold, hop depth, activation epoch and ablations.

Every grid point is a full train + evaluate run from the same base config
and seed, so only the swept coordinate differs.  Activation-epoch sweeps
share one semantic warm-up: the run is snapshotted after each requested
``t_start - 1`` and every grid point continues from its snapshot, which is
bit-identical to training it from scratch.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import TrainConfig, parse_phi
from .evaluator import METRIC_KEYS, MetricsReport, evaluate_split
from .kg_store import TripleStore
from .trainer import new_state, restore, train

log = logging.getLogger(__name__)

AXES = ("phi", "hops", "t_start", "ablation")
ABLATIONS = {
    "full": {},
    "no-align": {"enable_align": False},
    "no-cross": {"enable_cross": False},
    "no-gate": {"enable_gate": False},
    "no-anchor": {"enable_anchor": False},
}
NO_ANCHOR = "none"
SWEEP_HEADER = ["axis", "value", *METRIC_KEYS, "direction"]
GRID_HEADER = ["t_start", "total_epochs", *METRIC_KEYS, "direction"]


@dataclass
class SweepPoint:
    axis: str
    value: str
    report: MetricsReport | None
    error: str | None = None
    seconds: float = 0.0


def point_config(base: TrainConfig, axis: str, value) -> TrainConfig:
    """Base config with one coordinate changed."""
    if axis == "phi":
        if str(value).lower() in (NO_ANCHOR, "w/o-anchor", "no-anchor"):
            return base.replace(enable_anchor=False)
        return base.replace(phi=parse_phi(value), enable_anchor=True)
    if axis == "hops":
        return base.replace(hops=int(value))
    if axis == "t_start":
        return base.replace(t_start=int(value))
    if axis == "ablation":
        if value not in ABLATIONS:
            raise ValueError(f"unknown ablation {value!r}; expected one of {sorted(ABLATIONS)}")
        return base.replace(**ABLATIONS[value])
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")


def _label(value) -> str:
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return str(value)


def _split(store: TripleStore, name: str):
    if name not in store.splits or len(store.splits[name]) == 0:
        raise ValueError(f"split {name!r} is empty or missing")
    return store.splits[name]


def run_point(base: TrainConfig, store: TripleStore, axis: str, value, split: str = "test",
              mode: str = "synergy") -> SweepPoint:
    started = time.perf_counter()
    try:
        cfg = point_config(base, axis, value)
        result = train(cfg, store)
        report = evaluate_split(store, _split(store, split), result.model, mode,
                                coords={axis: _label(value)})
        return SweepPoint(axis, _label(value), report, seconds=time.perf_counter() - started)
    except Exception as exc:  # one failed point must not sink the sweep
        log.exception("sweep point %s=%s failed", axis, value)
        return SweepPoint(axis, _label(value), None, f"{type(exc).__name__}: {exc}",
                          seconds=time.perf_counter() - started)


def _t_start_sweep(base: TrainConfig, store: TripleStore, values: Sequence[int], split: str,
                   mode: str) -> list[SweepPoint]:
    starts = sorted({int(v) for v in values})
    warm_cfg = base.replace(t_start=max(starts), total_epochs=max(max(starts), base.total_epochs))
    warm = train(warm_cfg, store, snapshot_epochs=[s - 1 for s in starts], stop_epoch=max(starts))
    points = []
    for v in values:
        started = time.perf_counter()
        try:
            cfg = base.replace(t_start=int(v))
            state = restore(new_state(store, cfg), warm.snapshots[int(v) - 1])
            result = train(cfg, store, state=state)
            report = evaluate_split(store, _split(store, split), result.model, mode, coords={"t_start": str(v)})
            points.append(SweepPoint("t_start", str(v), report, seconds=time.perf_counter() - started))
        except Exception as exc:
            log.exception("sweep point t_start=%s failed", v)
            points.append(SweepPoint("t_start", str(v), None, f"{type(exc).__name__}: {exc}"))
    return points


def sweep(axis: str, values: Sequence, base: TrainConfig, store: TripleStore, split: str = "test",
          mode: str = "synergy", jobs: int = 1) -> list[SweepPoint]:
    """One train + evaluate per value along ``axis``; results in input order."""
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    if axis == "t_start":
        return _t_start_sweep(base, store, values, split, mode)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_point, base, store, axis, v, split, mode) for v in values]
            return [f.result() for f in futures]
    return [run_point(base, store, axis, v, split, mode) for v in values]


def activation_grid(t_starts: Sequence[int], total_epochs: Sequence[int], base: TrainConfig,
                    store: TripleStore, split: str = "valid", mode: str = "synergy") -> list[dict]:
    """Metrics for every (activation epoch, training budget) pair.

    One run per activation epoch, evaluated at the end of each budget in
    ``total_epochs`` (no schedule depends on the budget, so stopping early
    equals training with that budget).
    """
    budgets = sorted({int(e) for e in total_epochs})
    starts = sorted({int(s) for s in t_starts})
    if starts[-1] > budgets[-1]:
        raise ValueError("every activation epoch must fit in the largest budget")
    warm_cfg = base.replace(t_start=starts[-1], total_epochs=budgets[-1])
    warm = train(warm_cfg, store, snapshot_epochs=[s - 1 for s in starts], stop_epoch=starts[-1])
    rows = []
    triples = _split(store, split)
    for s in starts:
        cfg = base.replace(t_start=s, total_epochs=budgets[-1])
        state = restore(new_state(store, cfg), warm.snapshots[s - 1])

        def evaluate_at(st, done, s=s):
            if done in budgets and done >= s:
                rep = evaluate_split(store, triples, st.model, mode, coords={"t_start": s, "total_epochs": done})
                rows.append({"t_start": s, "total_epochs": done, "report": rep})

        evaluate_at(state, state.next_epoch)
        train(cfg, store, state=state, on_epoch=lambda st, rec: evaluate_at(st, rec.epoch + 1))
    return rows


def write_sweep_csv(path, points: Sequence[SweepPoint]) -> Path:
    """Long format: one row per (point, direction); failed points get ``nan`` metrics."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        for p in points:
            for direction in ("both", "forward", "backward"):
                if p.report is None:
                    metrics = ["nan"] * len(METRIC_KEYS)
                else:
                    m = p.report.by_direction()[direction]
                    metrics = [repr(m[k]) for k in METRIC_KEYS]
                w.writerow([p.axis, p.value, *metrics, direction])
    return path


def write_grid_csv(path, rows: Sequence[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(GRID_HEADER)
        for row in rows:
            for direction, m in row["report"].by_direction().items():
                w.writerow([row["t_start"], row["total_epochs"], *[repr(m[k]) for k in METRIC_KEYS], direction])
    return path
