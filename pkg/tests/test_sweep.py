import csv
import math

import pytest

from synergykgc.evaluator import evaluate_split
from synergykgc.kg_store import build_store, random_kg
from synergykgc.model import SynergyKGC
from synergykgc.sweep import (GRID_HEADER, SWEEP_HEADER, activation_grid, point_config, sweep, write_grid_csv,
                              write_sweep_csv)
from synergykgc.trainer import train


@pytest.fixture(scope="module")
def store():
    rows = random_kg(14, 2, 30, seed=11)
    return build_store({"train": rows[:26], "test": rows[26:]})


@pytest.fixture
def base(micro_config):
    return micro_config.replace(total_epochs=3, t_start=1)


def test_point_config_coordinates(base):
    assert point_config(base, "phi", "none").enable_anchor is False
    assert point_config(base, "phi", "inf").phi == math.inf
    assert point_config(base, "phi", "3").phi == 3 and point_config(base, "phi", "3").enable_anchor
    assert point_config(base, "hops", 4).hops == 4
    assert point_config(base, "ablation", "no-gate").enable_gate is False
    with pytest.raises(ValueError):
        point_config(base, "ablation", "no-everything")
    with pytest.raises(ValueError):
        point_config(base, "depth", 1)


def test_phi_sweep_shape(store, base, tmp_path):
    points = sweep("phi", ["none", "1", "2", "3"], base, store)
    assert [p.value for p in points] == ["none", "1", "2", "3"]
    assert all(p.report is not None for p in points)
    out = write_sweep_csv(tmp_path / "phi.csv", points)
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == SWEEP_HEADER
    assert len(rows) == 1 + 4 * 3


def test_ablation_sweep_matches_single_runs(store, base):
    points = sweep("ablation", ["full", "no-align", "no-cross", "no-gate"], base, store)
    for p in points:
        alone = train(point_config(base, "ablation", p.value), store).model
        assert p.report.overall == evaluate_split(store, store.splits["test"], alone).overall


def test_failed_point_is_recorded_not_fatal(store, base, tmp_path):
    points = sweep("hops", [1, 9], base, store)
    assert points[0].report is not None
    assert points[1].report is None and "hops" in points[1].error
    out = write_sweep_csv(tmp_path / "h.csv", points)
    assert "nan" in out.read_text()


def test_t_start_sweep_reuses_warmup_exactly(store, base):
    points = sweep("t_start", [0, 1, 2], base, store)
    for p in points:
        fresh = train(base.replace(t_start=int(p.value)), store).model
        assert p.report.overall == evaluate_split(store, store.splits["test"], fresh).overall


def test_parallel_sweep_equals_serial(store, base):
    serial = sweep("hops", [1, 2], base, store)
    parallel = sweep("hops", [1, 2], base, store, jobs=2)
    assert [p.report.overall for p in serial] == [p.report.overall for p in parallel]


def test_activation_grid(store, base, tmp_path):
    rows = activation_grid([1, 2], [2, 3], base, store, split="test")
    assert [(r["t_start"], r["total_epochs"]) for r in rows] == [(1, 2), (1, 3), (2, 2), (2, 3)]
    for r in rows:
        fresh = train(base.replace(t_start=r["t_start"], total_epochs=r["total_epochs"]), store).model
        assert r["report"].overall == evaluate_split(store, store.splits["test"], fresh).overall
    out = write_grid_csv(tmp_path / "grid.csv", rows)
    assert out.read_text().splitlines()[0] == ",".join(GRID_HEADER)


def test_hops_sweep_five_points_and_growing_pools(store, base):
    points = sweep("hops", [1, 2, 3, 4, 5], base.replace(pool_cap=64), store)
    assert len(points) == 5 and all(p.report for p in points)
    # wall time is too noisy at this size; pool width drives attention cost
    widths = [SynergyKGC(store, base.replace(hops=h, pool_cap=64)).pools.mask.sum() for h in range(1, 6)]
    assert widths == sorted(widths)
