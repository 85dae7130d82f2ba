import csv
import json

import pytest

from synergykgc.cli import dispatch
from synergykgc.kg_store import random_kg, write_triples

TOY = """\
seed = 4
d = 8
heads = 2
pool_cap = 4
t_start = 1
total_epochs = 3
batch_size = 16
learning_rate = 0.01
eval_every = 1

[data]
train = "train.txt"
valid = "valid.txt"
test = "test.txt"
"""


@pytest.fixture
def toy_dir(tmp_path):
    rows = random_kg(16, 2, 40, seed=2)
    write_triples(tmp_path / "train.txt", rows[:32])
    write_triples(tmp_path / "valid.txt", rows[32:36])
    write_triples(tmp_path / "test.txt", rows[36:])
    (tmp_path / "toy.toml").write_text(TOY, encoding="utf-8")
    return tmp_path


def test_stats_emits_table_fields(toy_dir, capsys):
    assert dispatch(["stats", "--train", str(toy_dir / "train.txt"), "--test", str(toy_dir / "test.txt")]) == 0
    table = json.loads(capsys.readouterr().out)
    assert table["Train"] == 32 and table["Test"] == 4
    assert {"Entities", "Relations", "P1", "P50", "P100"} <= set(table)


def test_train_then_eval(toy_dir):
    run = toy_dir / "run1"
    assert dispatch(["train", "--config", str(toy_dir / "toy.toml"), "--out", str(run)]) == 0
    for name in ("manifest.json", "config_resolved.json", "curves.csv", "checkpoint_phase1",
                 "checkpoint_final", "direction_curves.csv"):
        assert (run / name).exists(), name
    assert dispatch(["eval", "--checkpoint", str(run / "checkpoint_final")]) == 0
    metrics = json.loads((run / "metrics.json").read_text())
    assert {"mrr", "mr", "hits1", "hits3", "hits10"} <= set(metrics)
    assert metrics["n_queries"] == 8


def test_manifest_rerun_reproduces_curves(toy_dir):
    a, b = toy_dir / "a", toy_dir / "b"
    assert dispatch(["train", "--config", str(toy_dir / "toy.toml"), "--out", str(a)]) == 0
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["seed"] == 4 and "sha256" in manifest["datasets"]["train"]
    assert dispatch(["train", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert (a / "curves.csv").read_bytes() == (b / "curves.csv").read_bytes()


def test_flags_override_file(toy_dir):
    run = toy_dir / "r"
    assert dispatch(["train", "--config", str(toy_dir / "toy.toml"), "--out", str(run), "--epochs", "2",
                     "--phi", "inf", "--no-gate"]) == 0
    cfg = json.loads((run / "config_resolved.json").read_text())
    assert cfg["total_epochs"] == 2 and cfg["phi"] == "inf" and cfg["enable_gate"] is False


def test_seed_env_fallback(toy_dir, monkeypatch):
    (toy_dir / "noseed.toml").write_text(TOY.replace("seed = 4\n", ""), encoding="utf-8")
    monkeypatch.setenv("SYNERGYKGC_SEED", "99")
    run = toy_dir / "env"
    assert dispatch(["train", "--config", str(toy_dir / "noseed.toml"), "--out", str(run), "--epochs", "1"]) == 0
    assert json.loads((run / "config_resolved.json").read_text())["seed"] == 99


def test_sweep_hops_rows(toy_dir):
    out = toy_dir / "hops.csv"
    assert dispatch(["sweep", "--axis", "hops", "--values", "1,2,3", "--config", str(toy_dir / "toy.toml"),
                     "--out", str(out)]) == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for direction in ("both", "forward", "backward"):
        assert [r["value"] for r in rows if r["direction"] == direction] == ["1", "2", "3"]


def test_sweep_activation_grid(toy_dir):
    out = toy_dir / "grid.csv"
    assert dispatch(["sweep", "--axis", "t_start", "--values", "1,2", "--grid-epochs", "2,3",
                     "--config", str(toy_dir / "toy.toml"), "--out", str(out)]) == 0
    assert out.read_text().startswith("t_start,total_epochs,")


def test_export_curves(toy_dir):
    run = toy_dir / "run"
    dispatch(["train", "--config", str(toy_dir / "toy.toml"), "--out", str(run)])
    out = toy_dir / "plot.json"
    assert dispatch(["export-curves", "--run", str(run), "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert len(data["curves"]) == 3 and "loss_total_ma5" in data["curves"][0]
    assert data["curves"][0]["loss_align_hr"] is None  # undefined before activation
    assert len(data["direction_curves"]) == 3 * 3
    csv_out = toy_dir / "plot.csv"
    assert dispatch(["export-curves", "--run", str(run), "--out", str(csv_out)]) == 0


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        dispatch(["train", "--out", "x", "--bogus"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_missing_data_is_exit_two(tmp_path, capsys):
    assert dispatch(["stats", "--train", str(tmp_path / "missing.txt")]) == 2


def test_bad_config_is_exit_one(tmp_path):
    (tmp_path / "bad.toml").write_text("tau = -1\n", encoding="utf-8")
    assert dispatch(["train", "--config", str(tmp_path / "bad.toml"), "--out", str(tmp_path / "o")]) == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_is_exit_three(toy_dir):
    assert dispatch(["train", "--config", str(toy_dir / "toy.toml"), "--out", str(toy_dir / "nan"),
                     "--lr", "1e308"]) == 3
