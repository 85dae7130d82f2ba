import math

import numpy as np
import pytest

from synergykgc.config import TrainConfig
from synergykgc.kg_store import build_store, random_kg
from synergykgc.model import SynergyKGC, alignment_loss, joint_loss
from synergykgc.numerics import Tape, Tensor, backward, ops, zero_grads
from synergykgc.trainer import (FINAL_CHECKPOINT, PHASE1_CHECKPOINT, Phase, moving_average, new_state,
                                phase_of, read_checkpoint, read_curves, restore, train, train_step)


@pytest.mark.parametrize("epoch,t_start,phase", [(4, 5, Phase.SEMANTIC), (5, 5, Phase.SYNERGY),
                                                 (19, 20, Phase.SEMANTIC), (20, 20, Phase.SYNERGY)])
def test_phase_of(epoch, t_start, phase):
    assert phase_of(epoch, t_start) is phase


def test_alignment_loss_examples():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    assert alignment_loss(x, x.detach()).item() == 0.0
    d, delta = 5, 0.3
    loss = alignment_loss(Tensor(np.full((1, d), 1.0 + delta)), Tensor(np.ones((1, d)))).item()
    assert loss == pytest.approx(d * delta ** 2, abs=1e-15)


def test_alignment_loss_shape_mismatch():
    with pytest.raises(ValueError):
        alignment_loss(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))))


def test_stop_gradient_probe(micro_store, micro_config):
    """Gradient through the anchor side of the alignment term is exactly zero."""
    model = SynergyKGC(micro_store, micro_config)
    rows = np.array([0, 3, 5])
    phi = Tensor(np.random.default_rng(0).normal(size=(3, 8)), requires_grad=True)
    tape = Tape()
    with tape:
        loss = alignment_loss(phi, ops.stop_gradient(ops.take_rows(model.table.entity, rows)))
    backward(loss, tape)
    np.testing.assert_array_equal(model.table.entity.grad, 0.0)
    assert np.abs(phi.grad).sum() > 0
    # while the anchor values still enter the loss
    nudged = model.table.entity.data[rows].copy()
    nudged[0, 0] += 1e-3
    assert alignment_loss(phi, Tensor(nudged)).item() != loss.item()


def _joint_grads(model, batch, constant_anchors):
    zero_grads(model.parameters())
    cfg = model.cfg
    tape = Tape()
    with tape:
        e_hr = model.query_semantic(batch[:, 0], batch[:, 1])
        e_t = model.entity_semantic(batch[:, 2])
        hr = model.query_synergy(batch[:, 0], batch[:, 1], e_sem=e_hr)
        t = model.entity_synergy(batch[:, 2], e_sem=e_t)
        nce = ops.info_nce(ops.cosine_matrix(hr.phi, t.phi), cfg.tau, cfg.gamma)
        a_hr = Tensor(e_hr.data.copy()) if constant_anchors else ops.stop_gradient(e_hr)
        a_t = Tensor(e_t.data.copy()) if constant_anchors else ops.stop_gradient(e_t)
        total = ops.add(nce, ops.mul(cfg.lam, ops.add(alignment_loss(hr.phi, a_hr), alignment_loss(t.phi, a_t))))
    backward(total, tape)
    return {p.name: p.grad.copy() for p in model.parameters()}


def test_detached_anchors_equal_constant_anchors(micro_store, micro_config):
    model = SynergyKGC(micro_store, micro_config.replace(lam=0.5, dropout=0.0))
    batch = micro_store.augmented("train")[:6]
    live, const = _joint_grads(model, batch, False), _joint_grads(model, batch, True)
    for name in live:
        assert live[name].tobytes() == const[name].tobytes(), name


def test_joint_loss_matches_manual_composition(micro_store, micro_config):
    model = SynergyKGC(micro_store, micro_config.replace(dropout=0.0))
    batch = micro_store.augmented("train")[:5]
    terms = joint_loss(model, batch, train=False)
    manual = terms.nce.item() + model.cfg.lam * (terms.align_hr.item() + terms.align_t.item())
    assert terms.total.item() == pytest.approx(manual, abs=1e-12)


def test_lambda_zero_is_synergy_nce_alone(micro_store, micro_config):
    model = SynergyKGC(micro_store, micro_config.replace(lam=0.0))
    terms = joint_loss(model, micro_store.augmented("train")[:5], train=False)
    assert terms.total.item() == terms.nce.item()
    assert terms.align_hr is None


def test_same_seed_same_step_loss(micro_store, micro_config):
    batch = micro_store.augmented("train")[:4]
    a = train_step(new_state(micro_store, micro_config), batch, Phase.SYNERGY)
    b = train_step(new_state(micro_store, micro_config), batch, Phase.SYNERGY)
    assert a == b


def test_ten_steps_mostly_decrease():
    store = build_store({"train": random_kg(12, 2, 20, seed=5)})
    cfg = TrainConfig(d=16, heads=2, dropout=0.0, learning_rate=1e-2, seed=2, t_start=0, total_epochs=1)
    state = new_state(store, cfg)
    batch = store.augmented("train")
    losses = [train_step(state, batch, Phase.SYNERGY)["total"] for _ in range(11)]
    drops = sum(b < a for a, b in zip(losses, losses[1:]))
    assert drops >= 8, losses


def test_t_start_zero_is_joint_throughout(micro_store, micro_config):
    result = train(micro_config.replace(t_start=0), micro_store)
    assert [r.phase for r in result.records] == ["II"] * 3
    assert all(math.isfinite(r.alpha_mean) for r in result.records)


def test_t_start_at_end_never_activates(micro_store, micro_config, tmp_path):
    result = train(micro_config.replace(t_start=3), micro_store, tmp_path)
    assert [r.phase for r in result.records] == ["I"] * 3
    assert all(math.isnan(r.alpha_mean) for r in result.records)
    assert (tmp_path / PHASE1_CHECKPOINT).exists() and (tmp_path / FINAL_CHECKPOINT).exists()


def test_single_transition_and_activation_instrumentation(micro_store, micro_config, tmp_path):
    cfg = micro_config.replace(t_start=2, total_epochs=5)
    result = train(cfg, micro_store, tmp_path)
    phases = [r.phase for r in result.records]
    assert phases == ["I", "I", "II", "II", "II"]
    at = result.records[2]
    assert math.isfinite(at.loss_nce_sem) and math.isfinite(at.loss_nce_syn)
    assert math.isnan(result.records[3].loss_nce_sem)
    # first Phase-II epoch starts with the gate at its initial value
    assert abs(at.alpha_mean - 0.8807970779778823) < 0.05
    rows = read_curves(tmp_path / "curves.csv")
    assert [r["epoch"] for r in rows] == list(range(5))


def test_phase1_checkpoint_holds_state_after_warmup(micro_store, micro_config, tmp_path):
    cfg = micro_config.replace(t_start=2, total_epochs=4)
    train(cfg, micro_store, tmp_path)
    snap, loaded_cfg = read_checkpoint(tmp_path / PHASE1_CHECKPOINT)
    assert loaded_cfg == cfg
    assert snap["meta"]["next_epoch"] == 2
    warm = train(cfg, micro_store, stop_epoch=2)
    for name, arr in warm.model.state_arrays().items():
        assert snap["arrays"][name].tobytes() == arr.tobytes()


def test_resume_from_snapshot_equals_fresh_run(micro_store, micro_config):
    cfg = micro_config.replace(t_start=2, total_epochs=5)
    fresh = train(cfg, micro_store)
    partial = train(cfg, micro_store, snapshot_epochs=[1], stop_epoch=2)
    state = restore(new_state(micro_store, cfg), partial.snapshots[1])
    resumed = train(cfg, micro_store, state=state)
    assert [r.loss_total for r in resumed.records] == [r.loss_total for r in fresh.records[2:]]
    for name, arr in fresh.model.state_arrays().items():
        assert resumed.model.state_arrays()[name].tobytes() == arr.tobytes()


def test_equal_runs_give_identical_records(micro_store, micro_config, tmp_path):
    train(micro_config, micro_store, tmp_path / "a")
    train(micro_config, micro_store, tmp_path / "b")
    assert (tmp_path / "a" / "curves.csv").read_bytes() == (tmp_path / "b" / "curves.csv").read_bytes()


def test_moving_average_is_trailing():
    np.testing.assert_allclose(moving_average([1, 2, 3, 4, 5, 6], 3), [1, 1.5, 2, 3, 4, 5])
