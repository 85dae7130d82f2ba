import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from synergykgc.numerics import OptimizerState, Tape, Tensor, adamw_step, backward, ops
from synergykgc.semantic import (EmbeddingTable, QueryComposer, cosine_score, encode_entity, encode_query,
                                 info_nce, load_entity_vectors, save_entity_vectors)


@pytest.fixture
def tower(rng):
    return EmbeddingTable(6, 4, 4, rng), QueryComposer(4, rng)


def test_zero_composer_gives_zero_query(tower):
    table, comp = tower
    comp.W.data[:] = 0.0
    out = encode_query(table, comp, np.arange(6), np.array([0, 1, 2, 3, 0, 1]))
    np.testing.assert_array_equal(out.data, 0.0)


def test_query_is_deterministic(tower):
    table, comp = tower
    assert encode_query(table, comp, 2, 3).data.tobytes() == encode_query(table, comp, 2, 3).data.tobytes()


def test_query_matches_composition_oracle(tower):
    table, comp = tower
    h, r = 4, 1
    x = list(table.entity.data[h]) + list(table.relation.data[r])
    expected = []
    for i in range(4):
        acc = comp.b.data[i]
        for j in range(8):
            acc += comp.W.data[i, j] * x[j]
        expected.append(math.tanh(acc))
    np.testing.assert_allclose(encode_query(table, comp, h, r).data, expected, rtol=0, atol=1e-12)


def test_invalid_ids_are_fatal(tower):
    table, comp = tower
    with pytest.raises(IndexError):
        encode_query(table, comp, 6, 0)
    with pytest.raises(IndexError):
        encode_query(table, comp, 0, 4)
    with pytest.raises(IndexError):
        encode_entity(table, -1)


def test_entity_is_table_row(tower):
    table, _ = tower
    np.testing.assert_array_equal(encode_entity(table, 3).data, table.entity.data[3])


def test_entity_tower_takes_no_relation():
    import inspect
    assert list(inspect.signature(encode_entity).parameters) == ["table", "t"]


def test_frozen_vectors_round_trip(tmp_path, rng):
    vecs = rng.normal(size=(3, 5))
    path = save_entity_vectors(tmp_path / "v.tsv", vecs, ["x", "y", "z"])
    loaded = load_entity_vectors(path, {"z": 0, "x": 1, "y": 2}, 5)
    table = EmbeddingTable(3, 2, 5, rng, entity_vectors=loaded)
    assert encode_entity(table, 1).data.tobytes() == vecs[0].tobytes()
    assert encode_entity(table, 0).data.tobytes() == vecs[2].tobytes()


def test_missing_entity_vector_is_error(tmp_path, rng):
    path = save_entity_vectors(tmp_path / "v.tsv", rng.normal(size=(1, 3)), ["x"])
    with pytest.raises(ValueError):
        load_entity_vectors(path, {"x": 0, "y": 1}, 3)


def _one_step(table, comp, t):
    opt = OptimizerState(lr=0.1, weight_decay=0.0)
    tape = Tape()
    with tape:
        q = encode_query(table, comp, np.array([0, 1]), np.array([0, 1]))
        e = encode_entity(table, np.array([t, 2]))
        loss = info_nce(ops.cosine_matrix(q, e), 0.05, 0.02)
    backward(loss, tape)
    adamw_step(table.parameters() + comp.parameters(), opt)


@pytest.mark.parametrize("frozen", [False, True])
def test_training_step_moves_row_iff_not_frozen(rng, frozen):
    vecs = rng.normal(size=(6, 4)) if frozen else None
    table, comp = EmbeddingTable(6, 4, 4, rng, entity_vectors=vecs), QueryComposer(4, rng)
    before = table.entity.data.copy()
    _one_step(table, comp, 5)
    changed = not np.array_equal(before[5], table.entity.data[5])
    assert changed is (not frozen)
    np.testing.assert_array_equal(before[3], table.entity.data[3])  # not in the batch


def test_cosine_examples():
    u = Tensor([1.0, 2.0, -0.5])
    assert cosine_score(u, u).item() == pytest.approx(1.0, abs=1e-15)
    assert cosine_score(Tensor([1.0, 0.0]), Tensor([0.0, 3.0])).item() == 0.0
    assert cosine_score(u, Tensor(-u.data)).item() == pytest.approx(-1.0, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 5, elements=st.floats(-10, 10)), arrays(np.float64, 5, elements=st.floats(-10, 10)),
       st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_cosine_scale_invariance(u, v, a, b):
    if np.linalg.norm(u) < 1e-3 or np.linalg.norm(v) < 1e-3:
        return
    base = cosine_score(Tensor(u), Tensor(v)).item()
    assert abs(cosine_score(Tensor(a * u), Tensor(b * v)).item() - base) <= 1e-12


def test_info_nce_single_pair_is_zero():
    assert info_nce(Tensor([[0.37]]), 0.05, 0.0).item() == 0.0


@pytest.mark.parametrize("B,tau", [(2, 0.05), (5, 1.0), (16, 0.3)])
def test_info_nce_uniform_is_log_b(B, tau):
    assert abs(info_nce(Tensor(np.full((B, B), 0.4)), tau, 0.0).item() - math.log(B)) < 1e-9


def test_info_nce_matches_scalar_oracle():
    S = [[0.9, 0.1], [0.2, 0.8]]
    tau, gamma = 0.05, 0.02
    total = 0.0
    for i in range(2):
        pos = math.exp((S[i][i] - gamma) / tau)
        neg = sum(math.exp(S[i][j] / tau) for j in range(2) if j != i)
        total += -math.log(pos / (pos + neg))
    assert abs(info_nce(Tensor(S), tau, gamma).item() - total / 2) < 1e-12


def test_info_nce_rejects_bad_temperature():
    with pytest.raises(ValueError):
        info_nce(Tensor([[1.0]]), 0.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1), st.floats(0.02, 2.0), st.floats(0.0, 0.1))
def test_info_nce_bounds(B, seed, tau, gamma):
    S = np.random.default_rng(seed).uniform(-1, 1, size=(B, B))
    loss = info_nce(Tensor(S), tau, gamma).item()
    assert 0.0 <= loss <= math.log(B) + gamma / tau + 2 / tau + 1e-9


def test_gradient_step_increases_diagonal_margin():
    S = Tensor(np.array([[0.3, 0.5], [0.4, 0.2]]), requires_grad=True)
    margin = lambda m: np.trace(m) - (m.sum() - np.trace(m))
    tape = Tape()
    with tape:
        loss = info_nce(S, 0.05, 0.02)
    backward(loss, tape)
    moved = S.data - 1e-3 * S.grad
    assert margin(moved) > margin(S.data)
