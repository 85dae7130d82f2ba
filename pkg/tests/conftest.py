from __future__ import annotations

import numpy as np
import pytest

from synergykgc import TrainConfig, random_kg
from synergykgc.kg_store import build_store, write_triples


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_store():
    """The 50-entity / 5-relation / 200-triple graph used for end-to-end runs."""
    return build_store({"train": random_kg(50, 5, 200, seed=0)})


@pytest.fixture
def micro_store():
    return build_store({"train": random_kg(12, 2, 20, seed=3)})


@pytest.fixture(scope="session")
def toy_config():
    return TrainConfig(d=32, heads=4, phi=1, hops=1, t_start=10, total_epochs=300, batch_size=64,
                       learning_rate=5e-3, seed=0)


@pytest.fixture
def micro_config():
    return TrainConfig(d=8, heads=2, phi=1, hops=1, pool_cap=3, t_start=1, total_epochs=3, batch_size=4,
                       learning_rate=1e-2, seed=7)


@pytest.fixture
def split_files(tmp_path):
    def make(train, valid=(), test=()):
        return (write_triples(tmp_path / "train.txt", train),
                write_triples(tmp_path / "valid.txt", valid),
                write_triples(tmp_path / "test.txt", test))
    return make


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture(scope="session")
def acceptance():
    """``record(n, ok, detail)`` stores and prints the verdict line of criterion ``n``."""
    def record(n: int, ok, detail: str) -> None:
        verdict = {True: "PASS", False: "FAIL"}.get(ok, str(ok))
        line = f"criterion {n}: {verdict}  {detail}"
        ACCEPTANCE[n] = line
        print(line)
    return record
