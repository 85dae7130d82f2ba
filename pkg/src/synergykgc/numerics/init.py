"""Parameter initialisers and per-module random streams."""

from __future__ import annotations

import zlib

import numpy as np


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def spawn_rngs(seed: int, *names: str) -> dict[str, np.random.Generator]:
    """Independent generators keyed by name.

    Each stream depends only on ``(seed, name)``, so adding a new consumer
    never perturbs the existing ones.
    """
    return {
        name: np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))
        for name in names
    }
