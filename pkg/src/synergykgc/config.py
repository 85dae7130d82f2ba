"""Run configuration: hyperparameters, schedule knobs and dataset location."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


def parse_phi(value) -> float:
    """Anchor threshold: a non-negative integer, or ``inf`` for always-anchored."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "none-threshold", "all"):
            return math.inf
        value = int(value)
    if isinstance(value, float) and math.isinf(value):
        return math.inf
    if int(value) != value or value < 0:
        raise ConfigError(f"phi must be a non-negative integer or 'inf', got {value!r}")
    return int(value)


@dataclass
class DataConfig:
    train: str | None = None
    valid: str | None = None
    test: str | None = None
    descriptions: str | None = None
    entity_vectors: str | None = None
    # synthetic graph, used when no train file is given
    synthetic_entities: int = 50
    synthetic_relations: int = 5
    synthetic_triples: int = 200
    synthetic_seed: int = 0


@dataclass
class TrainConfig:
    d: int = 64
    heads: int = 4
    tau: float = 0.05
    gamma: float = 0.02
    lam: float = 0.1
    dropout: float = 0.1
    phi: float = 1
    hops: int = 1
    pool_cap: int = 64
    t_start: int = 5
    total_epochs: int = 10
    batch_size: int = 256
    learning_rate: float = 5e-5
    weight_decay: float = 1e-4
    grad_clip: float = 1.0
    gate_hidden: int | None = None
    gate_bias_init: float = 2.0
    seed: int = 0
    enable_anchor: bool = True
    enable_cross: bool = True
    enable_gate: bool = True
    enable_align: bool = True
    eval_every: int = 0
    eval_split: str = "valid"
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self):
        if isinstance(self.data, dict):
            self.data = DataConfig(**self.data)
        self.phi = parse_phi(self.phi)
        self.validate()

    @property
    def gate_width(self) -> int:
        return self.gate_hidden if self.gate_hidden else max(1, self.d // 2)

    def validate(self) -> None:
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.lam < 0:
            raise ConfigError("lam must be non-negative")
        if not 0 <= self.t_start <= self.total_epochs:
            raise ConfigError("need 0 <= t_start <= total_epochs")
        if not 1 <= self.hops <= 5:
            raise ConfigError("hops must be in [1, 5]")
        if self.pool_cap < 1:
            raise ConfigError("pool_cap must be >= 1")
        if self.heads < 1 or self.d % self.heads:
            raise ConfigError(f"heads={self.heads} must divide d={self.d}")
        if self.d < 2:
            raise ConfigError("d must be >= 2")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must be in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    def replace(self, **changes) -> TrainConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["phi"] = "inf" if math.isinf(self.phi) else int(self.phi)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> TrainConfig:
        raw = dict(raw)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "data" in raw:
            data_known = {f.name for f in dataclasses.fields(DataConfig)}
            bad = set(raw["data"]) - data_known
            if bad:
                raise ConfigError(f"unknown data keys: {sorted(bad)}")
            raw["data"] = DataConfig(**raw["data"])
        return cls(**raw)


def read_config_file(path) -> dict:
    """Parse a TOML or JSON config file into a plain dict (JSON by extension)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        return json.loads(text)
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError:
        return json.loads(text)


def load_config(path=None, **overrides) -> TrainConfig:
    raw = read_config_file(path) if path else {}
    base = Path(path).parent if path else Path(".")
    data = dict(raw.get("data", {}))
    for key in ("train", "valid", "test", "descriptions", "entity_vectors"):
        if data.get(key):
            p = Path(data[key])
            data[key] = str(p if p.is_absolute() else (base / p).resolve())
    if data:
        raw["data"] = data
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(raw)
