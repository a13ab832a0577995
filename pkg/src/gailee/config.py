"""Training configuration and the ``key = value`` config-file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .data.bio import LABELING_SCHEMAS, TRIGGERS_AND_ENTITIES

REWARD_MODES = ("fixed", "gail")
PG_ESTIMATORS = ("expected", "boltzmann", "behavior", "sampled")
ENTITY_MODES = ("gold_entities", "predicted_entities")


class ConfigError(ValueError):
    """Bad configuration key or value; ``key`` names the offender."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class TrainConfig:
    # values from the published hyperparameter table
    gamma: float = 0.01
    hidden: int = 256
    dim_surface: int = 200
    dim_pos: int = 100
    dim_pretrained: int = 200
    fixed_reward_correct: float = 1.0
    fixed_reward_wrong: float = -1.0
    epsilon: float = 0.1
    dropout: float = 0.05
    lr: float = 0.001
    # our own choices
    reward_mode: str = "gail"
    labeling_schema: str = TRIGGERS_AND_ENTITIES
    entity_mode: str = "gold_entities"
    epochs: int = 30
    seed: int = 0
    entropy_weight: float = 0.01
    policy_entropy: float = 0.01
    pg_estimator: str = "boltzmann"
    dim_action: int = 32
    disc_batch: int = 1
    disc_warmup: int = 1
    checkpoint_every: int = 10

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma", f"must be in [0, 1], got {self.gamma}")
        for key in ("hidden", "dim_surface", "dim_pos", "dim_pretrained", "dim_action", "disc_batch",
                    "checkpoint_every"):
            if getattr(self, key) <= 0:
                raise ConfigError(key, f"must be positive, got {getattr(self, key)}")
        if self.fixed_reward_correct <= self.fixed_reward_wrong:
            raise ConfigError("fixed_reward_correct", "must exceed fixed_reward_wrong")
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigError("epsilon", f"must be in [0, 1), got {self.epsilon}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout", f"must be in [0, 1), got {self.dropout}")
        if self.lr <= 0:
            raise ConfigError("lr", f"must be positive, got {self.lr}")
        if self.disc_warmup < 0:
            raise ConfigError("disc_warmup", f"must be non-negative, got {self.disc_warmup}")
        if self.epochs < 0:
            raise ConfigError("epochs", f"must be non-negative, got {self.epochs}")
        for key in ("entropy_weight", "policy_entropy"):
            if getattr(self, key) < 0:
                raise ConfigError(key, "must be non-negative")
        for key, allowed in (("reward_mode", REWARD_MODES), ("labeling_schema", LABELING_SCHEMAS),
                             ("entity_mode", ENTITY_MODES), ("pg_estimator", PG_ESTIMATORS)):
            if getattr(self, key) not in allowed:
                raise ConfigError(key, f"must be one of {', '.join(allowed)}, got {getattr(self, key)!r}")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def replace(self, **overrides) -> "TrainConfig":
        return dataclasses.replace(self, **coerce(overrides))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def coerce(raw: dict) -> dict:
    """Convert string values to the declared field types; reject unknown keys."""
    types = {f.name: f.type for f in fields(TrainConfig)}
    out = {}
    for key, value in raw.items():
        key = key.replace("-", "_")
        if key not in types:
            raise ConfigError(key, "unknown configuration key")
        kind = types[key]
        if isinstance(value, str):
            try:
                value = {"int": int, "float": float, "str": str, "bool": _parse_bool}[kind](value.strip())
            except ValueError:
                raise ConfigError(key, f"cannot parse {value!r} as {kind}") from None
        out[key] = value
    return out


def parse_config_text(text: str) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
        raw[key.strip()] = value.strip()
    return coerce(raw)


def load_config(path=None, **overrides) -> TrainConfig:
    """Defaults, then the config file, then ``overrides`` (highest precedence)."""
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update(coerce({k: v for k, v in overrides.items() if v is not None}))
    return TrainConfig(**values)


def dump_config(config: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config.to_dict().items())
