"""Run configuration: defaults, flat ``key = value`` files and flag overrides."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

from .errors import ConfigError, ParseError
from .scorer.model import ModelConfig
from .search import BeamConfig
from .trainer import TrainConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    mini_batch_size: int = 100
    word_embedding: int = 200
    bilstm_word_embedding: int = 100
    role_type_embedding: int = 10
    trigger_argument_type_embedding: int = 20
    early_stopping_patience: int = 5
    dropout: float = 0.5
    learning_rate: float = 0.001
    hidden_layer_size: int = 60
    event_embedding: int = 120
    action_score_threshold: float = 0.5
    beam_size: int = 8
    action_embedding: int = 4
    weight_decay_rate: float = 0.001
    max_epochs: int = 50
    seed: int = 0
    strict_stop: bool = False
    threads: int = 1
    dtype: str = "float32"

    def __post_init__(self):
        derived = self.trigger_argument_type_embedding + self.bilstm_word_embedding
        if self.event_embedding != derived:
            raise ConfigError(
                f"event_embedding={self.event_embedding} must equal trigger_argument_type_embedding"
                f" + bilstm_word_embedding = {derived}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.action_embedding != 4:
            raise ConfigError("action_embedding must be 4 (one dimension per action row)")
        # Surface range problems now rather than mid-run.
        self.model_config()
        self.train_config()
        self.beam_config()

    def model_config(self) -> ModelConfig:
        return ModelConfig(word_dim=self.word_embedding, lstm_dim=self.bilstm_word_embedding,
                           role_dim=self.role_type_embedding,
                           type_dim=self.trigger_argument_type_embedding,
                           action_dim=self.action_embedding, hidden_dim=self.hidden_layer_size,
                           dropout=self.dropout, dtype=self.dtype, seed=self.seed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.mini_batch_size, learning_rate=self.learning_rate,
                           weight_decay=self.weight_decay_rate, dropout=self.dropout,
                           patience=self.early_stopping_patience, max_epochs=self.max_epochs,
                           beam_size=self.beam_size, threshold=self.action_score_threshold,
                           seed=self.seed, strict_stop=self.strict_stop)

    def beam_config(self) -> BeamConfig:
        return BeamConfig(k=self.beam_size, threshold=self.action_score_threshold,
                          strict_stop=self.strict_stop)

    def to_text(self) -> str:
        return "\n".join(f"{k} = {_fmt(v)}" for k, v in asdict(self).items())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(key: str, value: str, kind):
    if kind is bool:
        v = value.lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(value)
    return kind(value)


_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def parse_config(text: str, path=None, base: Optional[RunConfig] = None) -> RunConfig:
    """Parse ``key = value`` lines over ``base`` (defaults when omitted)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {line!r}", path, lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}" + (f" in {path}" if path else ""))
        try:
            values[key] = _coerce(key, val, _TYPES[key])
        except ValueError:
            raise ConfigError(f"bad value for config key {key!r}: {val!r}") from None
    return replace(base or RunConfig(), **values)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read(), path)


def with_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Apply flag values; ``None`` means the flag was not given."""
    given = {k: v for k, v in overrides.items() if v is not None}
    unknown = set(given) - set(_TYPES)
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
    return replace(config, **given)
