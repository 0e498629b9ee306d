"""Model configuration, label inventories, parameter tensors and the model file."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from ..errors import ConfigError, FormatError, VersionError

UNK = "<UNK>"
NONE_LABEL = "<NONE>"

MAGIC = b"EVDAGMDL"
FORMAT_VERSION = 1

PARAM_ORDER = (
    "word", "type", "role", "action",
    "lstm_f_W", "lstm_f_b", "lstm_b_W", "lstm_b_b",
    "rel_W", "rel_b", "out_w", "out_b",
)


@dataclass(frozen=True)
class ModelConfig:
    word_dim: int = 200
    lstm_dim: int = 100  # concatenated output of both directions
    role_dim: int = 10
    type_dim: int = 20
    action_dim: int = 4
    hidden_dim: int = 60
    dropout: float = 0.5
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        for name in ("word_dim", "lstm_dim", "role_dim", "type_dim", "action_dim", "hidden_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.lstm_dim % 2:
            raise ConfigError(f"lstm_dim must be even (two directions), got {self.lstm_dim}")
        if 2 * self.hidden_dim != self.event_dim:
            raise ConfigError(
                f"hidden_dim {self.hidden_dim} x 2 must equal type_dim + lstm_dim = {self.event_dim}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype}")

    @property
    def event_dim(self) -> int:
        return self.type_dim + self.lstm_dim

    @property
    def base_dim(self) -> int:
        return self.type_dim + self.lstm_dim + self.role_dim + self.event_dim

    @property
    def rel_dim(self) -> int:
        return self.base_dim + self.action_dim

    @property
    def lstm_half(self) -> int:
        return self.lstm_dim // 2


class Vocab:
    """String inventory with a fixed fallback chain.

    Words fall back exact -> lowercase -> UNK; labels fall back exact -> UNK.
    """

    def __init__(self, items: Iterable[str], specials: tuple[str, ...] = (UNK,),
                 lowercase_fallback: bool = False):
        self.items: list[str] = []
        self.index: dict[str, int] = {}
        for s in list(specials) + list(items):
            if s not in self.index:
                self.index[s] = len(self.items)
                self.items.append(s)
        self.lowercase_fallback = lowercase_fallback
        self.specials = specials

    def __len__(self):
        return len(self.items)

    def __contains__(self, item):
        return item in self.index

    def lookup(self, item: str) -> int:
        i = self.index.get(item)
        if i is None and self.lowercase_fallback:
            i = self.index.get(item.lower())
        if i is None:
            i = self.index[UNK]
        return i


def label_vocab(labels: Iterable[str]) -> Vocab:
    return Vocab(sorted(set(labels)), specials=(NONE_LABEL, UNK))


def word_vocab(words: Iterable[str]) -> Vocab:
    return Vocab(words, specials=(UNK,), lowercase_fallback=True)


@dataclass
class Model:
    config: ModelConfig
    words: Vocab
    types: Vocab
    roles: Vocab
    params: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def copy(self) -> "Model":
        return Model(self.config, self.words, self.types, self.roles,
                     {k: v.copy() for k, v in self.params.items()}, self.version)

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.params.items()}


def init_model(config: ModelConfig, words: Vocab, types: Vocab, roles: Vocab,
               word_vectors: Optional[np.ndarray] = None) -> Model:
    """Normal-initialised embeddings; LeCun-normal linear and recurrent weights."""
    rng = np.random.default_rng(config.seed)
    dt = np.dtype(config.dtype)
    h = config.lstm_half

    def normal(shape, scale=1.0):
        return (rng.standard_normal(shape) * scale).astype(dt)

    if word_vectors is not None:
        if word_vectors.shape != (len(words), config.word_dim):
            raise ConfigError(
                f"word vectors have shape {word_vectors.shape}, expected {(len(words), config.word_dim)}")
        word = word_vectors.astype(dt, copy=True)
    else:
        word = normal((len(words), config.word_dim))
    p = {"word": word,
         "type": normal((len(types), config.type_dim)),
         "role": normal((len(roles), config.role_dim)),
         "action": normal((4, config.action_dim))}
    fan = config.word_dim + h
    for d in ("f", "b"):
        p[f"lstm_{d}_W"] = normal((fan, 4 * h), fan ** -0.5)
        b = np.zeros(4 * h, dtype=dt)
        b[h:2 * h] = 1.0  # forget gate
        p[f"lstm_{d}_b"] = b
    p["rel_W"] = normal((config.rel_dim, config.hidden_dim), config.rel_dim ** -0.5)
    p["rel_b"] = np.zeros(config.hidden_dim, dtype=dt)
    p["out_w"] = normal((config.event_dim,), config.event_dim ** -0.5)
    p["out_b"] = np.zeros(1, dtype=dt)
    return Model(config, words, types, roles, p)


def save_model(model: Model, path) -> None:
    dt = np.dtype(model.config.dtype).newbyteorder("<")
    header = {
        "config": asdict(model.config),
        "words": model.words.items,
        "types": model.types.items,
        "roles": model.roles.items,
        "tensors": [[name, list(model.params[name].shape)] for name in PARAM_ORDER],
        "dtype": dt.str,
    }
    blob = json.dumps(header, indent=1, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", model.version, len(blob)))
        f.write(blob)
        for name in PARAM_ORDER:
            f.write(np.ascontiguousarray(model.params[name], dtype=dt).tobytes())


def load_model(path) -> Model:
    data = Path(path).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: not a model file (bad magic bytes)")
    pos = len(MAGIC)
    if len(data) < pos + 8:
        raise FormatError(f"{path}: truncated header")
    version, hlen = struct.unpack_from("<II", data, pos)
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: model format version {version}, this build reads version {FORMAT_VERSION}")
    pos += 8
    try:
        header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable metadata header ({exc})") from None
    pos += hlen
    cfg = ModelConfig(**header["config"])
    dt = np.dtype(header["dtype"])
    words = Vocab(header["words"][1:], specials=(UNK,), lowercase_fallback=True)
    types = Vocab(header["types"][2:], specials=(NONE_LABEL, UNK))
    roles = Vocab(header["roles"][2:], specials=(NONE_LABEL, UNK))
    params = {}
    for name, shape in header["tensors"]:
        n = int(np.prod(shape)) * dt.itemsize
        if len(data) < pos + n:
            raise FormatError(f"{path}: truncated tensor block {name}")
        arr = np.frombuffer(data, dtype=dt, count=int(np.prod(shape)), offset=pos)
        params[name] = arr.reshape(shape).astype(cfg.dtype)
        pos += n
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes after tensor blocks")
    return Model(cfg, words, types, roles, params, version)
