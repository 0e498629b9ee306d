"""Pretrained word vectors in the plain-text ``<count> <dim>`` format."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from ..errors import ConfigError, ParseError
from ..scorer.model import Vocab, word_vocab

log = logging.getLogger(__name__)


@dataclass
class EmbeddingTable:
    vocab: Vocab
    vectors: np.ndarray

    def lookup(self, token: str) -> np.ndarray:
        return self.vectors[self.vocab.lookup(token)]


def load_word_embeddings(path, dim: int = 200, seed: int = 0, allow_random: bool = False,
                         vocab: Optional[Iterable[str]] = None,
                         restrict: Optional[set] = None) -> EmbeddingTable:
    """Read vectors; row 0 is a normal-initialised UNK.

    ``restrict`` keeps only listed words (exact or lowercase matches).  A
    missing file with ``allow_random`` yields a random table over ``vocab``.
    """
    rng = np.random.default_rng(seed)
    path = Path(path) if path is not None else None
    if path is None or not path.exists():
        if not allow_random:
            raise ConfigError(f"embedding file {path} not found")
        words = sorted(set(vocab or ()))
        log.warning("embedding file %s missing; using random vectors for %d words", path, len(words))
        v = word_vocab(words)
        return EmbeddingTable(v, rng.standard_normal((len(v), dim)))
    words: list[str] = []
    rows: list[np.ndarray] = []
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            raise ParseError("header must be '<count> <dim>'", path, 1)
        count, file_dim = int(header[0]), int(header[1])
        if file_dim != dim:
            raise ConfigError(f"{path}: embedding dim {file_dim} does not match configured word dim {dim}")
        for lineno, line in enumerate(f, start=2):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            if len(parts) != dim + 1:
                raise ParseError(f"expected token and {dim} values, got {len(parts) - 1}", path, lineno)
            tok = parts[0]
            if restrict is not None and tok not in restrict and tok.lower() not in restrict:
                continue
            try:
                rows.append(np.array(parts[1:], dtype=float))
            except ValueError:
                raise ParseError("non-numeric vector value", path, lineno) from None
            words.append(tok)
    if restrict is None and len(words) != count:
        log.warning("%s: header declares %d vectors, read %d", path, count, len(words))
    v = word_vocab(words)
    vectors = np.empty((len(v), dim))
    vectors[0] = rng.standard_normal(dim)
    for w, row in zip(words, rows):
        vectors[v.index[w]] = row
    return EmbeddingTable(v, vectors)
