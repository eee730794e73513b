"""Text embedding contract plus a self-contained hashed TF-IDF reference.

The reference embedder buckets tokens with 64-bit FNV-1a modulo the vector
dimension and weights each bucket by log(1 + tf) * idf, where

    idf(t) = 1 + ln(N / df(t))   for terms seen while fitting,
    idf(t) = 1.0                 otherwise.

Underscores are treated as spaces before tokenization, so entity ids and
their surface phrases embed identically. Everything is deterministic across
processes and platforms (no use of Python's salted hash()).
"""

from __future__ import annotations

import json
import math
from functools import lru_cache
from typing import Protocol

import numpy as np

from .corpus import CorpusIndex, tokenize
from .errors import DataError

DEFAULT_DIMENSION = 4096

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _U64
    return h


def embedding_tokens(text: str) -> list[str]:
    return tokenize(text.replace("_", " "))


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class HashedTfidfEmbedder:
    """Deterministic bag-of-words embedder over hashed buckets.

    ``idf`` maps term -> weight; fit it from a corpus index with
    :meth:`from_index` or leave it empty for pure log-tf weighting.
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION, idf: dict[str, float] | None = None):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.idf = dict(idf or {})
        self._cached = lru_cache(maxsize=65536)(self._embed_uncached)

    @classmethod
    def from_index(cls, index: CorpusIndex, dimension: int = DEFAULT_DIMENSION) -> "HashedTfidfEmbedder":
        n = index.sentence_count
        idf = {}
        if n > 0:
            for term, posting in index.postings.items():
                idf[term] = 1.0 + math.log(n / len(posting))
        return cls(dimension, idf)

    def bucket(self, token: str) -> int:
        return fnv1a64(token.encode("utf-8")) % self.dimension

    def _embed_uncached(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        counts: dict[str, int] = {}
        for tok in embedding_tokens(text):
            counts[tok] = counts.get(tok, 0) + 1
        for tok, tf in counts.items():
            weight = math.log(1.0 + tf) * self.idf.get(tok, 1.0)
            vec[self.bucket(tok)] += weight
        vec.setflags(write=False)
        return vec

    def embed(self, text: str) -> np.ndarray:
        return self._cached(text)


class PrecomputedEmbedder:
    """Escape hatch for vectors computed offline by an external encoder.

    File format: JSONL whose first line is {"dimension": D} and every later
    line is {"text": str, "vector": [floats]}. Lookup is by the text after
    underscore-to-space and whitespace normalization.
    """

    def __init__(self, dimension: int, table: dict[str, np.ndarray]):
        self.dimension = dimension
        self._table = table

    @staticmethod
    def _key(text: str) -> str:
        return " ".join(embedding_tokens(text))

    @classmethod
    def load(cls, path: str) -> "PrecomputedEmbedder":
        with open(path, encoding="utf-8") as fh:
            header_line = fh.readline()
            try:
                header = json.loads(header_line)
                dimension = int(header["dimension"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f'{path}: first line must be {{"dimension": D}}') from exc
            table: dict[str, np.ndarray] = {}
            for line_no, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                vec = np.asarray(rec["vector"], dtype=np.float64)
                if vec.shape != (dimension,):
                    raise DataError(f"{path} line {line_no}: vector length != {dimension}")
                table[cls._key(rec["text"])] = vec
        return cls(dimension, table)

    def embed(self, text: str) -> np.ndarray:
        key = self._key(text)
        if key not in self._table:
            raise DataError(f"no precomputed embedding for {text!r}")
        return self._table[key]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0 when either vector has zero norm."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(np.dot(a, b) / (norm_a * norm_b))
