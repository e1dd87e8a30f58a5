"""Deterministic tokenization and tf-idf featurization.

The vocabulary is fitted once per project over every uploaded record and is
immutable afterwards, so feature indices stay comparable across model
snapshots. All functions here are pure.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import EmptyVocabulary

TOKENIZER_NAME = "unicode_alnum_min2_lower"

# Maximal runs of Unicode alphanumerics; \w minus underscore.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_MIN_TOKEN_LEN = 2


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric runs of length >= 2, in document order,
    duplicates kept."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= _MIN_TOKEN_LEN]


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    document_frequency: tuple[int, ...]
    corpus_size: int
    idf: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def index_of(self, token: str) -> int | None:
        return self._index.get(token)


def _idf(corpus_size: int, df: int) -> float:
    return math.log((1 + corpus_size) / (1 + df)) + 1.0


def fit_vocabulary(corpus: Sequence[str], max_vocabulary: int = 50_000) -> Vocabulary:
    """Count document frequencies over the corpus and keep the
    ``max_vocabulary`` highest-df tokens (ties lexicographic). The final token
    list is sorted lexicographically."""
    if not corpus:
        raise EmptyVocabulary("corpus is empty")
    df: Counter[str] = Counter()
    for text in corpus:
        df.update(set(tokenize(text)))
    if not df:
        raise EmptyVocabulary("corpus contains no tokens")
    ranked = sorted(df.items(), key=lambda kv: (-kv[1], kv[0]))[:max_vocabulary]
    kept = sorted(token for token, _ in ranked)
    n = len(corpus)
    freqs = tuple(df[t] for t in kept)
    return Vocabulary(
        tokens=tuple(kept),
        document_frequency=freqs,
        corpus_size=n,
        idf=tuple(_idf(n, f) for f in freqs),
    )


@dataclass(frozen=True)
class SparseVector:
    """L2-normalized tf-idf vector; zero vector when every token is OOV."""

    indices: tuple[int, ...]
    values: tuple[float, ...]
    dimension: int

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dimension)
        dense[list(self.indices)] = self.values
        return dense


def transform(text: str, vocabulary: Vocabulary) -> SparseVector:
    counts: Counter[int] = Counter()
    for token in tokenize(text):
        idx = vocabulary.index_of(token)
        if idx is not None:
            counts[idx] += 1
    if not counts:
        return SparseVector(indices=(), values=(), dimension=len(vocabulary))
    indices = sorted(counts)
    weights = [counts[i] * vocabulary.idf[i] for i in indices]
    norm = math.sqrt(sum(w * w for w in weights))
    return SparseVector(
        indices=tuple(indices),
        values=tuple(w / norm for w in weights),
        dimension=len(vocabulary),
    )


def stack(vectors: Iterable[SparseVector], dimension: int) -> sparse.csr_matrix:
    """Stack sparse vectors into one CSR matrix for batch linear algebra."""
    vectors = list(vectors)
    data: list[float] = []
    indices: list[int] = []
    indptr = [0]
    for vec in vectors:
        data.extend(vec.values)
        indices.extend(vec.indices)
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(vectors), dimension),
    )
