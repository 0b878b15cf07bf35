"""Pluggable sentence/instance embedding providers.

All providers map a bag of tokens to a dense unit-norm (or zero) vector.  The
default is signed feature hashing, which needs no fitted vocabulary and no
model weights; a TF-IDF variant reweights tokens before hashing, and a
precomputed provider serves vectors supplied by an external encoder.
"""

from __future__ import annotations

import hashlib
import math
from collections import Counter

import numpy as np

from .corpus import Document, TextCorpus
from .errors import FormatError, XmtcError
from .validation import check_positive_int


def _signed_bucket(token: str, seed: int, dim: int) -> tuple[int, float]:
    """Stable (bucket, sign) pair for a token; independent of PYTHONHASHSEED."""
    digest = hashlib.blake2b(
        f"{seed}\x1f{token}".encode("utf-8"), digest_size=9
    ).digest()
    h = int.from_bytes(digest, "little")
    return (h >> 1) % dim, 1.0 if h & 1 else -1.0


def _hash_accumulate(
    weights: dict[str, float], dim: int, seed: int, cache: dict | None = None
) -> np.ndarray:
    v = np.zeros(dim, dtype=np.float64)
    for token, weight in weights.items():
        if cache is not None:
            pair = cache.get(token)
            if pair is None:
                pair = _signed_bucket(token, seed, dim)
                cache[token] = pair
        else:
            pair = _signed_bucket(token, seed, dim)
        bucket, sign = pair
        v[bucket] += sign * weight
    return v


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v if norm == 0.0 else v / norm


def hash_embed(tokens, dim: int, seed: int) -> np.ndarray:
    """Signed feature hashing of a token bag into ``dim`` buckets, L2-normalized
    unless all-zero.  Deterministic in ``seed``; empty input gives the zero
    vector."""
    check_positive_int("dim", dim)
    return _unit(_hash_accumulate(Counter(tokens), dim, seed))


class EmbeddingProvider:
    """Interface: ``embed(tokens) -> vector`` of a fixed dimension."""

    dimension: int

    def embed(self, tokens) -> np.ndarray:
        raise NotImplementedError

    def embed_document(self, doc: Document) -> np.ndarray:
        return self.embed(doc.tokens())

    def embed_features(self, indices, values) -> np.ndarray:
        """Embed a sparse feature vector (index/value pairs); optional."""
        raise XmtcError(f"{type(self).__name__} cannot embed sparse feature vectors")


class HashingEmbedder(EmbeddingProvider):
    """Stateless signed-hashing embedder; also handles sparse feature vectors
    by hashing the stringified feature indices with their values as weights."""

    def __init__(self, dimension: int = 256, seed: int = 0):
        check_positive_int("dimension", dimension)
        self.dimension = int(dimension)
        self.seed = int(seed)
        self._cache: dict[str, tuple[int, float]] = {}

    def embed(self, tokens) -> np.ndarray:
        return _unit(
            _hash_accumulate(Counter(tokens), self.dimension, self.seed, self._cache)
        )

    def embed_features(self, indices, values) -> np.ndarray:
        weights: dict[str, float] = {}
        for j, v in zip(indices, values):
            key = str(int(j))
            weights[key] = weights.get(key, 0.0) + float(v)
        return _unit(_hash_accumulate(weights, self.dimension, self.seed, self._cache))


class TfidfEmbedder(EmbeddingProvider):
    """Hashing embedder whose token weights are tf * idf from a fitted corpus.

    idf(t) = ln((1 + n_docs) / (1 + df(t))) + 1; unseen tokens get df = 0.
    """

    def __init__(self, doc_frequencies: dict[str, int], n_docs: int,
                 dimension: int = 256, seed: int = 0):
        check_positive_int("dimension", dimension)
        self.doc_frequencies = doc_frequencies
        self.n_docs = int(n_docs)
        self.dimension = int(dimension)
        self.seed = int(seed)
        self._cache: dict[str, tuple[int, float]] = {}

    def idf(self, token: str) -> float:
        df = self.doc_frequencies.get(token, 0)
        return math.log((1 + self.n_docs) / (1 + df)) + 1.0

    def embed(self, tokens) -> np.ndarray:
        weights = {
            token: count * self.idf(token) for token, count in Counter(tokens).items()
        }
        return _unit(_hash_accumulate(weights, self.dimension, self.seed, self._cache))


def tfidf_fit(corpus: TextCorpus, dimension: int = 256, seed: int = 0) -> TfidfEmbedder:
    """Fit document frequencies over a corpus and return a TF-IDF embedder."""
    if len(corpus) == 0:
        raise XmtcError("cannot fit TF-IDF on an empty corpus")
    df: Counter[str] = Counter()
    for doc in corpus:
        df.update({t for sentence in doc.sentences for t in sentence})
    return TfidfEmbedder(dict(df), len(corpus), dimension=dimension, seed=seed)


class PrecomputedEmbedder(EmbeddingProvider):
    """Serves externally computed vectors by key.

    Keys are arbitrary strings (commonly a document id or a "doc:sentence"
    index pair).  ``embed(tokens)`` treats the space-joined tokens as the key;
    ``embed_document`` looks up the document id.  Vectors are L2-normalized at
    load so the unit-norm provider contract holds regardless of the source.
    """

    def __init__(self, vectors: dict[str, np.ndarray], dimension: int):
        self.vectors = vectors
        self.dimension = int(dimension)

    def vector(self, key: str) -> np.ndarray:
        if key not in self.vectors:
            raise KeyError(f"no precomputed vector for key {key!r}")
        return self.vectors[key]

    def embed(self, tokens) -> np.ndarray:
        return self.vector(" ".join(tokens))

    def embed_document(self, doc: Document) -> np.ndarray:
        return self.vector(doc.doc_id)


def load_precomputed(path) -> PrecomputedEmbedder:
    """Parse a "key<TAB>v1 v2 ... vD" vectors file.

    Raises :class:`FormatError` when records disagree on dimension.
    """
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            key, sep, rest = line.partition("\t")
            if not sep:
                raise FormatError(f"line {lineno}: expected key<TAB>values")
            try:
                v = np.array([float(x) for x in rest.split()], dtype=np.float64)
            except ValueError:
                raise FormatError(f"line {lineno}: non-numeric vector component")
            if v.size == 0:
                raise FormatError(f"line {lineno}: empty vector")
            if dim is None:
                dim = v.size
            elif v.size != dim:
                raise FormatError(
                    f"line {lineno}: dimension {v.size} differs from {dim}"
                )
            vectors[key] = _unit(v)
    if dim is None:
        raise FormatError("vectors file contains no records")
    return PrecomputedEmbedder(vectors, dim)
