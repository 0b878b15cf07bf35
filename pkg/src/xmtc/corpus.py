"""Datasets in the sparse multi-label exchange format, and raw text corpora.

The on-disk dataset format is the one used by the public extreme-classification
benchmark files: a header line ``num_instances num_features num_labels``
followed by one line per instance of comma-separated label ids, a space, and
space-separated ``feature:value`` pairs.  Text corpora are UTF-8 files with one
document per line, sentences separated by tabs, tokens by spaces.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import BoundsError, ParseError, XmtcError
from .validation import check_in_range

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


class Dataset:
    """Instances with sparse feature vectors and label-id sets.

    Parameters
    ----------
    features : scipy.sparse matrix, shape (n, num_features)
        Row-per-instance feature matrix; stored as CSR.
    labels : list of iterables of int
        One label-id set per instance.
    num_labels : int
        Size of the label universe; every label id must be below it.
    """

    def __init__(self, features, labels, num_labels: int):
        self.features: sp.csr_matrix = sp.csr_matrix(features, dtype=np.float64)
        self.features.sum_duplicates()
        self.features.sort_indices()
        self.labels: list[frozenset[int]] = [frozenset(ls) for ls in labels]
        self.num_labels = int(num_labels)
        if len(self.labels) != self.features.shape[0]:
            raise XmtcError("labels and feature rows disagree in length")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.intp)
        return Dataset(
            self.features[indices], [self.labels[i] for i in indices], self.num_labels
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if (
            self.num_labels != other.num_labels
            or self.features.shape != other.features.shape
            or self.labels != other.labels
        ):
            return False
        return (
            np.array_equal(self.features.indptr, other.features.indptr)
            and np.array_equal(self.features.indices, other.features.indices)
            and np.array_equal(self.features.data, other.features.data)
        )

    def __repr__(self) -> str:
        return (
            f"Dataset(n={self.n}, num_features={self.num_features}, "
            f"num_labels={self.num_labels})"
        )


@dataclass
class Document:
    doc_id: str
    sentences: list[list[str]]

    def tokens(self) -> list[str]:
        """All tokens of the document in order."""
        return [t for sentence in self.sentences for t in sentence]


@dataclass
class TextCorpus:
    """Ordered documents; ids are positional strings unless set explicitly."""

    documents: list[Document] = field(default_factory=list)

    def __post_init__(self):
        ids = [d.doc_id for d in self.documents]
        if len(set(ids)) != len(ids):
            raise XmtcError("document ids must be unique")

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def __getitem__(self, i: int) -> Document:
        return self.documents[i]


@dataclass
class DatasetStats:
    n_train: int
    n_test: int
    num_features: int
    num_labels: int
    avg_labels_per_instance: float
    avg_instances_per_label: float


def parse_xmc(path) -> Dataset:
    """Parse a sparse-format dataset file.

    Raises
    ------
    ParseError
        Malformed header, non-numeric field, or wrong instance count.
    BoundsError
        A label or feature index at or above the header-declared bound.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", line=1)

    header = lines[0].split()
    if len(header) != 3:
        raise ParseError(
            "header must be 'num_instances num_features num_labels'", line=1
        )
    try:
        n, d, L = (int(tok) for tok in header)
    except ValueError:
        raise ParseError("non-integer header field", line=1)
    if n < 0 or d < 1 or L < 1:
        raise ParseError("header dimensions must be positive", line=1)
    if len(lines) - 1 != n:
        raise ParseError(
            f"header declares {n} instances but file has {len(lines) - 1} data lines",
            line=1,
        )

    labels: list[list[int]] = []
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for i, line in enumerate(lines[1:]):
        lineno = i + 2
        fields = line.split(" ")
        label_field, feature_fields = fields[0], fields[1:]
        instance_labels: list[int] = []
        if label_field:
            for tok in label_field.split(","):
                try:
                    l = int(tok)
                except ValueError:
                    raise ParseError(f"non-numeric label {tok!r}", line=lineno)
                if not 0 <= l < L:
                    raise BoundsError(
                        f"label {l} out of range [0, {L})", line=lineno
                    )
                instance_labels.append(l)
        for tok in feature_fields:
            if not tok:
                continue
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"expected feature:value, got {tok!r}", line=lineno)
            try:
                j = int(idx_s)
                v = float(val_s)
            except ValueError:
                raise ParseError(f"non-numeric feature pair {tok!r}", line=lineno)
            if not 0 <= j < d:
                raise BoundsError(f"feature {j} out of range [0, {d})", line=lineno)
            if not np.isfinite(v):
                raise ParseError(f"non-finite feature value {tok!r}", line=lineno)
            rows.append(i)
            cols.append(j)
            vals.append(v)
        labels.append(instance_labels)

    features = sp.csr_matrix(
        (vals, (rows, cols)), shape=(n, d), dtype=np.float64
    )
    return Dataset(features, labels, L)


def serialize_xmc(ds: Dataset, path) -> None:
    """Write a dataset in the sparse exchange format (canonical: sorted ids)."""
    X = ds.features.tocsr()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{ds.n} {ds.num_features} {ds.num_labels}\n")
        for i in range(ds.n):
            label_part = ",".join(str(l) for l in sorted(ds.labels[i]))
            start, end = X.indptr[i], X.indptr[i + 1]
            pairs = " ".join(
                f"{X.indices[k]}:{float(X.data[k])!r}" for k in range(start, end)
            )
            fh.write(f"{label_part} {pairs}\n")


def dataset_stats(train: Dataset, test: Dataset) -> DatasetStats:
    """Average labels per instance (train) and average train instances per label."""
    if train.num_labels != test.num_labels or train.num_features != test.num_features:
        raise XmtcError("train and test splits disagree on L or d")
    if train.n == 0 or test.n == 0:
        raise XmtcError("cannot compute statistics of an empty split")
    total_labels = sum(len(ls) for ls in train.labels)
    return DatasetStats(
        n_train=train.n,
        n_test=test.n,
        num_features=train.num_features,
        num_labels=train.num_labels,
        avg_labels_per_instance=total_labels / train.n,
        avg_instances_per_label=total_labels / train.num_labels,
    )


def label_frequencies(ds: Dataset) -> np.ndarray:
    """Number of instances containing each label, length ``num_labels``."""
    n = np.zeros(ds.num_labels, dtype=np.int64)
    for labels in ds.labels:
        for l in labels:
            n[l] += 1
    return n


def split_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Index sets of a deterministic (1 - fraction, fraction) partition."""
    check_in_range("fraction", fraction, 0.0, 1.0, False, False)
    n_held = int(round(n * fraction))
    if n_held < 1 or n_held >= n:
        raise XmtcError(f"fraction={fraction} leaves an empty side for n={n}")
    order = np.random.default_rng(seed).permutation(n)
    return np.sort(order[n_held:]), np.sort(order[:n_held])


def split(ds: Dataset, val_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic exact partition into (train, validation)."""
    train_idx, val_idx = split_indices(ds.n, val_fraction, seed)
    return ds.subset(train_idx), ds.subset(val_idx)


def subset_corpus(corpus: TextCorpus, indices) -> TextCorpus:
    """Documents at ``indices``, re-keyed positionally."""
    return TextCorpus(
        [
            Document(str(pos), [list(s) for s in corpus[int(i)].sentences])
            for pos, i in enumerate(indices)
        ]
    )


def parse_text_corpus(path) -> TextCorpus:
    """Parse a one-document-per-line corpus; tokens are lowercased."""
    documents = []
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read()
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for i, line in enumerate(lines):
        if line == "":
            sentences: list[list[str]] = []
        else:
            sentences = [
                [tok.lower() for tok in sent.split(" ") if tok]
                for sent in line.split("\t")
            ]
        documents.append(Document(doc_id=str(i), sentences=sentences))
    return TextCorpus(documents)


def serialize_text_corpus(corpus: TextCorpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            for sentence in doc.sentences:
                for tok in sentence:
                    if not tok or re.search(r"[\s]", tok):
                        raise XmtcError(
                            f"token {tok!r} in doc {doc.doc_id} not serializable"
                        )
            fh.write("\t".join(" ".join(s) for s in doc.sentences) + "\n")
