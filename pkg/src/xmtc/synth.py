"""Synthetic corpus generator with planted label clusters and power-law tails.

Labels are split into contiguous planted clusters and weighted by a global
power law, so head clusters soak up most instances while tail clusters starve.
Each instance samples one cluster, draws its labels inside it, and emits
tokens from the cluster's vocabulary plus per-label marker tokens; features
are exact token counts, so text and feature views carry the same signal.
Token emissions are replaced by uniform off-topic tokens at the noise rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import Dataset, Document, TextCorpus
from .errors import XmtcError
from .validation import check_in_range, check_positive_int


@dataclass
class SynthSpec:
    num_labels: int
    n_clusters_true: int
    n_instances: int
    num_features: int | None = None
    power_exponent: float = 1.1
    noise_rate: float = 0.05
    seed: int = 0
    cluster_feature_dims: int = 10
    label_feature_dims: int = 2
    background_feature_dims: int = 0
    sentences_per_doc: int = 4
    tokens_per_sentence: int = 5
    label_token_share: float = 0.35
    background_token_share: float = 0.0
    extra_labels_mean: float = 0.8
    cross_cluster_label_rate: float = 0.0
    cluster_confusion_share: float = 0.0

    def required_features(self) -> int:
        return (
            self.n_clusters_true * self.cluster_feature_dims
            + self.num_labels * self.label_feature_dims
            + self.background_feature_dims
        )


def _letters(n: int) -> str:
    """Non-negative int as a lowercase-letter string (keyword-shaped tokens)."""
    digits = []
    n = int(n)
    while True:
        digits.append(chr(ord("a") + n % 26))
        n //= 26
        if n == 0:
            return "".join(reversed(digits))


def _token_of_dim(spec: SynthSpec, dim: int) -> str:
    cluster_span = spec.n_clusters_true * spec.cluster_feature_dims
    label_span = spec.num_labels * spec.label_feature_dims
    if dim < cluster_span:
        c, j = divmod(dim, spec.cluster_feature_dims)
        return f"c{_letters(c)}w{_letters(j)}"
    if dim < cluster_span + label_span:
        l, j = divmod(dim - cluster_span, spec.label_feature_dims)
        return f"l{_letters(l)}w{_letters(j)}"
    return f"bg{_letters(dim - cluster_span - label_span)}"


def generate(spec: SynthSpec) -> tuple[Dataset, TextCorpus, np.ndarray]:
    """Build (dataset, corpus, planted label-to-cluster assignment)."""
    L, K = spec.num_labels, spec.n_clusters_true
    check_positive_int("num_labels", L)
    check_positive_int("n_clusters_true", K)
    check_positive_int("n_instances", spec.n_instances)
    check_in_range("noise_rate", spec.noise_rate, 0.0, 1.0)
    check_in_range("power_exponent", spec.power_exponent, 0.0, None)
    if K > L:
        raise XmtcError("more planted clusters than labels")
    d = spec.num_features if spec.num_features is not None else spec.required_features()
    if d < spec.required_features():
        raise XmtcError(
            f"num_features={d} cannot hold {spec.required_features()} structured dims"
        )

    rng = np.random.default_rng(spec.seed)
    blocks = np.array_split(np.arange(L), K)
    planted = np.empty(L, dtype=np.int64)
    for c, members in enumerate(blocks):
        planted[members] = c

    weights = (np.arange(L) + 1.0) ** (-spec.power_exponent)
    cluster_weight = np.array([weights[members].sum() for members in blocks])
    p_cluster = cluster_weight / cluster_weight.sum()

    cluster_span = K * spec.cluster_feature_dims
    budget = spec.sentences_per_doc * spec.tokens_per_sentence

    rows, cols, vals = [], [], []
    label_sets: list[set[int]] = []
    documents: list[Document] = []
    p_global = weights / weights.sum()
    for i in range(spec.n_instances):
        c = int(rng.choice(K, p=p_cluster))
        members = blocks[c]
        p_members = weights[members] / weights[members].sum()
        chosen = {int(rng.choice(members, p=p_members))}
        # extra labels stay in the primary cluster except for occasional
        # cross-cluster draws, so within-cluster co-occurrence dominates
        for _ in range(int(rng.poisson(spec.extra_labels_mean))):
            if rng.random() < spec.cross_cluster_label_rate:
                chosen.add(int(rng.choice(L, p=p_global)))
            else:
                chosen.add(int(rng.choice(members, p=p_members)))
        label_list = sorted(chosen)
        label_sets.append(set(label_list))

        background_base = cluster_span + L * spec.label_feature_dims
        dims = np.empty(budget, dtype=np.int64)
        for t in range(budget):
            if rng.random() < spec.noise_rate:
                dims[t] = rng.integers(spec.required_features())
            elif rng.random() < spec.label_token_share:
                l = label_list[int(rng.integers(len(label_list)))]
                dims[t] = (
                    cluster_span
                    + l * spec.label_feature_dims
                    + int(rng.integers(spec.label_feature_dims))
                )
            elif (
                spec.background_feature_dims
                and rng.random() < spec.background_token_share
            ):
                dims[t] = background_base + int(
                    rng.integers(spec.background_feature_dims)
                )
            else:
                # topical token; confusable instances borrow another
                # cluster's vocabulary for a share of their emissions
                source = c
                if rng.random() < spec.cluster_confusion_share:
                    source = int(rng.integers(K))
                dims[t] = source * spec.cluster_feature_dims + int(
                    rng.integers(spec.cluster_feature_dims)
                )
        unique, counts = np.unique(dims, return_counts=True)
        rows.extend([i] * unique.size)
        cols.extend(unique.tolist())
        vals.extend(counts.astype(np.float64).tolist())

        tokens = [_token_of_dim(spec, int(dim)) for dim in dims]
        sentences = [
            tokens[s * spec.tokens_per_sentence : (s + 1) * spec.tokens_per_sentence]
            for s in range(spec.sentences_per_doc)
        ]
        documents.append(Document(str(i), sentences))

    X = sp.csr_matrix((vals, (rows, cols)), shape=(spec.n_instances, d))
    return Dataset(X, label_sets, L), TextCorpus(documents), planted


def adjusted_rand_index(truth, predicted) -> float:
    """Pair-counting agreement between two partitions, chance-corrected."""
    truth = np.asarray(truth)
    predicted = np.asarray(predicted)
    if truth.shape != predicted.shape:
        raise XmtcError("partitions must cover the same items")
    n = truth.size
    classes, t_idx = np.unique(truth, return_inverse=True)
    clusters, p_idx = np.unique(predicted, return_inverse=True)
    table = np.zeros((classes.size, clusters.size), dtype=np.int64)
    np.add.at(table, (t_idx, p_idx), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = comb2(table.astype(np.float64)).sum()
    sum_a = comb2(table.sum(axis=1).astype(np.float64)).sum()
    sum_b = comb2(table.sum(axis=0).astype(np.float64)).sum()
    total = comb2(float(n))
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def label_frequency_tail_exponent(counts: np.ndarray) -> float:
    """Log-log slope of sorted positive label frequencies against rank."""
    counts = np.sort(np.asarray(counts, dtype=np.float64))[::-1]
    counts = counts[counts > 0]
    if counts.size < 3:
        raise XmtcError("not enough populated labels for a tail fit")
    ranks = np.arange(1, counts.size + 1, dtype=np.float64)
    slope, _ = np.polyfit(np.log(ranks), np.log(counts), 1)
    return float(-slope)


def kolmogorov_smirnov_to_power_law(counts: np.ndarray, exponent: float) -> float:
    """KS distance between empirical label-draw CDF and the target power law."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.sum() <= 0:
        raise XmtcError("no label draws to compare")
    target = (np.arange(counts.size) + 1.0) ** (-exponent)
    emp_cdf = np.cumsum(counts) / counts.sum()
    target_cdf = np.cumsum(target) / target.sum()
    return float(np.max(np.abs(emp_cdf - target_cdf)))
