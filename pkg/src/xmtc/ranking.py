"""Per-label binary classifiers and the cluster-gated label ranking.

Each label gets an independent L2-regularized logistic regression whose
negative pool is restricted to instances matched to the label's own cluster,
mirroring the conditional factorization: the final label score is the product
of the predicted cluster probability and the classifier probability, and the
disjointness of clusters collapses the mixture sum to that single term.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .base import BaseEstimator, check_is_fitted
from .corpus import Dataset
from .errors import XmtcError
from .keygraph import KeyGraph
from .labelgraph import LabelClusters
from .matcher import MatcherModel, cluster_targets, sigmoid
from .validation import check_in_range, check_positive_int, worker_count


@dataclass
class LabelClassifier:
    weights: np.ndarray
    bias: float

    def probability(self, x) -> float:
        z = float(np.asarray(x @ self.weights).ravel()[0]) + self.bias
        return float(sigmoid(np.array([z]))[0])


@dataclass
class LabelClassifiers:
    """One trained classifier per label with positive training instances."""

    classifiers: dict[int, LabelClassifier]
    num_features: int
    regularization: float

    def __contains__(self, label: int) -> bool:
        return label in self.classifiers

    def __len__(self) -> int:
        return len(self.classifiers)


def _logistic_objective(X, y, w, b, reg):
    margins = (2.0 * y - 1.0) * (X @ w + b)
    return float(np.logaddexp(0.0, -margins).mean() + 0.5 * reg * (w @ w))


def fit_logistic(
    X, y: np.ndarray, regularization: float, max_epochs: int = 500, tol: float = 1e-5
) -> tuple[np.ndarray, float, float]:
    """Full-batch gradient descent with Armijo backtracking.

    Minimizes mean log-loss + (reg/2)||w||^2 (bias unregularized) until the
    gradient norm drops below ``tol`` or ``max_epochs`` passes.  Returns
    (weights, bias, final gradient norm).
    """
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    step = 1.0
    objective = _logistic_objective(X, y, w, b, regularization)
    gnorm = np.inf
    for _ in range(max_epochs):
        p = sigmoid(np.asarray(X @ w + b))
        residual = (p - y) / n
        g_w = np.asarray(X.T @ residual).ravel() + regularization * w
        g_b = float(residual.sum())
        gnorm = float(np.sqrt(g_w @ g_w + g_b * g_b))
        if gnorm < tol:
            break
        step = min(step * 2.0, 1e4)
        improved = False
        while step > 1e-14:
            w_next = w - step * g_w
            b_next = b - step * g_b
            candidate = _logistic_objective(X, y, w_next, b_next, regularization)
            if candidate <= objective - 1e-4 * step * gnorm * gnorm:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        w, b, objective = w_next, b_next, candidate
    return w, b, gnorm


def _prior_only(n_pos: int, num_features: int) -> LabelClassifier:
    # degenerate pool: fall back to a Laplace-smoothed positive prior
    p = (n_pos + 1.0) / (n_pos + 2.0)
    return LabelClassifier(
        weights=np.zeros(num_features), bias=float(np.log(p / (1.0 - p)))
    )


def train_label_classifiers(
    ds: Dataset,
    clusters: LabelClusters,
    regularization: float = 1.0,
    max_epochs: int = 500,
    tol: float = 1e-5,
    n_jobs: int | None = None,
) -> LabelClassifiers:
    """Independent per-label logistic regressions, trained in parallel.

    For a label in cluster k the positives are its own instances and the
    negatives are the instances matched to cluster k without the label.
    Labels without positive instances are skipped.
    """
    check_in_range("regularization", regularization, 0.0, None, low_inclusive=False)
    check_positive_int("max_epochs", max_epochs)
    G = cluster_targets(ds, clusters)
    X = ds.features.tocsr()
    positives_of: dict[int, list[int]] = {}
    for i, labels in enumerate(ds.labels):
        for l in labels:
            positives_of.setdefault(l, []).append(i)

    pool_of_cluster = [np.flatnonzero(G[:, k] == 1.0) for k in range(clusters.n_clusters)]

    def train_one(label: int) -> tuple[int, LabelClassifier]:
        positives = np.array(positives_of[label], dtype=np.intp)
        pool = pool_of_cluster[int(clusters.assignment[label])]
        negatives = np.setdiff1d(pool, positives, assume_unique=False)
        if negatives.size == 0:
            return label, _prior_only(positives.size, ds.num_features)
        rows = np.concatenate([positives, negatives])
        y = np.concatenate([np.ones(positives.size), np.zeros(negatives.size)])
        w, b, _ = fit_logistic(X[rows], y, regularization, max_epochs, tol)
        return label, LabelClassifier(weights=w, bias=b)

    labels = sorted(positives_of)
    with ThreadPoolExecutor(max_workers=worker_count(limit=n_jobs)) as pool:
        trained = dict(pool.map(train_one, labels))
    return LabelClassifiers(
        classifiers=trained,
        num_features=ds.num_features,
        regularization=regularization,
    )


def score_labels(
    x,
    cluster_scores: np.ndarray,
    classifiers: LabelClassifiers,
    clusters: LabelClusters,
    top_b: int = 5,
    mixture: bool = True,
    stats: dict | None = None,
) -> list[tuple[int, float]]:
    """Rank the labels of the ``top_b`` best clusters.

    With ``mixture`` each label scores cluster_probability * classifier
    probability (the disjoint-cluster collapse of the full mixture sum); the
    gate-only ablation scores classifier probability alone.  Labels without a
    classifier score 0; labels outside the chosen clusters are not scored.
    Ties break toward the lower label id.
    """
    check_positive_int("top_b", top_b)
    order = np.argsort(-np.asarray(cluster_scores), kind="stable")[:top_b]
    members = clusters.members()
    scored: list[tuple[int, float]] = []
    evaluations = 0
    for k in order:
        g_k = float(cluster_scores[k])
        for label in members[int(k)]:
            label = int(label)
            if label in classifiers:
                p = classifiers.classifiers[label].probability(x)
                evaluations += 1
                score = g_k * p if mixture else p
            else:
                score = 0.0
            scored.append((label, score))
    if stats is not None:
        stats["classifier_evaluations"] = stats.get("classifier_evaluations", 0) + evaluations
    scored.sort(key=lambda ls: (-ls[1], ls[0]))
    return scored


def predict_topk(
    model: MatcherModel,
    classifiers: LabelClassifiers,
    clusters: LabelClusters,
    x,
    graph: KeyGraph,
    features: np.ndarray,
    k: int,
    top_b: int = 5,
    mixture: bool = True,
    stats: dict | None = None,
) -> list[int]:
    """Cluster matching followed by in-cluster ranking; top-k label ids.

    The cluster stage computes exactly one score per cluster (K dot products
    per branch); the ranking stage evaluates at most the classifiers of the
    ``top_b`` chosen clusters.
    """
    if k <= 0:
        raise XmtcError("k must be positive")
    cluster_scores = model.predict_scores(model.prepare(graph, features))
    if stats is not None:
        stats["cluster_scores_computed"] = cluster_scores.size
    ranked = score_labels(
        x, cluster_scores, classifiers, clusters, top_b=top_b,
        mixture=mixture, stats=stats,
    )
    return [label for label, _ in ranked[:k]]


class LabelRanker(BaseEstimator):
    """Estimator facade over per-label classifier training and ranking."""

    def __init__(
        self,
        regularization: float = 1.0,
        top_b: int = 5,
        max_epochs: int = 500,
        grad_tol: float = 1e-5,
        mixture: bool = True,
        n_jobs: int | None = None,
    ):
        self.regularization = regularization
        self.top_b = top_b
        self.max_epochs = max_epochs
        self.grad_tol = grad_tol
        self.mixture = mixture
        self.n_jobs = n_jobs
        self.classifiers_: LabelClassifiers | None = None
        self.clusters_: LabelClusters | None = None

    def fit(self, ds: Dataset, clusters: LabelClusters) -> "LabelRanker":
        self.classifiers_ = train_label_classifiers(
            ds,
            clusters,
            regularization=self.regularization,
            max_epochs=self.max_epochs,
            tol=self.grad_tol,
            n_jobs=self.n_jobs,
        )
        self.clusters_ = clusters
        return self

    def rank(self, x, cluster_scores: np.ndarray, stats: dict | None = None):
        check_is_fitted(self, ("classifiers_", "clusters_"))
        return score_labels(
            x,
            cluster_scores,
            self.classifiers_,
            self.clusters_,
            top_b=self.top_b,
            mixture=self.mixture,
            stats=stats,
        )


def save_classifiers(classifiers: LabelClassifiers, path) -> None:
    """One record per label: "label<TAB>bias<TAB>idx:val idx:val ..."."""
    with open(path, "w", encoding="utf-8") as fh:
        for label in sorted(classifiers.classifiers):
            clf = classifiers.classifiers[label]
            nz = np.flatnonzero(clf.weights)
            pairs = " ".join(f"{j}:{float(clf.weights[j])!r}" for j in nz)
            fh.write(f"{label}\t{float(clf.bias)!r}\t{pairs}\n")


def load_classifiers(
    path, num_features: int, regularization: float = 1.0
) -> LabelClassifiers:
    out: dict[int, LabelClassifier] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise XmtcError(f"classifier store malformed at line {lineno}")
            label = int(parts[0])
            w = np.zeros(num_features)
            if parts[2]:
                for pair in parts[2].split(" "):
                    j, _, v = pair.partition(":")
                    w[int(j)] = float(v)
            out[label] = LabelClassifier(weights=w, bias=float(parts[1]))
    return LabelClassifiers(
        classifiers=out, num_features=num_features, regularization=regularization
    )
