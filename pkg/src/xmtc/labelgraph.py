"""Label correlation graph, filtered label embeddings, and label clustering.

Pipeline: count label occurrences and co-occurrences, turn them into a
conditional-probability matrix, threshold and re-weight it into a sparse
adjacency, embed labels as normalized sums of their instances' embeddings,
smooth the embeddings with a k-order low-pass graph filter (optionally with
neighbor sampling), and partition labels with mini-batch k-means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .base import BaseEstimator, check_is_fitted
from .corpus import Dataset, TextCorpus, label_frequencies
from .embedding import EmbeddingProvider, HashingEmbedder
from .errors import XmtcError
from .validation import (
    check_dataset,
    check_in_range,
    check_nonempty_dataset,
    check_positive_int,
)


@dataclass
class LabelGraph:
    """Occurrence counts and the derived correlation/adjacency matrices."""

    N: np.ndarray
    M: sp.csr_matrix
    P: sp.csr_matrix
    B: sp.csr_matrix
    A: sp.csr_matrix
    rho: float
    tau: float


@dataclass
class LabelEmbeddings:
    Z: np.ndarray
    Z_filtered: np.ndarray
    order: int


@dataclass
class LabelClusters:
    """Hard partition of label ids into ``n_clusters`` clusters."""

    assignment: np.ndarray
    n_clusters: int
    centroids: np.ndarray | None = None

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        if self.assignment.size and not (
            0 <= self.assignment.min() and self.assignment.max() < self.n_clusters
        ):
            raise XmtcError("cluster ids out of range")

    @property
    def num_labels(self) -> int:
        return self.assignment.size

    def members(self) -> list[np.ndarray]:
        """Label ids per cluster, index-sorted."""
        order = np.argsort(self.assignment, kind="stable")
        bounds = np.searchsorted(self.assignment[order], np.arange(self.n_clusters + 1))
        return [order[bounds[k] : bounds[k + 1]] for k in range(self.n_clusters)]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_clusters)


def cooccurrence(ds: Dataset) -> tuple[np.ndarray, sp.csr_matrix]:
    """Label occurrence vector and symmetric pairwise co-occurrence counts."""
    check_dataset(ds)
    N = label_frequencies(ds)
    L = ds.num_labels
    counts: dict[tuple[int, int], int] = {}
    for labels in ds.labels:
        ordered = sorted(labels)
        for a_pos, i in enumerate(ordered):
            for j in ordered[a_pos + 1 :]:
                counts[(i, j)] = counts.get((i, j), 0) + 1
    if counts:
        ij = np.array(list(counts.keys()), dtype=np.int64)
        vals = np.array(list(counts.values()), dtype=np.float64)
        rows = np.concatenate([ij[:, 0], ij[:, 1]])
        cols = np.concatenate([ij[:, 1], ij[:, 0]])
        M = sp.csr_matrix((np.tile(vals, 2), (rows, cols)), shape=(L, L))
    else:
        M = sp.csr_matrix((L, L), dtype=np.float64)
    M.sort_indices()
    return N, M


def conditional_prob(N: np.ndarray, M: sp.csr_matrix) -> sp.csr_matrix:
    """P[i, j] = M[i, j] / N[i]; rows with N[i] = 0 stay all-zero."""
    P = M.tocsr(copy=True)
    row_of = np.repeat(np.arange(P.shape[0]), np.diff(P.indptr))
    denom = np.asarray(N, dtype=np.float64)[row_of]
    positive = denom > 0
    P.data = np.where(positive, P.data / np.where(positive, denom, 1.0), 0.0)
    P.eliminate_zeros()
    return P


def binarize(P: sp.csr_matrix, rho: float) -> sp.csr_matrix:
    """B[i, j] = 1 iff P[i, j] >= rho for i != j."""
    check_in_range("rho", rho, 0.0, 1.0, low_inclusive=False)
    coo = P.tocoo()
    keep = (coo.data >= rho) & (coo.row != coo.col)
    B = sp.csr_matrix(
        (np.ones(int(keep.sum())), (coo.row[keep], coo.col[keep])), shape=P.shape
    )
    B.sort_indices()
    return B


def reweight(B: sp.csr_matrix, tau: float) -> sp.csr_matrix:
    """Re-weighted adjacency: diagonal 1 - tau; each row's binary neighbors
    share a total off-diagonal mass of tau equally."""
    check_in_range("tau", tau, 0.0, 1.0, False, False)
    L = B.shape[0]
    B = B.tocsr()
    deg = np.diff(B.indptr)
    row_of = np.repeat(np.arange(L), deg)
    off = sp.csr_matrix(
        (tau / deg[row_of].astype(np.float64), B.indices.copy(), B.indptr.copy()),
        shape=B.shape,
    )
    A = (off + sp.diags(np.full(L, 1.0 - tau), format="csr")).tocsr()
    A.sort_indices()
    return A


def label_embeddings(
    ds: Dataset, provider: EmbeddingProvider, corpus: TextCorpus | None = None
) -> np.ndarray:
    """Normalized per-label sums of the embeddings of the label's instances.

    Without a corpus, instances are embedded from their sparse feature
    vectors; with one, document ``i`` of the corpus is embedded for instance
    ``i`` (supports token-based and precomputed providers).
    """
    if corpus is not None and len(corpus) != ds.n:
        raise XmtcError("corpus and dataset must align one document per instance")
    V = np.zeros((ds.num_labels, provider.dimension), dtype=np.float64)
    X = ds.features
    for i in range(ds.n):
        if not ds.labels[i]:
            continue
        if corpus is None:
            start, end = X.indptr[i], X.indptr[i + 1]
            phi = provider.embed_features(X.indices[start:end], X.data[start:end])
        else:
            phi = provider.embed_document(corpus[i])
        for l in ds.labels[i]:
            V[l] += phi
    norms = np.linalg.norm(V, axis=1)
    nonzero = norms > 0
    V[nonzero] /= norms[nonzero, None]
    return V


def normalized_laplacian(A: sp.spmatrix) -> sp.csr_matrix:
    """Symmetrically normalized Laplacian I - D^{-1/2} S D^{-1/2}.

    The adjacency from :func:`reweight` is directional (thresholded
    conditional probabilities are asymmetric), so it is symmetrized as
    S = (A + A^T) / 2 first; degrees are S's row sums.  The result is
    symmetric with eigenvalues in [0, 2].
    """
    S = (sp.csr_matrix(A, dtype=np.float64) + sp.csr_matrix(A, dtype=np.float64).T) * 0.5
    deg = np.asarray(S.sum(axis=1)).ravel()
    if np.any(deg <= 0):
        raise XmtcError("graph has a node with non-positive degree")
    dinv = 1.0 / np.sqrt(deg)
    S_norm = S.multiply(dinv[:, None]).multiply(dinv[None, :]).tocsr()
    L_s = (sp.eye(A.shape[0], format="csr") - S_norm).tocsr()
    L_s.sort_indices()
    return L_s


def _filter_matrix(A: sp.spmatrix) -> sp.csr_matrix:
    """G = I - L_s / 2, the one-hop low-pass filter."""
    L_s = normalized_laplacian(A)
    G = (sp.eye(A.shape[0], format="csr") - 0.5 * L_s).tocsr()
    G.eliminate_zeros()
    G.sort_indices()
    return G


def _apply_filter_rows(
    G: sp.csr_matrix,
    X: np.ndarray,
    rng: np.random.Generator | None = None,
    sample_size: int | None = None,
    batch_size: int | None = None,
) -> np.ndarray:
    """One filtering hop, row by row.

    With ``sample_size`` set, each row keeps its diagonal term exactly and
    aggregates over at most ``sample_size`` off-diagonal neighbors sampled
    without replacement, rescaled by deg/|sample| so the hop is unbiased.
    Rows whose degree fits within the sample follow the identical code path
    as the exact filter, so the two agree bit-for-bit.
    """
    n = X.shape[0]
    out = np.empty_like(X)
    indptr, indices, data = G.indptr, G.indices, G.data
    step = batch_size or n
    for start in range(0, n, step):
        for i in range(start, min(start + step, n)):
            idx = indices[indptr[i] : indptr[i + 1]]
            val = data[indptr[i] : indptr[i + 1]]
            if sample_size is not None:
                off = idx != i
                n_off = int(off.sum())
                if n_off > sample_size:
                    off_pos = np.flatnonzero(off)
                    pick = rng.choice(n_off, size=sample_size, replace=False)
                    keep = np.sort(
                        np.concatenate((np.flatnonzero(~off), off_pos[pick]))
                    )
                    val = val[keep].copy()
                    idx = idx[keep]
                    val[idx != i] *= n_off / sample_size
            out[i] = val @ X[idx]
    return out


def lowpass_filter(A: sp.spmatrix, Z: np.ndarray, k: int) -> np.ndarray:
    """k-order low-pass filtering (I - L_s/2)^k Z by repeated sparse hops."""
    if k < 0:
        raise XmtcError("filter order must be >= 0")
    Z = np.asarray(Z, dtype=np.float64)
    if k == 0:
        return Z.copy()
    G = _filter_matrix(A)
    out = Z
    for _ in range(k):
        out = _apply_filter_rows(G, out)
    return out


def sampled_lowpass_filter(
    A: sp.spmatrix,
    Z: np.ndarray,
    k: int,
    batch_size: int,
    sample_size: int,
    seed: int,
) -> np.ndarray:
    """Neighbor-sampled variant of :func:`lowpass_filter`.

    Exact whenever ``sample_size`` covers every row's degree; otherwise each
    hop is unbiased in expectation.
    """
    check_positive_int("batch_size", batch_size)
    check_positive_int("sample_size", sample_size)
    if k < 0:
        raise XmtcError("filter order must be >= 0")
    Z = np.asarray(Z, dtype=np.float64)
    if k == 0:
        return Z.copy()
    G = _filter_matrix(A)
    rng = np.random.default_rng(seed)
    out = Z
    for _ in range(k):
        out = _apply_filter_rows(
            G, out, rng=rng, sample_size=sample_size, batch_size=batch_size
        )
    return out


def _kmeans_plusplus(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centroids = np.empty((K, X.shape[1]), dtype=np.float64)
    centroids[0] = X[int(rng.integers(n))]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, K):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centroids[c] = X[idx]
        d2 = np.minimum(d2, ((X - centroids[c]) ** 2).sum(axis=1))
    return centroids


def _nearest(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin over squared distances; ties resolve to the lowest cluster id
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def minibatch_kmeans(
    X: np.ndarray, K: int, batch_size: int, iters: int, seed: int
) -> LabelClusters:
    """Mini-batch k-means with k-means++ seeding and per-centroid 1/count steps.

    A final full pass assigns every point to its nearest centroid; empty
    clusters are repaired by stealing the farthest point from the largest
    cluster, so the result is always a hard partition with no empty cluster.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    check_positive_int("batch_size", batch_size)
    check_positive_int("iters", iters)
    if K > n:
        raise XmtcError(f"K={K} exceeds the number of points {n}")
    check_positive_int("K", K)
    rng = np.random.default_rng(seed)
    centroids = _kmeans_plusplus(X, K, rng)
    counts = np.zeros(K, dtype=np.int64)
    for _ in range(iters):
        batch = rng.choice(n, size=min(batch_size, n), replace=False)
        assigned = _nearest(X[batch], centroids)
        for point, c in zip(batch, assigned):
            counts[c] += 1
            eta = 1.0 / counts[c]
            centroids[c] = (1.0 - eta) * centroids[c] + eta * X[point]
    assignment = _nearest(X, centroids)

    sizes = np.bincount(assignment, minlength=K)
    while np.any(sizes == 0):
        empty = int(np.flatnonzero(sizes == 0)[0])
        donor = int(np.argmax(sizes))
        members = np.flatnonzero(assignment == donor)
        far = members[np.argmax(((X[members] - centroids[donor]) ** 2).sum(axis=1))]
        assignment[far] = empty
        centroids[empty] = X[far]
        sizes[donor] -= 1
        sizes[empty] += 1
    return LabelClusters(assignment=assignment, n_clusters=K, centroids=centroids)


def inertia(X: np.ndarray, clusters: LabelClusters) -> float:
    """Total squared distance of points to their assigned centroids."""
    diffs = X - clusters.centroids[clusters.assignment]
    return float((diffs**2).sum())


def cluster_instance_histogram(ds: Dataset, clusters: LabelClusters) -> np.ndarray:
    """Per cluster, the number of instances with at least one label in it."""
    if clusters.num_labels != ds.num_labels:
        raise XmtcError("cluster assignment does not cover the label universe")
    counts = np.zeros(clusters.n_clusters, dtype=np.int64)
    for labels in ds.labels:
        hit = {int(clusters.assignment[l]) for l in labels}
        for k in hit:
            counts[k] += 1
    return counts


def fraction_above(counts: np.ndarray, threshold: int) -> float:
    """Fraction of clusters with strictly more than ``threshold`` instances."""
    counts = np.asarray(counts)
    if counts.size == 0:
        return 0.0
    return float((counts > threshold).sum() / counts.size)


def default_n_clusters(num_labels: int) -> int:
    return max(2, num_labels // 60)


def save_clusters(clusters: LabelClusters, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for l, k in enumerate(clusters.assignment):
            fh.write(f"{l}\t{int(k)}\n")


def load_clusters(path) -> LabelClusters:
    assignment = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or int(parts[0]) != len(assignment):
                raise XmtcError(f"clusters file malformed at line {lineno}")
            assignment.append(int(parts[1]))
    if not assignment:
        raise XmtcError("clusters file is empty")
    return LabelClusters(
        assignment=np.array(assignment), n_clusters=int(max(assignment)) + 1
    )


def dump_adjacency(A: sp.spmatrix, path) -> None:
    """Sparse triplet dump, one "i j value" line per stored entry."""
    coo = sp.coo_matrix(A)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        for t in order:
            fh.write(f"{coo.row[t]} {coo.col[t]} {float(coo.data[t])!r}\n")


class LabelGraphClusterer(BaseEstimator):
    """Partitions labels into clusters via correlation-graph filtering + k-means.

    Parameters
    ----------
    embedder : EmbeddingProvider or None
        Instance embedding provider; defaults to signed hashing at
        ``dimension=256`` with this estimator's seed.
    rho, tau : float
        Edge threshold on conditional probabilities and self-loop weight.
    filter_order : int
        Number of low-pass filtering hops applied to label embeddings.
    n_clusters : int or None
        Cluster count; None selects max(2, L // 60).
    sample_size : int or None
        If set, use neighbor-sampled filtering with this per-row sample size.
    n_restarts : int
        Independent k-means runs; the lowest-inertia partition is kept.
    """

    def __init__(
        self,
        embedder: EmbeddingProvider | None = None,
        rho: float = 0.4,
        tau: float = 0.2,
        filter_order: int = 3,
        n_clusters: int | None = None,
        kmeans_batch_size: int = 256,
        kmeans_iters: int = 50,
        n_restarts: int = 5,
        sample_size: int | None = None,
        filter_batch_size: int = 512,
        seed: int = 0,
    ):
        self.embedder = embedder
        self.rho = rho
        self.tau = tau
        self.filter_order = filter_order
        self.n_clusters = n_clusters
        self.kmeans_batch_size = kmeans_batch_size
        self.kmeans_iters = kmeans_iters
        self.n_restarts = n_restarts
        self.sample_size = sample_size
        self.filter_batch_size = filter_batch_size
        self.seed = seed
        self.graph_: LabelGraph | None = None
        self.embeddings_: LabelEmbeddings | None = None
        self.clusters_: LabelClusters | None = None
        self.labels_: np.ndarray | None = None

    def fit(self, ds: Dataset, corpus: TextCorpus | None = None) -> "LabelGraphClusterer":
        check_nonempty_dataset(ds, "training split")
        check_in_range("rho", self.rho, 0.0, 1.0, low_inclusive=False)
        check_in_range("tau", self.tau, 0.0, 1.0, False, False)
        embedder = self.embedder or HashingEmbedder(dimension=256, seed=self.seed)

        N, M = cooccurrence(ds)
        P = conditional_prob(N, M)
        B = binarize(P, self.rho)
        A = reweight(B, self.tau)
        self.graph_ = LabelGraph(N=N, M=M, P=P, B=B, A=A, rho=self.rho, tau=self.tau)

        Z = label_embeddings(ds, embedder, corpus)
        if self.sample_size is None:
            Z_filtered = lowpass_filter(A, Z, self.filter_order)
        else:
            Z_filtered = sampled_lowpass_filter(
                A,
                Z,
                self.filter_order,
                self.filter_batch_size,
                self.sample_size,
                self.seed,
            )
        self.embeddings_ = LabelEmbeddings(Z=Z, Z_filtered=Z_filtered, order=self.filter_order)

        K = self.n_clusters if self.n_clusters is not None else default_n_clusters(ds.num_labels)
        check_positive_int("n_restarts", self.n_restarts)
        best = None
        best_inertia = np.inf
        for r in range(self.n_restarts):
            candidate = minibatch_kmeans(
                Z_filtered, K, self.kmeans_batch_size, self.kmeans_iters, self.seed + r
            )
            candidate_inertia = inertia(Z_filtered, candidate)
            if candidate_inertia < best_inertia:
                best, best_inertia = candidate, candidate_inertia
        self.clusters_ = best
        self.labels_ = self.clusters_.assignment
        return self

    def fit_predict(self, ds: Dataset, corpus: TextCorpus | None = None) -> np.ndarray:
        return self.fit(ds, corpus).labels_

    @property
    def clusters(self) -> LabelClusters:
        check_is_fitted(self, ("clusters_",))
        return self.clusters_
