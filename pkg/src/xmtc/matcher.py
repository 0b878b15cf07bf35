"""Bilateral-branch graph isomorphism network for cluster matching.

Two structurally identical GIN branches encode keyword graphs: the
conventional branch is fed by a uniform sampler, the re-balance branch by an
inverse-frequency sampler.  Their per-branch linear classifiers are mixed by a
factor alpha that decays parabolically over training and is fixed at 0.5 for
inference.  Everything is plain float64 numpy with hand-written reverse-mode
gradients, so gradient checks against finite differences are exact up to
truncation error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .base import BaseEstimator, check_is_fitted
from .corpus import Dataset
from .errors import XmtcError
from .keygraph import KeyGraph
from .labelgraph import LabelClusters
from .sampling import ReversedSampler, paired_batches, uniform_epoch
from .validation import check_in_range, check_positive_int

PROB_CLIP = 1e-7
INFERENCE_ALPHA = 0.5
CHECKPOINT_MAGIC = b"XMTCMATCH\x00"
CHECKPOINT_VERSION = 1


def _derive_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence((int(seed),) + tags).generate_state(1)[0])


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class MLP:
    """Two affine maps with a ReLU between; hidden width equals the output."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def forward(self, X: np.ndarray) -> np.ndarray:
        return relu(X @ self.W1 + self.b1) @ self.W2 + self.b2


def gin_layer(
    features: np.ndarray, adjacency: np.ndarray, eps: float, mlp: MLP
) -> np.ndarray:
    """One GIN propagation step: MLP((1 + eps) * h_v + sum of neighbor h_u).

    ``adjacency`` is the dense (symmetric) neighbor matrix; a zero row leaves
    the vertex with only its own (1 + eps)-scaled features.
    """
    features = np.asarray(features, dtype=np.float64)
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if adjacency.shape != (features.shape[0], features.shape[0]):
        raise XmtcError(
            f"adjacency shape {adjacency.shape} does not match "
            f"{features.shape[0]} feature rows"
        )
    return mlp.forward((1.0 + eps) * features + adjacency @ features)


def readout(layer_features: list[np.ndarray]) -> np.ndarray:
    """Concatenate per-layer vertex sums, layer 0 (input features) first."""
    if not layer_features:
        raise XmtcError("readout needs at least the input feature layer")
    return np.concatenate([H.sum(axis=0) for H in layer_features])


def alpha_schedule(t: int, t_max: int) -> float:
    """Parabolic decay 1 - (t / t_max)^2 over epochs 0..t_max."""
    check_positive_int("t_max", t_max)
    if not 0 <= t <= t_max:
        raise XmtcError(f"epoch t={t} outside [0, {t_max}]")
    return 1.0 - (t / t_max) ** 2


def mix_logits(
    h_c: np.ndarray,
    h_r: np.ndarray,
    W_c: np.ndarray,
    W_r: np.ndarray,
    alpha: float,
) -> np.ndarray:
    """sigmoid(alpha * W_c h_c + (1 - alpha) * W_r h_r), elementwise in (0, 1)."""
    return sigmoid(alpha * (W_c @ h_c) + (1.0 - alpha) * (W_r @ h_r))


def binary_cross_entropy(g_hat: np.ndarray, g: np.ndarray) -> float:
    """Mean binary cross-entropy with probabilities clamped away from {0, 1}."""
    p = np.clip(g_hat, PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-(g * np.log(p) + (1.0 - g) * np.log(1.0 - p)).mean())


def matching_loss(
    g_hat: np.ndarray, g_c: np.ndarray, g_r: np.ndarray, alpha: float
) -> float:
    """alpha-weighted sum of the cross-entropies against both branch targets."""
    return alpha * binary_cross_entropy(g_hat, g_c) + (1.0 - alpha) * binary_cross_entropy(
        g_hat, g_r
    )


def cluster_targets(ds: Dataset, clusters: LabelClusters) -> np.ndarray:
    """Binary (n, K) matrix: instance i is matched to cluster k iff it has a
    positive label inside cluster k."""
    if clusters.num_labels != ds.num_labels:
        raise XmtcError("cluster assignment does not cover the label universe")
    G = np.zeros((ds.n, clusters.n_clusters), dtype=np.float64)
    for i, labels in enumerate(ds.labels):
        for l in labels:
            G[i, clusters.assignment[l]] = 1.0
    return G


@dataclass
class PreparedGraph:
    """Canonically ordered vertex features and dense adjacency of a KeyGraph.

    Vertices are reordered by keyword string (empty vertex last) before any
    arithmetic, which makes every graph-level output independent of the
    incoming vertex numbering, bit for bit.
    """

    features: np.ndarray
    adjacency: np.ndarray


def prepare_graph(
    graph: KeyGraph, features: np.ndarray, weighted: bool = False
) -> PreparedGraph:
    order = graph.canonical_order()
    position = np.empty_like(order)
    position[order] = np.arange(order.size)
    n = graph.n_vertices
    adj = np.zeros((n, n), dtype=np.float64)
    for (i, j), w in graph.edges.items():
        a, b = position[i], position[j]
        value = float(w) if weighted else 1.0
        adj[a, b] = value
        adj[b, a] = value
    return PreparedGraph(
        features=np.asarray(features, dtype=np.float64)[order].copy(), adjacency=adj
    )


class MatcherModel:
    """Parameters and forward/backward passes of the bilateral matcher.

    All parameters live in ``params`` (name -> float64 array); epsilon values
    are 0-d arrays so the optimizer and finite differences treat every
    parameter uniformly.
    """

    def __init__(
        self,
        d_in: int,
        hidden_dim: int,
        n_layers: int,
        n_clusters: int,
        epsilon: float = 0.0,
        learn_epsilon: bool = False,
        weighted_neighbors: bool = False,
        bilateral: bool = True,
        seed: int = 0,
        metadata: dict | None = None,
    ):
        check_positive_int("d_in", d_in)
        check_positive_int("n_clusters", n_clusters)
        if n_layers < 0:
            raise XmtcError("n_layers must be >= 0")
        if n_layers > 0:
            check_positive_int("hidden_dim", hidden_dim)
        self.d_in = int(d_in)
        self.hidden_dim = int(hidden_dim)
        self.n_layers = int(n_layers)
        self.n_clusters = int(n_clusters)
        self.learn_epsilon = bool(learn_epsilon)
        self.weighted_neighbors = bool(weighted_neighbors)
        self.bilateral = bool(bilateral)
        self.metadata = dict(metadata or {})
        self.metadata.setdefault("validation_alpha", INFERENCE_ALPHA)
        self.inference_hook = None

        rng = np.random.default_rng(_derive_seed(seed, 0))
        self.params: dict[str, np.ndarray] = {}
        for branch in self.branches():
            for l in range(self.n_layers):
                fan_in = self.d_in if l == 0 else self.hidden_dim
                width = self.hidden_dim
                self.params[f"{branch}.l{l}.W1"] = rng.normal(
                    0.0, np.sqrt(2.0 / fan_in), size=(fan_in, width)
                )
                self.params[f"{branch}.l{l}.b1"] = np.zeros(width)
                self.params[f"{branch}.l{l}.W2"] = rng.normal(
                    0.0, np.sqrt(2.0 / width), size=(width, width)
                )
                self.params[f"{branch}.l{l}.b2"] = np.zeros(width)
                self.params[f"{branch}.l{l}.eps"] = np.array(float(epsilon))
        # zero-initialized classifiers: a fresh model scores every cluster 0.5
        self.params["W_c"] = np.zeros((self.n_clusters, self.readout_dim))
        if self.bilateral:
            self.params["W_r"] = np.zeros((self.n_clusters, self.readout_dim))

    def branches(self) -> tuple[str, ...]:
        return ("conv", "rebal") if self.bilateral else ("conv",)

    @property
    def readout_dim(self) -> int:
        return self.d_in + self.n_layers * self.hidden_dim

    def trainable_names(self) -> list[str]:
        names = []
        for name in self.params:
            if name.endswith(".eps") and not self.learn_epsilon:
                continue
            names.append(name)
        return names

    def prepare(self, graph: KeyGraph, features: np.ndarray) -> PreparedGraph:
        return prepare_graph(graph, features, weighted=self.weighted_neighbors)

    def _forward_branch(self, branch: str, pg: PreparedGraph):
        H = pg.features
        layer_outputs = [H]
        caches = []
        for l in range(self.n_layers):
            p = self.params
            eps = float(p[f"{branch}.l{l}.eps"])
            M = (1.0 + eps) * H + pg.adjacency @ H
            X1 = M @ p[f"{branch}.l{l}.W1"] + p[f"{branch}.l{l}.b1"]
            R = relu(X1)
            H_next = R @ p[f"{branch}.l{l}.W2"] + p[f"{branch}.l{l}.b2"]
            caches.append((H, M, X1, R))
            H = H_next
            layer_outputs.append(H)
        return readout(layer_outputs), caches

    def _backward_branch(
        self,
        branch: str,
        pg: PreparedGraph,
        caches,
        grad_hG: np.ndarray,
        grads: dict[str, np.ndarray],
    ) -> None:
        n_v = pg.features.shape[0]
        dims = [self.d_in] + [self.hidden_dim] * self.n_layers
        segments = np.split(grad_hG, np.cumsum(dims)[:-1])
        grad_H = np.tile(segments[-1], (n_v, 1))
        for l in reversed(range(self.n_layers)):
            p = self.params
            H_prev, M, X1, R = caches[l]
            eps = float(p[f"{branch}.l{l}.eps"])
            grads[f"{branch}.l{l}.W2"] += R.T @ grad_H
            grads[f"{branch}.l{l}.b2"] += grad_H.sum(axis=0)
            grad_R = grad_H @ p[f"{branch}.l{l}.W2"].T
            grad_X1 = grad_R * (X1 > 0)
            grads[f"{branch}.l{l}.W1"] += M.T @ grad_X1
            grads[f"{branch}.l{l}.b1"] += grad_X1.sum(axis=0)
            grad_M = grad_X1 @ p[f"{branch}.l{l}.W1"].T
            if self.learn_epsilon:
                grads[f"{branch}.l{l}.eps"] += (H_prev * grad_M).sum()
            grad_H = (
                (1.0 + eps) * grad_M
                + pg.adjacency.T @ grad_M
                + np.tile(segments[l], (n_v, 1))
            )

    def pair_loss_and_grads(
        self,
        pg_c: PreparedGraph,
        g_c: np.ndarray,
        pg_r: PreparedGraph | None,
        g_r: np.ndarray | None,
        alpha: float,
        grads: dict[str, np.ndarray] | None = None,
        scale: float = 1.0,
    ) -> float:
        """Loss of one training pair; accumulates scaled gradients if given."""
        h_c, cache_c = self._forward_branch("conv", pg_c)
        W_c = self.params["W_c"]
        if self.bilateral:
            h_r, cache_r = self._forward_branch("rebal", pg_r)
            W_r = self.params["W_r"]
            z = alpha * (W_c @ h_c) + (1.0 - alpha) * (W_r @ h_r)
        else:
            z = W_c @ h_c
        p_raw = sigmoid(z)
        p = np.clip(p_raw, PROB_CLIP, 1.0 - PROB_CLIP)
        if self.bilateral:
            loss = alpha * binary_cross_entropy(p, g_c) + (1.0 - alpha) * binary_cross_entropy(p, g_r)
        else:
            loss = binary_cross_entropy(p, g_c)

        if grads is not None:
            K = z.size
            dE_dp = -g_c / p + (1.0 - g_c) / (1.0 - p)
            if self.bilateral:
                dE_dp = alpha * dE_dp + (1.0 - alpha) * (
                    -g_r / p + (1.0 - g_r) / (1.0 - p)
                )
            inside = (p_raw >= PROB_CLIP) & (p_raw <= 1.0 - PROB_CLIP)
            dz = (dE_dp / K) * inside * p_raw * (1.0 - p_raw) * scale
            if self.bilateral:
                grads["W_c"] += alpha * np.outer(dz, h_c)
                grads["W_r"] += (1.0 - alpha) * np.outer(dz, h_r)
                grad_h_c = alpha * (W_c.T @ dz)
                grad_h_r = (1.0 - alpha) * (W_r.T @ dz)
                self._backward_branch("conv", pg_c, cache_c, grad_h_c, grads)
                self._backward_branch("rebal", pg_r, cache_r, grad_h_r, grads)
            else:
                grads["W_c"] += np.outer(dz, h_c)
                self._backward_branch("conv", pg_c, cache_c, W_c.T @ dz, grads)
        return loss

    def batch_loss_and_grads(self, pairs, alpha: float):
        """Mean loss and gradients over [(pg_c, g_c, pg_r, g_r), ...]."""
        grads = {name: np.zeros_like(p) for name, p in self.params.items()}
        scale = 1.0 / len(pairs)
        total = 0.0
        for pg_c, g_c, pg_r, g_r in pairs:
            total += self.pair_loss_and_grads(pg_c, g_c, pg_r, g_r, alpha, grads, scale)
        return total * scale, grads

    def batch_loss(self, pairs, alpha: float) -> float:
        total = 0.0
        for pg_c, g_c, pg_r, g_r in pairs:
            total += self.pair_loss_and_grads(pg_c, g_c, pg_r, g_r, alpha)
        return total / len(pairs)

    def predict_scores(self, pg: PreparedGraph, branch: str = "both") -> np.ndarray:
        """Inference-time cluster probabilities.

        With ``branch="both"`` (the default) both branches run on the same
        graph and are mixed with alpha = 0.5; ``branch="conventional"``
        disables the re-balance branch, the ablation baseline.
        """
        if branch not in ("both", "conventional"):
            raise XmtcError(f"unknown branch mode {branch!r}")
        h, _ = self._forward_branch("conv", pg)
        if self.bilateral and branch == "both":
            h_r, _ = self._forward_branch("rebal", pg)
            alpha = INFERENCE_ALPHA
            scores = mix_logits(h, h_r, self.params["W_c"], self.params["W_r"], alpha)
        else:
            alpha = 1.0
            scores = sigmoid(self.params["W_c"] @ h)
        if self.inference_hook is not None:
            self.inference_hook(alpha)
        return scores

    def copy_params(self) -> dict[str, np.ndarray]:
        return {name: p.copy() for name, p in self.params.items()}

    def load_params(self, params: dict[str, np.ndarray]) -> None:
        for name, value in params.items():
            self.params[name][...] = value


def ranked_clusters(scores: np.ndarray) -> list[tuple[int, float]]:
    """Descending by score; ties resolve to the lower cluster id."""
    order = np.argsort(-scores, kind="stable")
    return [(int(k), float(scores[k])) for k in order]


def predict_clusters(
    model: MatcherModel, graph: KeyGraph, features: np.ndarray
) -> list[tuple[int, float]]:
    """Ranked (cluster id, probability) list for one document graph."""
    return ranked_clusters(model.predict_scores(model.prepare(graph, features)))


@dataclass
class EpochRecord:
    epoch: int
    alpha: float
    train_loss: float
    val_loss: float


class ClusterMatcher(BaseEstimator):
    """Trains the bilateral matcher on (KeyGraph, features) inputs.

    ``fit`` receives the per-instance graphs, the training dataset (for label
    counts feeding the reversed sampler), and the label clusters.  Training
    runs epochs t = 0..max_epochs so the mixing factor traverses its full
    schedule from 1 to 0; the best parameters by validation loss are kept,
    stopping early when validation has not improved for ``patience`` epochs.
    """

    def __init__(
        self,
        n_layers: int = 2,
        hidden_dim: int = 64,
        epsilon: float = 0.0,
        learn_epsilon: bool = False,
        weighted_neighbors: bool = False,
        learning_rate: float = 0.01,
        momentum: float = 0.9,
        warmup: float = 0.1,
        max_epochs: int = 30,
        batch_size: int = 32,
        patience: int = 10,
        val_fraction: float = 0.1,
        bilateral: bool = True,
        seed: int = 0,
    ):
        self.n_layers = n_layers
        self.hidden_dim = hidden_dim
        self.epsilon = epsilon
        self.learn_epsilon = learn_epsilon
        self.weighted_neighbors = weighted_neighbors
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.warmup = warmup
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.patience = patience
        self.val_fraction = val_fraction
        self.bilateral = bilateral
        self.seed = seed
        self.model_: MatcherModel | None = None
        self.history_: list[EpochRecord] | None = None

    def _validate(self):
        check_positive_int("max_epochs", self.max_epochs)
        check_positive_int("batch_size", self.batch_size)
        check_positive_int("patience", self.patience)
        check_in_range("learning_rate", self.learning_rate, 0.0, None, False)
        check_in_range("momentum", self.momentum, 0.0, 1.0, True, False)
        check_in_range("warmup", self.warmup, 0.0, 1.0)
        check_in_range("val_fraction", self.val_fraction, 0.0, 1.0, False, False)

    def fit(
        self,
        graphs: list[tuple[KeyGraph, np.ndarray]],
        ds: Dataset,
        clusters: LabelClusters,
    ) -> "ClusterMatcher":
        self._validate()
        if len(graphs) != ds.n:
            raise XmtcError("one graph per training instance is required")
        if ds.n < 2:
            raise XmtcError("training requires at least two instances")

        targets = cluster_targets(ds, clusters)
        d_in = graphs[0][1].shape[1]
        model = MatcherModel(
            d_in=d_in,
            hidden_dim=self.hidden_dim,
            n_layers=self.n_layers,
            n_clusters=clusters.n_clusters,
            epsilon=self.epsilon,
            learn_epsilon=self.learn_epsilon,
            weighted_neighbors=self.weighted_neighbors,
            bilateral=self.bilateral,
            seed=self.seed,
        )
        prepared = [model.prepare(g, f) for g, f in graphs]

        # held-out split for model selection
        n_val = max(1, int(round(ds.n * self.val_fraction)))
        if n_val >= ds.n:
            n_val = ds.n - 1
        order = np.random.default_rng(_derive_seed(self.seed, 1)).permutation(ds.n)
        val_idx = np.sort(order[:n_val])
        train_idx = np.sort(order[n_val:])
        train_ds = ds.subset(train_idx)

        sampler = (
            ReversedSampler(train_ds, _derive_seed(self.seed, 2))
            if self.bilateral
            else None
        )

        # Validation mirrors the alpha = 0.5 objective: half the weight on the
        # uniform distribution, half on the reversed (tail-weighted) one, so
        # model selection tracks both branches' tasks.  A fixed reversed draw
        # keeps the curve comparable across epochs.
        reversed_val_idx = None
        if self.bilateral:
            val_subset = ds.subset(val_idx)
            if any(len(ls) for ls in val_subset.labels):
                val_sampler = ReversedSampler(val_subset, _derive_seed(self.seed, 4))
                reversed_val_idx = val_idx[val_sampler.draw_many(val_idx.size)]

        velocity = {name: np.zeros_like(p) for name, p in model.params.items()}
        steps_per_epoch = int(np.ceil(train_idx.size / self.batch_size))
        total_steps = (self.max_epochs + 1) * steps_per_epoch
        warmup_steps = max(1, int(round(self.warmup * total_steps)))

        best_val = np.inf
        best_params = model.copy_params()
        since_best = 0
        history: list[EpochRecord] = []
        step = 0
        targets_train = targets[train_idx]
        for t in range(self.max_epochs + 1):
            alpha = alpha_schedule(t, self.max_epochs) if self.bilateral else 1.0
            stream = uniform_epoch(train_ds, _derive_seed(self.seed, 3, t))
            epoch_loss = 0.0
            n_batches = 0
            if self.bilateral:
                batches = paired_batches(
                    stream, sampler, self.batch_size, targets_train
                )
            else:
                batches = (
                    ((chunk, targets_train[chunk]), (None, None))
                    for chunk in np.array_split(stream, steps_per_epoch)
                )
            for (rel_c, g_c), (rel_r, g_r) in batches:
                pairs = []
                for row in range(len(rel_c)):
                    pg_c = prepared[train_idx[rel_c[row]]]
                    if self.bilateral:
                        pg_r = prepared[train_idx[rel_r[row]]]
                        pairs.append((pg_c, g_c[row], pg_r, g_r[row]))
                    else:
                        pairs.append((pg_c, g_c[row], None, None))
                loss, grads = model.batch_loss_and_grads(pairs, alpha)
                step += 1
                lr = self.learning_rate * min(1.0, step / warmup_steps)
                for name in model.trainable_names():
                    velocity[name] = (
                        self.momentum * velocity[name] - lr * grads[name]
                    )
                    model.params[name] += velocity[name]
                epoch_loss += loss
                n_batches += 1

            val_loss = self._validation_loss(
                model, prepared, targets, val_idx, reversed_val_idx
            )
            history.append(
                EpochRecord(t, alpha, epoch_loss / max(1, n_batches), val_loss)
            )
            if val_loss < best_val:
                best_val = val_loss
                best_params = model.copy_params()
                since_best = 0
            else:
                since_best += 1
                if since_best >= self.patience:
                    break

        model.load_params(best_params)
        model.metadata["best_val_loss"] = best_val
        model.metadata["validation_sampling"] = (
            "uniform+reversed" if self.bilateral else "uniform"
        )
        self.model_ = model
        self.history_ = history
        return self

    @staticmethod
    def _validation_loss(model, prepared, targets, val_idx, reversed_val_idx) -> float:
        # predictions use the inference setting: both branches, same graph
        def mean_bce(indices):
            return sum(
                binary_cross_entropy(model.predict_scores(prepared[i]), targets[i])
                for i in indices
            ) / len(indices)

        uniform_part = mean_bce(val_idx)
        if reversed_val_idx is None:
            return uniform_part
        return 0.5 * uniform_part + 0.5 * mean_bce(reversed_val_idx)

    def predict_proba(self, graphs: list[tuple[KeyGraph, np.ndarray]]) -> np.ndarray:
        check_is_fitted(self, ("model_",))
        return np.vstack(
            [
                self.model_.predict_scores(self.model_.prepare(g, f))
                for g, f in graphs
            ]
        )

    def predict(self, graphs: list[tuple[KeyGraph, np.ndarray]]) -> np.ndarray:
        """Top-ranked cluster id per graph."""
        scores = self.predict_proba(graphs)
        return scores.argmax(axis=1)


def save_matcher(model: MatcherModel, path) -> None:
    """Versioned binary checkpoint with an exact float64 round-trip."""
    names = sorted(model.params)
    header = {
        "version": CHECKPOINT_VERSION,
        "d_in": model.d_in,
        "hidden_dim": model.hidden_dim,
        "n_layers": model.n_layers,
        "n_clusters": model.n_clusters,
        "learn_epsilon": model.learn_epsilon,
        "weighted_neighbors": model.weighted_neighbors,
        "bilateral": model.bilateral,
        "metadata": model.metadata,
        "arrays": [[name, list(model.params[name].shape)] for name in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())


def load_matcher(path) -> MatcherModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise XmtcError("not a matcher checkpoint")
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise XmtcError(f"unsupported checkpoint version {header['version']}")
        model = MatcherModel(
            d_in=header["d_in"],
            hidden_dim=header["hidden_dim"],
            n_layers=header["n_layers"],
            n_clusters=header["n_clusters"],
            learn_epsilon=header["learn_epsilon"],
            weighted_neighbors=header["weighted_neighbors"],
            bilateral=header["bilateral"],
            metadata=header["metadata"],
        )
        for name, shape in header["arrays"]:
            size = int(np.prod(shape)) if shape else 1
            raw = fh.read(size * 8)
            model.params[name] = np.frombuffer(raw, dtype="<f8").astype(
                np.float64
            ).reshape(shape)
    return model
