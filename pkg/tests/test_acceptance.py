"""Acceptance suite: one check per criterion, printed as a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see every line.  The
end-to-end synthetic pipeline (criteria 11 and 12) is built once per session.
"""

import itertools
import math
import os
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from xmtc.corpus import (
    Dataset,
    dataset_stats,
    label_frequencies,
    parse_xmc,
    split_indices,
    subset_corpus,
)
from xmtc.embedding import HashingEmbedder
from xmtc.keygraph import encode_corpus
from xmtc.labelgraph import (
    LabelClusters,
    LabelGraphClusterer,
    binarize,
    cluster_instance_histogram,
    conditional_prob,
    cooccurrence,
    fraction_above,
    lowpass_filter,
    normalized_laplacian,
    reweight,
    sampled_lowpass_filter,
    _filter_matrix,
)
from xmtc.matcher import ClusterMatcher, MatcherModel, alpha_schedule
from xmtc.metrics import evaluate, precision_at_k, ndcg_at_k, propensities, psndcg_at_k, psp_at_k
from xmtc.ranking import LabelClassifier, LabelClassifiers, LabelRanker, predict_topk, score_labels
from xmtc.sampling import ReversedSampler
from xmtc.synth import SynthSpec, adjusted_rand_index, generate


@contextmanager
def criterion(number: str, description: str):
    try:
        yield
    except pytest.skip.Exception:
        print(f"[criterion {number}] SKIP  {description}")
        raise
    except BaseException:
        print(f"[criterion {number}] FAIL  {description}")
        raise
    print(f"[criterion {number}] PASS  {description}")


def random_tiny_dataset(rng, max_labels=12, d=4):
    L = int(rng.integers(2, max_labels + 1))
    n = int(rng.integers(2, 21))
    label_sets = []
    for _ in range(n):
        size = int(rng.integers(0, min(4, L) + 1))
        label_sets.append(set(rng.choice(L, size=size, replace=False).tolist()))
    return Dataset(sp.csr_matrix((n, d)), label_sets, L)


def random_reweighted_graph(rng, L, density=0.2, tau=None):
    tau = tau if tau is not None else float(rng.uniform(0.1, 0.9))
    mask = rng.random((L, L)) < density
    np.fill_diagonal(mask, False)
    B = sp.csr_matrix(mask.astype(np.float64))
    return reweight(B, tau), tau


# ---------------------------------------------------------------- criterion 1

BENCHMARK_DIR = Path(os.environ.get("XMTC_BENCHMARKS", "benchmarks"))
TABLE_VALUES = {
    # file stem -> (n_train, d, L, avg labels/instance, avg train instances/label)
    "eurlex": (15539, 500, 3993, 5.31, 25.73),
    "wiki10": (14146, 101938, 30938, 18.64, 8.52),
}


@pytest.mark.parametrize("stem", sorted(TABLE_VALUES))
def test_criterion_01_repository_statistics(stem):
    with criterion("01", f"repository statistics for {stem} within ±0.01"):
        train_path = BENCHMARK_DIR / f"{stem}_train.txt"
        test_path = BENCHMARK_DIR / f"{stem}_test.txt"
        if not train_path.exists() or not test_path.exists():
            pytest.skip(f"benchmark files not present under {BENCHMARK_DIR}/")
        started = time.time()
        stats = dataset_stats(parse_xmc(train_path), parse_xmc(test_path))
        n_train, d, L, expected_lbar, expected_lhat = TABLE_VALUES[stem]
        assert (stats.n_train, stats.num_features, stats.num_labels) == (n_train, d, L)
        assert abs(stats.avg_labels_per_instance - expected_lbar) <= 0.01
        assert abs(stats.avg_instances_per_label - expected_lhat) <= 0.01
        assert time.time() - started < 30.0


def test_criterion_01_synthetic_statistics():
    with criterion("01", "synthetic statistics match an independent recount"):
        ds, _, _ = generate(
            SynthSpec(num_labels=40, n_clusters_true=4, n_instances=400, seed=3)
        )
        train_idx, test_idx = split_indices(ds.n, 0.25, seed=0)
        train, test = ds.subset(train_idx), ds.subset(test_idx)
        stats = dataset_stats(train, test)
        total = sum(len(ls) for ls in train.labels)
        assert stats.avg_labels_per_instance == total / train.n
        assert stats.avg_instances_per_label == total / train.num_labels
        assert stats.n_train == train.n and stats.n_test == test.n


# ---------------------------------------------------------------- criterion 2

def test_criterion_02_correlation_pipeline_oracle():
    with criterion("02", "N/M/P/B/A pipeline equals brute-force enumeration on 200 datasets"):
        rng = np.random.default_rng(20)
        for _ in range(200):
            ds = random_tiny_dataset(rng)
            rho = float(rng.uniform(0.1, 0.9))
            tau = float(rng.uniform(0.1, 0.9))
            N, M = cooccurrence(ds)
            P = conditional_prob(N, M)
            B = binarize(P, rho)
            A = reweight(B, tau)

            L = ds.num_labels
            N_oracle = [sum(1 for ls in ds.labels if l in ls) for l in range(L)]
            M_oracle = [
                [
                    0 if i == j else sum(1 for ls in ds.labels if i in ls and j in ls)
                    for j in range(L)
                ]
                for i in range(L)
            ]
            P_oracle = [
                [M_oracle[i][j] / N_oracle[i] if N_oracle[i] > 0 else 0.0 for j in range(L)]
                for i in range(L)
            ]
            B_oracle = [
                [1.0 if (i != j and P_oracle[i][j] >= rho) else 0.0 for j in range(L)]
                for i in range(L)
            ]
            A_oracle = [[0.0] * L for _ in range(L)]
            for i in range(L):
                deg = sum(B_oracle[i])
                A_oracle[i][i] = 1.0 - tau
                if deg:
                    for j in range(L):
                        if i != j and B_oracle[i][j]:
                            A_oracle[i][j] = tau / deg

            assert np.array_equal(N, np.array(N_oracle))
            assert np.array_equal(M.toarray(), np.array(M_oracle, dtype=float))
            assert np.array_equal(P.toarray(), np.array(P_oracle))
            assert np.array_equal(B.toarray(), np.array(B_oracle))
            assert np.array_equal(A.toarray(), np.array(A_oracle))

            row_sums = np.asarray(A.sum(axis=1)).ravel()
            deg = np.asarray(np.array(B_oracle).sum(axis=1))
            for i in range(L):
                target = 1.0 if deg[i] else 1.0 - tau
                assert abs(row_sums[i] - target) <= 1e-12


# ---------------------------------------------------------------- criterion 3

def test_criterion_03_lowpass_property():
    with criterion("03", "Rayleigh quotients non-increasing over k=0..5 on 100 graphs"):
        rng = np.random.default_rng(30)
        for _ in range(100):
            L = int(rng.integers(3, 41))
            A, _ = random_reweighted_graph(rng, L)
            L_s = normalized_laplacian(A).toarray()
            Z = rng.normal(size=(L, 3))
            identity = lowpass_filter(A, Z, 0)
            assert np.array_equal(identity, Z) and identity is not Z
            previous = None
            for k in range(6):
                Zk = lowpass_filter(A, Z, k)
                quotients = [
                    float(c @ (L_s @ c) / (c @ c)) for c in Zk.T
                ]
                if previous is not None:
                    assert all(q <= p + 1e-9 for q, p in zip(quotients, previous))
                previous = quotients


# ---------------------------------------------------------------- criterion 4

def test_criterion_04_sampled_filtering():
    with criterion("04", "sampling exact at S >= max degree; 200-seed mean within 2%"):
        rng = np.random.default_rng(40)
        for _ in range(5):
            L = int(rng.integers(8, 30))
            A, _ = random_reweighted_graph(rng, L)
            Z = rng.normal(size=(L, 4))
            G = _filter_matrix(A)
            max_off = max(
                int((G.indices[G.indptr[i]:G.indptr[i + 1]] != i).sum())
                for i in range(L)
            )
            exact = lowpass_filter(A, Z, 3)
            sampled = sampled_lowpass_filter(
                A, Z, 3, batch_size=8, sample_size=max(1, max_off), seed=4
            )
            assert np.array_equal(exact, sampled)

        L = 50
        A, _ = random_reweighted_graph(rng, L, density=0.15, tau=0.2)
        Z = np.abs(rng.normal(size=(L, 6))) + 0.5
        G = _filter_matrix(A)
        max_off = max(
            int((G.indices[G.indptr[i]:G.indptr[i + 1]] != i).sum()) for i in range(L)
        )
        S = int(np.ceil(max_off / 2))
        exact = lowpass_filter(A, Z, 1)
        total = np.zeros_like(exact)
        for seed in range(200):
            total += sampled_lowpass_filter(A, Z, 1, batch_size=16, sample_size=S, seed=seed)
        rel = np.linalg.norm(total / 200 - exact) / np.linalg.norm(exact)
        assert rel < 0.02


# ---------------------------------------------------------------- criterion 5

def _random_graph_features(rng, dim):
    from xmtc.corpus import Document
    from xmtc.keygraph import document_keygraph

    vocab = [f"w{i}" for i in range(10)]
    sentences = [
        list(rng.choice(vocab, size=int(rng.integers(2, 5))))
        for _ in range(int(rng.integers(2, 5)))
    ]
    provider = HashingEmbedder(dimension=dim, seed=0)
    return document_keygraph(Document("0", sentences), provider, keep_ratio=0.6)


def test_criterion_05_gradient_correctness():
    with criterion("05", "analytic gradients vs central differences on 20 shapes (<60s)"):
        started = time.time()
        rng = np.random.default_rng(50)
        for shape in range(20):
            d_in = int(rng.integers(3, 6))
            hidden = int(rng.integers(3, 6))
            n_layers = int(rng.integers(1, 3))
            K = int(rng.integers(2, 5))
            model = MatcherModel(
                d_in=d_in, hidden_dim=hidden, n_layers=n_layers, n_clusters=K,
                learn_epsilon=True, seed=int(rng.integers(10_000)),
            )
            # evaluate the check at a generic parameter point
            for name in model.params:
                model.params[name][...] = 0.3 * rng.normal(size=model.params[name].shape)
            pairs = []
            for _ in range(2):
                g1, f1 = _random_graph_features(rng, d_in)
                g2, f2 = _random_graph_features(rng, d_in)
                pairs.append(
                    (
                        model.prepare(g1, f1),
                        (rng.random(K) < 0.5).astype(float),
                        model.prepare(g2, f2),
                        (rng.random(K) < 0.5).astype(float),
                    )
                )
            alpha = float(rng.uniform(0.2, 0.8))
            _, grads = model.batch_loss_and_grads(pairs, alpha)
            step = 1e-5
            for name in model.trainable_names():
                flat = model.params[name].reshape(-1)
                grad_flat = grads[name].reshape(-1)
                for idx in range(flat.size):
                    orig = flat[idx]
                    flat[idx] = orig + step
                    up = model.batch_loss(pairs, alpha)
                    flat[idx] = orig - step
                    down = model.batch_loss(pairs, alpha)
                    flat[idx] = orig
                    fd = (up - down) / (2 * step)
                    analytic = grad_flat[idx]
                    rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-6)
                    assert rel < 1e-4, f"shape {shape}, {name}[{idx}]: {analytic} vs {fd}"
        assert time.time() - started < 60.0


# ---------------------------------------------------------------- criterion 6

def test_criterion_06_permutation_invariance():
    with criterion("06", "vertex-permuted twins give bit-identical readouts and scores"):
        from xmtc.keygraph import KeyGraph

        rng = np.random.default_rng(60)
        model = MatcherModel(d_in=6, hidden_dim=5, n_layers=2, n_clusters=4, seed=3)
        for name in ("W_c", "W_r"):
            model.params[name][...] = rng.normal(size=model.params[name].shape)
        for _ in range(100):
            graph, feats = _random_graph_features(rng, dim=6)
            n_kw = len(graph.keywords)
            perm = rng.permutation(n_kw)
            old_to_new = {int(old): new for new, old in enumerate(perm)}
            old_to_new[graph.empty_vertex] = n_kw
            twin = KeyGraph(
                keywords=[graph.keywords[int(old)] for old in perm],
                sentences=[list(s) for s in graph.sentences],
                edges={
                    tuple(sorted((old_to_new[i], old_to_new[j]))): w
                    for (i, j), w in graph.edges.items()
                },
                sentence_attachment=[
                    sorted(old_to_new[v] for v in vs)
                    for vs in graph.sentence_attachment
                ],
            )
            order = np.concatenate([perm, [graph.empty_vertex]]).astype(int)
            twin_feats = feats[order]
            h1, _ = model._forward_branch("conv", model.prepare(graph, feats))
            h2, _ = model._forward_branch("conv", model.prepare(twin, twin_feats))
            assert np.array_equal(h1, h2)
            s1 = model.predict_scores(model.prepare(graph, feats))
            s2 = model.predict_scores(model.prepare(twin, twin_feats))
            assert np.array_equal(s1, s2)


# ---------------------------------------------------------------- criterion 7

def test_criterion_07_reversed_sampler():
    with criterion("07", "reversed sampler matches closed form within L1 0.02 over 1e5 draws"):
        rng = np.random.default_rng(70)
        label_sets = []
        L = 8
        for _ in range(80):
            size = int(rng.integers(1, 4))
            label_sets.append(set(rng.choice([0, 1, 2, 4, 5, 7], size=size, replace=False).tolist()))
        ds = Dataset(sp.csr_matrix((len(label_sets), 3)), label_sets, L)
        sampler = ReversedSampler(ds, seed=7)
        counts = np.zeros(L)
        for _ in range(100_000):
            counts[sampler.draw_label()] += 1
        l1 = np.abs(counts / counts.sum() - sampler.probabilities).sum()
        assert l1 < 0.02
        never = label_frequencies(ds) == 0
        assert never.any()  # labels 3 and 6 are absent by construction
        assert counts[never].sum() == 0


# ---------------------------------------------------------------- criterion 8

def test_criterion_08_alpha_schedule_and_inference():
    with criterion("08", "alpha boundaries exact; inference reports alpha = 0.5"):
        assert alpha_schedule(0, 10) == 1.0
        assert alpha_schedule(10, 10) == 0.0
        assert alpha_schedule(5, 10) == 0.75

        rng = np.random.default_rng(80)
        from xmtc.corpus import Document
        from xmtc.keygraph import document_keygraph

        provider = HashingEmbedder(dimension=8, seed=0)
        graphs, label_sets = [], []
        for i in range(12):
            block = i % 2
            doc = Document(str(i), [[f"{'ab'[block]}{j}" for j in rng.integers(0, 4, size=3)]])
            graphs.append(document_keygraph(doc, provider, keep_ratio=1.0))
            label_sets.append({block})
        ds = Dataset(sp.csr_matrix((12, 2)), label_sets, 2)
        clusters = LabelClusters(np.array([0, 1]), 2)
        est = ClusterMatcher(n_layers=0, hidden_dim=4, max_epochs=2, batch_size=4, seed=0)
        est.fit(graphs, ds, clusters)
        seen = []
        est.model_.inference_hook = seen.append
        est.model_.predict_scores(est.model_.prepare(*graphs[0]))
        assert seen == [0.5]


# ---------------------------------------------------------------- criterion 9

def test_criterion_09_mixture_equivalence():
    with criterion("09", "single-term shortcut equals the full mixture sum on 100 cases"):
        rng = np.random.default_rng(90)
        for _ in range(100):
            L = int(rng.integers(4, 10))
            K = int(rng.integers(2, 5))
            assignment = rng.integers(0, K, size=L)
            assignment[:K] = np.arange(K)
            clusters = LabelClusters(assignment, K)
            d = 3
            classifiers = LabelClassifiers(
                classifiers={
                    l: LabelClassifier(weights=rng.normal(size=d), bias=float(rng.normal()))
                    for l in range(L)
                },
                num_features=d,
                regularization=1.0,
            )
            x = rng.normal(size=d)
            g_hat = rng.random(K)
            ranked = score_labels(x, g_hat, classifiers, clusters, top_b=K)
            for label, short in ranked:
                full = 0.0
                for k in range(K):
                    if assignment[label] == k:
                        full += g_hat[k] * classifiers.classifiers[label].probability(x)
                    else:
                        full += 0.0
                assert short == full


# --------------------------------------------------------------- criterion 10

def test_criterion_10_metrics_oracle():
    with criterion("10", "metrics match brute force to 1e-10 on 500 instances"):
        rng = np.random.default_rng(100)
        L = 10
        model = propensities(rng.integers(1, 60, size=L), n_train=500)
        unit = propensities(np.full(L, 10), n_train=500)
        unit.p[...] = 1.0
        for _ in range(500):
            ranked = rng.permutation(L).tolist()[: int(rng.integers(2, 9))]
            truth = set(rng.choice(L, size=int(rng.integers(0, 7)), replace=False).tolist())
            for k in (1, 3, 5):
                # brute-force precision and nDCG
                hits = sum(1 for l in ranked[:k] if l in truth)
                p_oracle = hits / k if truth else 0.0
                assert abs(precision_at_k(ranked, truth, k) - p_oracle) <= 1e-10
                dcg = sum(
                    1.0 / math.log2(r + 2)
                    for r, l in enumerate(ranked[:k])
                    if l in truth
                )
                ideal = sum(
                    1.0 / math.log2(r + 2) for r in range(min(k, len(truth)))
                )
                ndcg_oracle = dcg / ideal if truth else 0.0
                assert abs(ndcg_at_k(ranked, truth, k) - ndcg_oracle) <= 1e-10
                # brute-force propensity-scored normalizers over all orderings
                if truth:
                    best_psp = max(
                        sum(1.0 / model.of(l) for l in perm[:k]) / k
                        for perm in itertools.permutations(sorted(truth))
                    )
                    raw_psp = sum(1.0 / model.of(l) for l in ranked[:k] if l in truth) / k
                    psp_oracle = raw_psp / best_psp
                    best_psdcg = max(
                        sum(
                            (1.0 / model.of(l)) / math.log2(r + 2)
                            for r, l in enumerate(perm[:k])
                        )
                        for perm in itertools.permutations(sorted(truth))
                    )
                    raw_psdcg = sum(
                        (1.0 / model.of(l)) / math.log2(r + 2)
                        for r, l in enumerate(ranked[:k])
                        if l in truth
                    )
                    psndcg_oracle = raw_psdcg / best_psdcg
                else:
                    psp_oracle = psndcg_oracle = 0.0
                assert abs(psp_at_k(ranked, truth, model, k) - psp_oracle) <= 1e-10
                assert abs(psndcg_at_k(ranked, truth, model, k) - psndcg_oracle) <= 1e-10
                # unit-propensity reduction to normalized precision
                if truth:
                    normalized_p = p_oracle / (min(k, len(truth)) / k)
                    assert abs(psp_at_k(ranked, truth, unit, k) - normalized_p) <= 1e-10


# ---------------------------------------------------- criteria 11 and 12

ACCEPTANCE_SPEC = SynthSpec(
    num_labels=300,
    n_clusters_true=6,
    n_instances=3000,
    noise_rate=0.05,
    seed=42,
    power_exponent=1.1,
    extra_labels_mean=2.0,
    cross_cluster_label_rate=0.15,
    cluster_confusion_share=0.4,
    cluster_feature_dims=10,
)

TOP_B = 2


@pytest.fixture(scope="module")
def synthetic_pipeline():
    started = time.time()
    ds, corpus, planted = generate(ACCEPTANCE_SPEC)
    train_idx, test_idx = split_indices(ds.n, 0.2, seed=42)
    train, test = ds.subset(train_idx), ds.subset(test_idx)
    corpus_train = subset_corpus(corpus, train_idx)
    corpus_test = subset_corpus(corpus, test_idx)

    clusterer = LabelGraphClusterer(n_clusters=6, kmeans_iters=60, rho=0.1, seed=0)
    clusterer.fit(train)
    clusters = clusterer.clusters_

    provider = HashingEmbedder(dimension=64, seed=0)
    graphs_train = encode_corpus(corpus_train, provider)
    graphs_test = encode_corpus(corpus_test, provider)

    matcher = ClusterMatcher(
        n_layers=2, hidden_dim=64, max_epochs=12, batch_size=32,
        learning_rate=0.02, seed=1,
    )
    matcher.fit(graphs_train, train, clusters)
    model = matcher.model_

    ranker = LabelRanker(top_b=TOP_B, regularization=0.01).fit(train, clusters)
    prop = propensities(label_frequencies(train), train.n)

    prepared = [model.prepare(g, f) for g, f in graphs_test]
    reports = {}
    for branch in ("both", "conventional"):
        predictions = []
        for i in range(test.n):
            scores = model.predict_scores(prepared[i], branch=branch)
            ranked = score_labels(
                test.features[i], scores, ranker.classifiers_, clusters, top_b=TOP_B
            )
            predictions.append([l for l, _ in ranked[:5]])
        reports[branch] = evaluate(
            predictions, [set(ls) for ls in test.labels], prop
        )

    return {
        "planted": planted,
        "train": train,
        "test": test,
        "clusters": clusters,
        "model": model,
        "ranker": ranker,
        "graphs_test": graphs_test,
        "reports": reports,
        "runtime": time.time() - started,
    }


def test_criterion_11a_cluster_recovery(synthetic_pipeline):
    with criterion("11a", "label clustering reaches adjusted Rand >= 0.9 vs planted"):
        ari = adjusted_rand_index(
            synthetic_pipeline["planted"], synthetic_pipeline["clusters"].assignment
        )
        print(f"  adjusted Rand index = {ari:.3f}")
        assert ari >= 0.9


def test_criterion_11b_full_pipeline_precision(synthetic_pipeline):
    with criterion("11b", "full pipeline P@1 >= 0.90"):
        p1 = synthetic_pipeline["reports"]["both"].values["P@1"] / 100.0
        print(f"  P@1 = {p1:.3f}")
        assert p1 >= 0.90


def test_criterion_11b_rebalance_psp_gap(synthetic_pipeline):
    # Known-red at this scale: with only K = 6 clusters, a competently trained
    # conventional branch leaves ~0.01-0.03 of PSP@1 headroom for the branch
    # mix (measured across seeds and scenario shapes; the score product is
    # dominated by the per-label classifiers whenever P@1 >= 0.9 holds), so
    # the 0.05 margin is not reachable here.  The assertion is kept as stated.
    with criterion("11b", "re-balance branch lifts PSP@1 by >= 0.05 absolute"):
        reports = synthetic_pipeline["reports"]
        gap = (
            reports["both"].values["PSP@1"] - reports["conventional"].values["PSP@1"]
        ) / 100.0
        print(
            f"  PSP@1 both={reports['both'].values['PSP@1']:.2f} "
            f"conventional={reports['conventional'].values['PSP@1']:.2f} gap={gap:+.3f}"
        )
        assert gap >= 0.05


def test_criterion_11c_histogram_flatness(synthetic_pipeline):
    with criterion("11c", "cluster histogram flatter than label histogram at 20 instances"):
        train = synthetic_pipeline["train"]
        counts = cluster_instance_histogram(train, synthetic_pipeline["clusters"])
        cluster_fraction = fraction_above(counts, 20)
        label_fraction = fraction_above(label_frequencies(train), 20)
        print(f"  fraction above 20: clusters={cluster_fraction:.2f} labels={label_fraction:.2f}")
        assert cluster_fraction > label_fraction


def test_criterion_11_runtime(synthetic_pipeline):
    with criterion("11", "end-to-end synthetic pipeline inside the time budget"):
        print(f"  pipeline runtime = {synthetic_pipeline['runtime']:.0f}s")
        assert synthetic_pipeline["runtime"] < 600.0


def test_criterion_12_prediction_cost_witness(synthetic_pipeline):
    with criterion("12", "classifier evaluations bounded; cluster scoring is K products"):
        test = synthetic_pipeline["test"]
        clusters = synthetic_pipeline["clusters"]
        model = synthetic_pipeline["model"]
        ranker = synthetic_pipeline["ranker"]
        max_cluster = int(clusters.sizes().max())
        for i in range(0, test.n, 7):
            graph, feats = synthetic_pipeline["graphs_test"][i]
            stats = {}
            predict_topk(
                model, ranker.classifiers_, clusters, test.features[i],
                graph, feats, k=5, top_b=TOP_B, stats=stats,
            )
            assert stats["cluster_scores_computed"] == clusters.n_clusters
            assert stats["classifier_evaluations"] <= TOP_B * max_cluster
