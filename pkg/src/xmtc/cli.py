"""Stage-by-stage pipeline CLI around a shared work directory.

Each subcommand reads its inputs from the work dir (or the configured paths),
writes its artifacts plus a small ``.meta`` sidecar, and prints a one-line
summary.  A lock file serializes subcommands per work dir.  Exit codes:
0 success, 2 config error, 3 missing upstream artifact or lock contention,
4 data error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import corpus as corpus_mod
from .config import PipelineConfig, parse_config
from .embedding import HashingEmbedder
from .errors import ConfigError, DependencyError, XmtcError
from .keygraph import encode_corpus
from .labelgraph import (
    binarize,
    cluster_instance_histogram,
    conditional_prob,
    cooccurrence,
    dump_adjacency,
    fraction_above,
    label_embeddings,
    load_clusters,
    lowpass_filter,
    minibatch_kmeans,
    sampled_lowpass_filter,
    reweight,
    save_clusters,
    default_n_clusters,
    inertia,
)
from .matcher import ClusterMatcher, load_matcher, save_matcher
from .metrics import evaluate, propensities, read_predictions, write_predictions
from .ranking import LabelRanker, load_classifiers, save_classifiers, score_labels
from .synth import SynthSpec, generate

STAGE_OF_ARTIFACT = {
    "train.txt": "ingest (or synth)",
    "test.txt": "ingest (or synth)",
    "corpus_train.txt": "ingest (or synth)",
    "corpus_test.txt": "ingest (or synth)",
    "adjacency.txt": "build-label-graph",
    "clusters.tsv": "cluster",
    "matcher.bin": "train-matcher",
    "rankers.txt": "train-rankers",
    "predictions.txt": "predict",
}


def _workdir(cfg: PipelineConfig) -> Path:
    path = Path(cfg.paths.workdir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require(workdir: Path, name: str) -> Path:
    path = workdir / name
    if not path.exists():
        raise DependencyError(
            f"missing {name}; run {STAGE_OF_ARTIFACT.get(name, 'the producing stage')} first"
        )
    return path


def _write_meta(path: Path, **entries) -> None:
    with open(str(path) + ".meta", "w", encoding="utf-8") as fh:
        fh.write("format_version=1\n")
        for key in sorted(entries):
            fh.write(f"{key}={entries[key]}\n")


def _read_meta(path: Path) -> dict[str, str]:
    out = {}
    with open(str(path) + ".meta", "r", encoding="utf-8") as fh:
        for line in fh:
            key, _, value = line.strip().partition("=")
            if key:
                out[key] = value
    return out


@contextmanager
def _lock(workdir: Path):
    lock_path = workdir / ".lock"
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DependencyError(
            f"work dir {workdir} is locked by another subcommand ({lock_path})"
        )
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock_path.unlink(missing_ok=True)


def _load_adjacency(path: Path) -> sp.csr_matrix:
    meta = _read_meta(path)
    n = int(meta["num_labels"])
    rows, cols, vals = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            i, j, v = line.split()
            rows.append(int(i))
            cols.append(int(j))
            vals.append(float(v))
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _doc_graphs(cfg: PipelineConfig, corpus):
    kg = cfg.keygraph
    provider = HashingEmbedder(dimension=kg.embedding_dim, seed=kg.seed)
    return encode_corpus(
        corpus, provider,
        window=kg.window, damping=kg.damping, iters=kg.iters, keep_ratio=kg.keep_ratio,
    )


def cmd_synth(cfg: PipelineConfig) -> str:
    t0 = time.time()
    s = cfg.synth
    spec = SynthSpec(
        num_labels=s.num_labels,
        n_clusters_true=s.n_clusters_true,
        n_instances=s.n_instances,
        power_exponent=s.power_exponent,
        noise_rate=s.noise_rate,
        seed=s.seed,
        extra_labels_mean=s.extra_labels_mean,
        cross_cluster_label_rate=s.cross_cluster_label_rate,
        cluster_confusion_share=s.cluster_confusion_share,
        cluster_feature_dims=s.cluster_feature_dims,
        label_feature_dims=s.label_feature_dims,
    )
    ds, corpus, planted = generate(spec)
    train_idx, test_idx = corpus_mod.split_indices(ds.n, s.test_fraction, s.seed)
    workdir = _workdir(cfg)
    corpus_mod.serialize_xmc(ds.subset(train_idx), workdir / "train.txt")
    corpus_mod.serialize_xmc(ds.subset(test_idx), workdir / "test.txt")
    corpus_mod.serialize_text_corpus(
        corpus_mod.subset_corpus(corpus, train_idx), workdir / "corpus_train.txt"
    )
    corpus_mod.serialize_text_corpus(
        corpus_mod.subset_corpus(corpus, test_idx), workdir / "corpus_test.txt"
    )
    with open(workdir / "planted_clusters.tsv", "w", encoding="utf-8") as fh:
        for label, c in enumerate(planted):
            fh.write(f"{label}\t{int(c)}\n")
    for name in ("train.txt", "test.txt", "corpus_train.txt", "corpus_test.txt"):
        _write_meta(workdir / name, stage="synth", seed=s.seed)
    return (
        f"[synth] {train_idx.size} train / {test_idx.size} test instances, "
        f"L={ds.num_labels}, d={ds.num_features} ({time.time() - t0:.1f}s)"
    )


def cmd_ingest(cfg: PipelineConfig) -> str:
    t0 = time.time()
    workdir = _workdir(cfg)
    for key, dataset_name, corpus_name in (
        ("train", "train.txt", "corpus_train.txt"),
        ("test", "test.txt", "corpus_test.txt"),
    ):
        ds_path = getattr(cfg.paths, key)
        corpus_path = getattr(cfg.paths, f"corpus_{key}")
        if not ds_path:
            raise ConfigError(f"paths.{key}", "required by ingest")
        ds = corpus_mod.parse_xmc(ds_path)
        corpus_mod.serialize_xmc(ds, workdir / dataset_name)
        _write_meta(workdir / dataset_name, stage="ingest", source=ds_path)
        if corpus_path:
            corpus = corpus_mod.parse_text_corpus(corpus_path)
            if len(corpus) != ds.n:
                raise XmtcError(
                    f"{corpus_path}: {len(corpus)} documents vs {ds.n} instances"
                )
            corpus_mod.serialize_text_corpus(corpus, workdir / corpus_name)
            _write_meta(workdir / corpus_name, stage="ingest", source=corpus_path)
    train = corpus_mod.parse_xmc(workdir / "train.txt")
    test = corpus_mod.parse_xmc(workdir / "test.txt")
    stats = corpus_mod.dataset_stats(train, test)
    return (
        f"[ingest] n_train={stats.n_train} n_test={stats.n_test} d={stats.num_features} "
        f"L={stats.num_labels} ({time.time() - t0:.1f}s)"
    )


def cmd_build_label_graph(cfg: PipelineConfig) -> str:
    t0 = time.time()
    workdir = _workdir(cfg)
    train = corpus_mod.parse_xmc(_require(workdir, "train.txt"))
    N, M = cooccurrence(train)
    P = conditional_prob(N, M)
    B = binarize(P, cfg.labelgraph.rho)
    A = reweight(B, cfg.labelgraph.tau)
    dump_adjacency(A, workdir / "adjacency.txt")
    _write_meta(
        workdir / "adjacency.txt",
        stage="build-label-graph",
        num_labels=train.num_labels,
        rho=cfg.labelgraph.rho,
        tau=cfg.labelgraph.tau,
        edges=int(B.nnz),
    )
    return (
        f"[build-label-graph] L={train.num_labels} binary_edges={B.nnz} "
        f"rho={cfg.labelgraph.rho} tau={cfg.labelgraph.tau} ({time.time() - t0:.1f}s)"
    )


def cmd_cluster(cfg: PipelineConfig) -> str:
    t0 = time.time()
    workdir = _workdir(cfg)
    train = corpus_mod.parse_xmc(_require(workdir, "train.txt"))
    A = _load_adjacency(_require(workdir, "adjacency.txt"))
    lg = cfg.labelgraph
    provider = HashingEmbedder(dimension=lg.embedding_dim, seed=lg.seed)
    Z = label_embeddings(train, provider)
    if lg.sample_size:
        Z_filtered = sampled_lowpass_filter(
            A, Z, lg.filter_order, lg.filter_batch_size, lg.sample_size, lg.seed
        )
    else:
        Z_filtered = lowpass_filter(A, Z, lg.filter_order)
    K = lg.n_clusters or default_n_clusters(train.num_labels)
    best = None
    best_inertia = np.inf
    for r in range(lg.n_restarts):
        candidate = minibatch_kmeans(
            Z_filtered, K, lg.kmeans_batch_size, lg.kmeans_iters, lg.seed + r
        )
        value = inertia(Z_filtered, candidate)
        if value < best_inertia:
            best, best_inertia = candidate, value
    save_clusters(best, workdir / "clusters.tsv")
    _write_meta(
        workdir / "clusters.tsv",
        stage="cluster",
        n_clusters=K,
        inertia=repr(best_inertia),
        filter_order=lg.filter_order,
    )
    sizes = best.sizes()
    return (
        f"[cluster] K={K} sizes(min/median/max)={sizes.min()}/{int(np.median(sizes))}/"
        f"{sizes.max()} inertia={best_inertia:.3f} ({time.time() - t0:.1f}s)"
    )


def cmd_train_matcher(cfg: PipelineConfig) -> str:
    t0 = time.time()
    workdir = _workdir(cfg)
    train = corpus_mod.parse_xmc(_require(workdir, "train.txt"))
    corpus = corpus_mod.parse_text_corpus(_require(workdir, "corpus_train.txt"))
    clusters = load_clusters(_require(workdir, "clusters.tsv"))
    graphs = _doc_graphs(cfg, corpus)
    m = cfg.matcher
    est = ClusterMatcher(
        n_layers=m.n_layers,
        hidden_dim=m.hidden_dim,
        epsilon=m.epsilon,
        learn_epsilon=m.learn_epsilon,
        weighted_neighbors=m.weighted_neighbors,
        learning_rate=m.learning_rate,
        momentum=m.momentum,
        warmup=m.warmup,
        max_epochs=m.max_epochs,
        batch_size=m.batch_size,
        val_fraction=m.val_fraction,
        bilateral=m.bilateral,
        seed=m.seed,
    )
    est.fit(graphs, train, clusters)
    save_matcher(est.model_, workdir / "matcher.bin")
    best_val = est.model_.metadata["best_val_loss"]
    _write_meta(
        workdir / "matcher.bin",
        stage="train-matcher",
        epochs_run=len(est.history_),
        best_val_loss=repr(best_val),
        bilateral=m.bilateral,
    )
    return (
        f"[train-matcher] epochs={len(est.history_)} best_val={best_val:.4f} "
        f"bilateral={m.bilateral} ({time.time() - t0:.1f}s)"
    )


def cmd_train_rankers(cfg: PipelineConfig) -> str:
    t0 = time.time()
    workdir = _workdir(cfg)
    train = corpus_mod.parse_xmc(_require(workdir, "train.txt"))
    clusters = load_clusters(_require(workdir, "clusters.tsv"))
    est = LabelRanker(
        regularization=cfg.ranker.regularization,
        top_b=cfg.matcher.top_b,
        max_epochs=cfg.ranker.max_epochs,
        grad_tol=cfg.ranker.grad_tol,
        mixture=cfg.ranker.mixture,
    )
    est.fit(train, clusters)
    save_classifiers(est.classifiers_, workdir / "rankers.txt")
    _write_meta(
        workdir / "rankers.txt",
        stage="train-rankers",
        n_classifiers=len(est.classifiers_),
        num_features=train.num_features,
        regularization=cfg.ranker.regularization,
    )
    return (
        f"[train-rankers] {len(est.classifiers_)} classifiers over d={train.num_features} "
        f"({time.time() - t0:.1f}s)"
    )


def cmd_predict(cfg: PipelineConfig, conventional_only: bool = False) -> str:
    t0 = time.time()
    workdir = _workdir(cfg)
    test = corpus_mod.parse_xmc(_require(workdir, "test.txt"))
    corpus = corpus_mod.parse_text_corpus(_require(workdir, "corpus_test.txt"))
    clusters = load_clusters(_require(workdir, "clusters.tsv"))
    model = load_matcher(_require(workdir, "matcher.bin"))
    meta = _read_meta(workdir / "rankers.txt") if (workdir / "rankers.txt").exists() else None
    rankers_path = _require(workdir, "rankers.txt")
    classifiers = load_classifiers(
        rankers_path,
        num_features=int(meta["num_features"]),
        regularization=float(meta.get("regularization", "1.0")),
    )
    graphs = _doc_graphs(cfg, corpus)
    branch = "conventional" if conventional_only else "both"
    keep = max(cfg.metrics.ks)
    rankings = []
    for i in range(test.n):
        graph, feats = graphs[i]
        scores = model.predict_scores(model.prepare(graph, feats), branch=branch)
        ranked = score_labels(
            test.features[i], scores, classifiers, clusters,
            top_b=cfg.matcher.top_b, mixture=cfg.ranker.mixture,
        )
        rankings.append(ranked[:keep])
    write_predictions(rankings, workdir / "predictions.txt")
    _write_meta(
        workdir / "predictions.txt",
        stage="predict",
        branch=branch,
        top_b=cfg.matcher.top_b,
        k=keep,
    )
    return (
        f"[predict] {test.n} instances, top-{keep} labels each, branch={branch} "
        f"({time.time() - t0:.1f}s)"
    )


def cmd_evaluate(cfg: PipelineConfig) -> str:
    t0 = time.time()
    workdir = _workdir(cfg)
    train = corpus_mod.parse_xmc(_require(workdir, "train.txt"))
    test = corpus_mod.parse_xmc(_require(workdir, "test.txt"))
    rankings = read_predictions(_require(workdir, "predictions.txt"))
    model = propensities(
        corpus_mod.label_frequencies(train),
        train.n,
        A=cfg.metrics.propensity_a,
        B=cfg.metrics.propensity_b,
    )
    report = evaluate(
        [[label for label, _ in ranking] for ranking in rankings],
        [set(ls) for ls in test.labels],
        model,
        ks=cfg.metrics.ks,
    )
    with open(workdir / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(report.to_table() + "\n")
    with open(workdir / "report.kv", "w", encoding="utf-8") as fh:
        fh.write(report.to_kv())
    print(report.to_table())
    headline = ", ".join(
        f"{m}@1={report.values[f'{m}@1']:.2f}" for m in ("P", "PSP")
    )
    return f"[evaluate] {report.n_instances} instances: {headline} ({time.time() - t0:.1f}s)"


def cmd_stats(cfg: PipelineConfig) -> str:
    t0 = time.time()
    workdir = _workdir(cfg)
    if (workdir / "train.txt").exists():
        train_path, test_path = workdir / "train.txt", workdir / "test.txt"
    elif cfg.paths.train:
        train_path, test_path = Path(cfg.paths.train), Path(cfg.paths.test)
    else:
        raise DependencyError("no dataset available; run ingest or set paths.train")
    train = corpus_mod.parse_xmc(train_path)
    test = corpus_mod.parse_xmc(test_path)
    stats = corpus_mod.dataset_stats(train, test)
    entries = {
        "n_train": stats.n_train,
        "n_test": stats.n_test,
        "num_features": stats.num_features,
        "num_labels": stats.num_labels,
        "avg_labels_per_instance": repr(stats.avg_labels_per_instance),
        "avg_instances_per_label": repr(stats.avg_instances_per_label),
    }
    counts = corpus_mod.label_frequencies(train)
    entries["fraction_labels_above_100"] = repr(fraction_above(counts, 100))
    clusters_path = workdir / "clusters.tsv"
    if clusters_path.exists():
        clusters = load_clusters(clusters_path)
        histogram = cluster_instance_histogram(train, clusters)
        entries["fraction_clusters_above_100"] = repr(fraction_above(histogram, 100))
        entries["cluster_instance_counts"] = ",".join(str(c) for c in histogram)
    with open(workdir / "stats.kv", "w", encoding="utf-8") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")
    return (
        f"[stats] n_train={stats.n_train} n_test={stats.n_test} d={stats.num_features} "
        f"L={stats.num_labels} avg_labels/instance={stats.avg_labels_per_instance:.2f} "
        f"avg_instances/label={stats.avg_instances_per_label:.2f} ({time.time() - t0:.1f}s)"
    )


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "build-label-graph": cmd_build_label_graph,
    "cluster": cmd_cluster,
    "train-matcher": cmd_train_matcher,
    "train-rankers": cmd_train_rankers,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "stats": cmd_stats,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="xmtc",
        description="Label-cluster matching pipeline for extreme multi-label text classification",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="pipeline config file")
    parser.add_argument(
        "--conventional-only",
        action="store_true",
        help="predict: disable the re-balance branch (ablation baseline)",
    )
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        workdir = _workdir(cfg)
        with _lock(workdir):
            if args.command == "predict":
                summary = cmd_predict(cfg, conventional_only=args.conventional_only)
            else:
                summary = COMMANDS[args.command](cfg)
        print(summary)
        return 0
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except DependencyError as err:
        print(f"dependency error: {err}", file=sys.stderr)
        return 3
    except (XmtcError, OSError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
