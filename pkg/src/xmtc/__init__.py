"""Extreme multi-label text classification via label-graph clustering,
keyword-graph matching, and per-label rankers."""

from .corpus import (
    Dataset,
    DatasetStats,
    Document,
    TextCorpus,
    dataset_stats,
    label_frequencies,
    parse_text_corpus,
    parse_xmc,
    serialize_text_corpus,
    serialize_xmc,
    split,
    tokenize,
)
from .embedding import (
    EmbeddingProvider,
    HashingEmbedder,
    PrecomputedEmbedder,
    TfidfEmbedder,
    hash_embed,
    load_precomputed,
    tfidf_fit,
)
from .keygraph import (
    KeyGraph,
    build_keygraph,
    document_keygraph,
    encode_corpus,
    init_vertex_features,
    textrank_keywords,
)
from .labelgraph import (
    LabelClusters,
    LabelEmbeddings,
    LabelGraph,
    LabelGraphClusterer,
    binarize,
    cluster_instance_histogram,
    conditional_prob,
    cooccurrence,
    fraction_above,
    label_embeddings,
    load_clusters,
    lowpass_filter,
    minibatch_kmeans,
    normalized_laplacian,
    reweight,
    sampled_lowpass_filter,
    save_clusters,
)
from .matcher import (
    ClusterMatcher,
    MatcherModel,
    alpha_schedule,
    cluster_targets,
    gin_layer,
    load_matcher,
    matching_loss,
    mix_logits,
    predict_clusters,
    readout,
    save_matcher,
)
from .metrics import (
    EvalReport,
    PropensityModel,
    evaluate,
    ndcg_at_k,
    precision_at_k,
    propensities,
    psndcg_at_k,
    psp_at_k,
)
from .ranking import (
    LabelClassifiers,
    LabelRanker,
    load_classifiers,
    predict_topk,
    save_classifiers,
    score_labels,
    train_label_classifiers,
)
from .sampling import ReversedSampler, paired_batches, uniform_epoch
from .synth import SynthSpec, adjusted_rand_index, generate

__version__ = "0.1.0"
