"""Keyword co-occurrence graphs: one per document, the matcher's input.

Keywords are extracted with TextRank over within-sentence co-occurrence
windows; keyword vertices are joined by edges weighted with the number of
shared sentences, and sentences matching no keyword attach to a designated
empty vertex so their content still reaches the graph readout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Document
from .embedding import EmbeddingProvider
from .validation import check_in_range, check_positive_int

# Compact English stopword list; content tokens are alphabetic non-stopwords.
STOPWORDS = frozenset(
    """a about above after again all also am an and any are as at be because been
    before being below between both but by can could did do does doing down during
    each few for from further had has have having he her here hers him his how i
    if in into is it its itself just me more most my no nor not now of off on once
    only or other our ours out over own same she should so some such than that the
    their theirs them then there these they this those through to too under until
    up very was we were what when where which while who whom why will with you
    your yours""".split()
)


def content_tokens(sentence: list[str]) -> list[str]:
    return [t for t in sentence if t.isalpha() and t not in STOPWORDS]


def textrank_keywords(
    doc: Document,
    window: int = 4,
    damping: float = 0.85,
    iters: int = 50,
    keep_ratio: float = 0.3,
) -> list[str]:
    """Top tokens of a document by TextRank score.

    Builds an undirected graph over content tokens co-occurring within
    ``window`` positions of each other inside a sentence, runs the power
    iteration s <- (1 - damping)/n + damping * W s (W column-normalized by
    degree) until the max change falls below 1e-6 or ``iters`` rounds, and
    keeps the ceil(keep_ratio * n) best-scoring tokens, ties broken
    lexicographically.
    """
    check_positive_int("window", window, minimum=2)
    check_in_range("damping", damping, 0.0, 1.0, False, False)
    check_in_range("keep_ratio", keep_ratio, 0.0, 1.0, low_inclusive=False)
    check_positive_int("iters", iters)

    token_ids: dict[str, int] = {}
    sequences: list[list[int]] = []
    for sentence in doc.sentences:
        seq = []
        for tok in content_tokens(sentence):
            if tok not in token_ids:
                token_ids[tok] = len(token_ids)
            seq.append(token_ids[tok])
        sequences.append(seq)
    n = len(token_ids)
    if n == 0:
        return []

    adj = np.zeros((n, n), dtype=np.float64)
    for seq in sequences:
        for p, u in enumerate(seq):
            for q in range(p + 1, min(p + window, len(seq))):
                v = seq[q]
                if u != v:
                    adj[u, v] = 1.0
                    adj[v, u] = 1.0

    deg = adj.sum(axis=0)
    W = np.divide(adj, deg, out=np.zeros_like(adj), where=deg > 0)
    scores = np.full(n, 1.0 / n)
    for _ in range(iters):
        updated = (1.0 - damping) / n + damping * (W @ scores)
        if np.max(np.abs(updated - scores)) < 1e-6:
            scores = updated
            break
        scores = updated

    tokens = sorted(token_ids, key=token_ids.get)
    keep = int(np.ceil(keep_ratio * n))
    ranked = sorted(zip(tokens, scores), key=lambda ts: (-ts[1], ts[0]))
    return [tok for tok, _ in ranked[:keep]]


@dataclass
class KeyGraph:
    """Keyword vertices plus one empty vertex; edges weighted by shared sentences.

    Vertex ids 0..len(keywords)-1 are the keywords; the last id is the empty
    vertex.  ``edges`` maps (i, j) with i < j to the positive shared-sentence
    count; ``sentence_attachment[s]`` lists the vertices sentence ``s``
    attaches to (the empty vertex when it matches no keyword).
    """

    keywords: list[str]
    sentences: list[list[str]]
    edges: dict[tuple[int, int], int] = field(default_factory=dict)
    sentence_attachment: list[list[int]] = field(default_factory=list)

    @property
    def n_vertices(self) -> int:
        return len(self.keywords) + 1

    @property
    def empty_vertex(self) -> int:
        return len(self.keywords)

    def neighbor_lists(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Per-vertex neighbor ids and edge weights, ids ascending."""
        neighbors: list[list[tuple[int, int]]] = [[] for _ in range(self.n_vertices)]
        for (i, j), w in self.edges.items():
            neighbors[i].append((j, w))
            neighbors[j].append((i, w))
        idx, wts = [], []
        for entries in neighbors:
            entries.sort()
            idx.append(np.array([e[0] for e in entries], dtype=np.intp))
            wts.append(np.array([e[1] for e in entries], dtype=np.float64))
        return idx, wts

    def canonical_order(self) -> np.ndarray:
        """Vertex order sorted by keyword string, empty vertex pinned last.

        Reordering vertices this way before any arithmetic makes graph-level
        outputs independent of the incoming vertex numbering.
        """
        order = sorted(range(len(self.keywords)), key=lambda i: self.keywords[i])
        return np.array(order + [self.empty_vertex], dtype=np.intp)


def build_keygraph(doc: Document, keywords: list[str]) -> KeyGraph:
    """Assemble the keyword co-occurrence graph of one document."""
    unique = list(dict.fromkeys(keywords))
    vertex_of = {kw: i for i, kw in enumerate(unique)}
    graph = KeyGraph(keywords=unique, sentences=[list(s) for s in doc.sentences])
    for sentence in doc.sentences:
        present = set(sentence)
        matched = sorted(vertex_of[kw] for kw in vertex_of if kw in present)
        if not matched:
            matched = [graph.empty_vertex]
        graph.sentence_attachment.append(matched)
        for a in range(len(matched)):
            if matched[a] == graph.empty_vertex:
                continue
            for b in range(a + 1, len(matched)):
                key = (matched[a], matched[b])
                graph.edges[key] = graph.edges.get(key, 0) + 1
    return graph


def init_vertex_features(graph: KeyGraph, provider: EmbeddingProvider) -> np.ndarray:
    """Each vertex's feature is the sum of its attached sentences' embeddings."""
    features = np.zeros((graph.n_vertices, provider.dimension), dtype=np.float64)
    for s, vertices in enumerate(graph.sentence_attachment):
        emb = provider.embed(graph.sentences[s])
        for v in vertices:
            features[v] += emb
    return features


def document_keygraph(
    doc: Document,
    provider: EmbeddingProvider,
    window: int = 4,
    damping: float = 0.85,
    iters: int = 50,
    keep_ratio: float = 0.3,
) -> tuple[KeyGraph, np.ndarray]:
    """Keyword extraction, graph construction, and vertex features in one step."""
    keywords = textrank_keywords(doc, window, damping, iters, keep_ratio)
    graph = build_keygraph(doc, keywords)
    return graph, init_vertex_features(graph, provider)


def encode_corpus(
    corpus,
    provider: EmbeddingProvider,
    window: int = 4,
    damping: float = 0.85,
    iters: int = 50,
    keep_ratio: float = 0.3,
) -> list[tuple[KeyGraph, np.ndarray]]:
    """KeyGraph and vertex features for every document of a corpus."""
    return [
        document_keygraph(doc, provider, window, damping, iters, keep_ratio)
        for doc in corpus
    ]


def dump_keygraph(graph: KeyGraph, path) -> None:
    """Debug dump: vertex lines then weighted edge triplets."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, kw in enumerate(graph.keywords):
            fh.write(f"v {i} {kw}\n")
        fh.write(f"v {graph.empty_vertex} <empty>\n")
        for (i, j), w in sorted(graph.edges.items()):
            fh.write(f"e {i} {j} {w}\n")
