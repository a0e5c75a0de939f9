"""Unsupervised extractive baselines: graph centrality and lead sentences.

Both graph methods score sentences with damped PageRank over a
sentence-similarity graph and then take sentences in descending score
until the word budget is full, re-sorted into document order.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from math import log

import numpy as np

from .corpus import Document

DAMPING = 0.85
LEXRANK_THRESHOLD = 0.1
PAGERANK_TOL = 1e-6
PAGERANK_MAX_ITER = 100
WORD_LIMIT = 1000


@dataclass(frozen=True)
class SentenceGraph:
    """Symmetric non-negative sentence similarities with a zero diagonal."""

    weights: np.ndarray

    def __post_init__(self):
        w = self.weights
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"sentence graph must be square, got {w.shape}")
        if not np.allclose(w, w.T):
            raise ValueError("sentence graph weights must be symmetric")
        if np.any(np.diag(w) != 0.0):
            raise ValueError("sentence graph must not contain self-edges")
        if np.any(w < 0.0):
            raise ValueError("sentence graph weights must be non-negative")

    def __len__(self) -> int:
        return self.weights.shape[0]


def _token_lists(doc: Document) -> list[list[str]]:
    if not doc.sentences:
        raise ValueError(f"document {doc.id!r} has no sentences")
    return [list(s.tokens) for s in doc.sentences]


# ---------------------------------------------------------------- graphs


def textrank_graph(token_lists: list[list[str]]) -> SentenceGraph:
    """Edges weigh shared token types against log sentence lengths."""
    n = len(token_lists)
    sets = [set(toks) for toks in token_lists]
    weights = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            denom = log(len(token_lists[i])) + log(len(token_lists[j]))
            if denom > 0.0:
                weights[i, j] = weights[j, i] = len(sets[i] & sets[j]) / denom
    return SentenceGraph(weights)


def lexrank_graph(token_lists: list[list[str]], threshold: float = LEXRANK_THRESHOLD) -> SentenceGraph:
    """Tf-idf cosine edges, kept only at or above the threshold.

    Document frequency is computed over this document's sentences.
    """
    n = len(token_lists)
    vocabulary = sorted({tok for toks in token_lists for tok in toks})
    index = {tok: k for k, tok in enumerate(vocabulary)}
    df = Counter(tok for toks in token_lists for tok in set(toks))
    idf = np.array([log(n / df[tok]) for tok in vocabulary])
    tf = np.zeros((n, len(vocabulary)))
    for i, toks in enumerate(token_lists):
        for tok, count in Counter(toks).items():
            tf[i, index[tok]] = count
    vectors = tf * idf
    norms = np.linalg.norm(vectors, axis=1)
    weights = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if norms[i] > 0.0 and norms[j] > 0.0:
                cosine = float(vectors[i] @ vectors[j] / (norms[i] * norms[j]))
                if cosine >= threshold:
                    weights[i, j] = weights[j, i] = cosine
    return SentenceGraph(weights)


# ---------------------------------------------------------------- ranking


def power_iteration(
    graph: SentenceGraph,
    damping: float = DAMPING,
    tol: float = PAGERANK_TOL,
    max_iter: int = PAGERANK_MAX_ITER,
) -> np.ndarray:
    """Damped PageRank scores; rows without edges teleport uniformly."""
    n = len(graph)
    row_sums = graph.weights.sum(axis=1)
    transition = np.full((n, n), 1.0 / n)
    linked = row_sums > 0.0
    transition[linked] = graph.weights[linked] / row_sums[linked, None]
    scores = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        updated = (1.0 - damping) / n + damping * (transition.T @ scores)
        done = float(np.abs(updated - scores).sum()) < tol
        scores = updated
        if done:
            break
    return scores


def select_by_score(scores: np.ndarray, lengths: list[int], word_limit: int) -> list[int]:
    """Descending-score greedy fill of the word budget, in document order.

    Ties prefer the earlier sentence. If even the top sentence exceeds
    the budget it is returned alone; emission-time truncation caps it.
    """
    order = sorted(range(len(lengths)), key=lambda i: (-scores[i], i))
    chosen: list[int] = []
    used = 0
    for idx in order:
        if used + lengths[idx] > word_limit:
            if not chosen:
                chosen = [idx]
            break
        chosen.append(idx)
        used += lengths[idx]
    return sorted(chosen)


# ---------------------------------------------------------------- methods


def textrank(
    doc: Document,
    word_limit: int = WORD_LIMIT,
    *,
    damping: float = DAMPING,
    tol: float = PAGERANK_TOL,
    max_iter: int = PAGERANK_MAX_ITER,
) -> list[int]:
    token_lists = _token_lists(doc)
    scores = power_iteration(textrank_graph(token_lists), damping, tol, max_iter)
    return select_by_score(scores, [len(t) for t in token_lists], word_limit)


def lexrank(
    doc: Document,
    word_limit: int = WORD_LIMIT,
    *,
    threshold: float = LEXRANK_THRESHOLD,
    damping: float = DAMPING,
    tol: float = PAGERANK_TOL,
    max_iter: int = PAGERANK_MAX_ITER,
) -> list[int]:
    token_lists = _token_lists(doc)
    scores = power_iteration(lexrank_graph(token_lists, threshold), damping, tol, max_iter)
    return select_by_score(scores, [len(t) for t in token_lists], word_limit)


def lead_n(doc: Document, word_limit: int = WORD_LIMIT) -> list[int]:
    token_lists = _token_lists(doc)
    chosen: list[int] = []
    used = 0
    for i, toks in enumerate(token_lists):
        if used + len(toks) > word_limit:
            if not chosen:
                chosen = [0]
            break
        chosen.append(i)
        used += len(toks)
    return chosen


BASELINE_METHODS = {"textrank": textrank, "lexrank": lexrank, "lead": lead_n}
