"""Graph-baseline tests: edge math, PageRank, budgeted selection."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from narrsum.baselines import (
    SentenceGraph,
    lead_n,
    lexrank,
    lexrank_graph,
    power_iteration,
    select_by_score,
    textrank,
    textrank_graph,
)
from narrsum.corpus import Document, Sentence


def mk_doc(token_lists, doc_id="d"):
    sentences = tuple(Sentence(tokens=tuple(toks), char_span=(0, 0)) for toks in token_lists)
    return Document(id=doc_id, sentences=sentences, source_path=None)


def dense_pagerank(graph: SentenceGraph, damping=0.85) -> np.ndarray:
    """Principal eigenvector of the full transition matrix, L1-normalized."""
    n = len(graph)
    row_sums = graph.weights.sum(axis=1)
    transition = np.full((n, n), 1.0 / n)
    linked = row_sums > 0.0
    transition[linked] = graph.weights[linked] / row_sums[linked, None]
    google = (1.0 - damping) / n + damping * transition.T
    eigvals, eigvecs = np.linalg.eig(google)
    principal = np.argmax(eigvals.real)
    vec = np.abs(eigvecs[:, principal].real)
    return vec / vec.sum()


# ---------------------------------------------------------------- graphs


def test_textrank_edge_weight_frozen():
    g = textrank_graph([["a", "b", "c"], ["b", "c", "d"]])
    assert g.weights[0, 1] == pytest.approx(2.0 / (2.0 * math.log(3)))


def test_textrank_zero_denominator_gives_zero_edge():
    g = textrank_graph([["a"], ["a"]])
    assert g.weights[0, 1] == 0.0


def test_textrank_counts_shared_types_not_occurrences():
    g = textrank_graph([["a", "a", "b"], ["a", "a", "c"]])
    assert g.weights[0, 1] == pytest.approx(1.0 / (2.0 * math.log(3)))


def test_lexrank_cosine_frozen():
    # idf: a = ln(3/2), others = ln 3. cos(s0, s1) carried only by "a".
    g = lexrank_graph([["a", "b"], ["a", "c"], ["d", "e"]])
    ia, ib = math.log(3 / 2), math.log(3)
    expected = ia * ia / (ia * ia + ib * ib)
    assert g.weights[0, 1] == pytest.approx(expected)
    assert g.weights[0, 2] == 0.0


def test_lexrank_threshold_prunes_weak_edges():
    sentences = [
        ["a", "b", "c", "d", "e"],
        ["a", "f", "g", "h", "i"],
        ["j", "k"],
    ]
    pruned = lexrank_graph(sentences, threshold=0.1)
    kept = lexrank_graph(sentences, threshold=0.01)
    assert pruned.weights[0, 1] == 0.0
    assert kept.weights[0, 1] > 0.0


def test_graph_validation():
    with pytest.raises(ValueError, match="square"):
        SentenceGraph(np.zeros((2, 3)))
    with pytest.raises(ValueError, match="symmetric"):
        SentenceGraph(np.array([[0.0, 1.0], [0.5, 0.0]]))
    with pytest.raises(ValueError, match="self-edges"):
        SentenceGraph(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ValueError, match="non-negative"):
        SentenceGraph(np.array([[0.0, -1.0], [-1.0, 0.0]]))


# ---------------------------------------------------------------- pagerank


def hub_doc():
    # Sentence 2 shares one token with every other; the rest are disjoint.
    return mk_doc(
        [
            ["h0", "x0", "y0"],
            ["h1", "x1", "y1"],
            ["h0", "h1", "h2", "h3"],
            ["h2", "x2", "y2"],
            ["h3", "x3", "y3"],
        ]
    )


def test_hub_ranked_first_textrank():
    doc = hub_doc()
    graph = textrank_graph([list(s.tokens) for s in doc.sentences])
    scores = power_iteration(graph)
    assert int(np.argmax(scores)) == 2
    assert np.allclose(scores, dense_pagerank(graph), atol=1e-5)


def test_hub_ranked_first_lexrank():
    doc = hub_doc()
    graph = lexrank_graph([list(s.tokens) for s in doc.sentences], threshold=0.01)
    scores = power_iteration(graph)
    assert int(np.argmax(scores)) == 2
    assert np.allclose(scores, dense_pagerank(graph), atol=1e-5)


def test_disconnected_graph_uniform_scores():
    graph = textrank_graph([["a", "b"], ["c", "d"], ["e", "f"]])
    scores = power_iteration(graph)
    assert np.allclose(scores, 1.0 / 3.0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_power_iteration_matches_dense_solve(data):
    n = data.draw(st.integers(min_value=1, max_value=10))
    rng = np.random.default_rng(data.draw(st.integers(min_value=0, max_value=10_000)))
    raw = rng.uniform(0.0, 1.0, size=(n, n))
    raw = (raw + raw.T) / 2.0
    np.fill_diagonal(raw, 0.0)
    # Randomly disconnect some nodes to exercise the dangling rule.
    for i in range(n):
        if rng.uniform() < 0.3:
            raw[i, :] = 0.0
            raw[:, i] = 0.0
    graph = SentenceGraph(raw)
    scores = power_iteration(graph)
    assert np.all(scores >= 0.0)
    assert abs(scores.sum() - 1.0) <= 1e-9
    assert np.allclose(scores, dense_pagerank(graph), atol=1e-5)


def test_identical_sentences_equal_scores():
    graph = lexrank_graph([["a", "b"], ["a", "b"], ["a", "b"]])
    scores = power_iteration(graph)
    assert np.allclose(scores, scores[0])


# ---------------------------------------------------------------- selection


def test_select_by_score_budget_and_order():
    scores = np.array([0.1, 0.5, 0.2, 0.4])
    lengths = [10, 10, 10, 10]
    assert select_by_score(scores, lengths, 25) == [1, 3]
    assert select_by_score(scores, lengths, 100) == [0, 1, 2, 3]


def test_select_by_score_stops_at_first_violation():
    # Highest score is long; the budget stops there even though a later
    # shorter sentence would fit.
    scores = np.array([0.9, 0.5, 0.4])
    lengths = [10, 20, 2]
    assert select_by_score(scores, lengths, 15) == [0]


def test_select_by_score_tie_prefers_lower_index():
    scores = np.array([0.5, 0.5, 0.5])
    assert select_by_score(scores, [10, 10, 10], 20) == [0, 1]


def test_select_top_alone_over_budget_still_returned():
    scores = np.array([0.2, 0.9])
    assert select_by_score(scores, [5, 50], 10) == [1]


# ---------------------------------------------------------------- methods


def test_single_sentence_doc():
    doc = mk_doc([["only", "sentence", "here"]])
    assert textrank(doc) == [0]
    assert lexrank(doc) == [0]
    assert lead_n(doc) == [0]


def test_empty_doc_rejected():
    doc = mk_doc([])
    for method in (textrank, lexrank, lead_n):
        with pytest.raises(ValueError, match="no sentences"):
            method(doc)


def test_lead_arithmetic():
    doc = mk_doc([["w"] * 10, ["w"] * 10, ["w"] * 10])
    assert lead_n(doc, word_limit=25) == [0, 1]
    assert lead_n(doc, word_limit=100) == [0, 1, 2]


def test_lead_first_sentence_over_limit():
    doc = mk_doc([["w"] * 30, ["w"] * 2])
    assert lead_n(doc, word_limit=5) == [0]


def test_methods_output_document_order():
    doc = hub_doc()
    picked = textrank(doc, word_limit=7)  # hub (4 tokens) + one 3-token sentence
    assert picked == sorted(picked)
    assert 2 in picked


def test_disconnected_selection_prefers_leading_ties():
    doc = mk_doc([["a", "b"], ["c", "d"], ["e", "f"]])
    assert textrank(doc, word_limit=4) == [0, 1]
