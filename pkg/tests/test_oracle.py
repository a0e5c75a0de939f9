"""Proxy-label tests: alignment argmax, reference choice, persistence."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from narrsum.corpus import Document, Sentence, SummarySet
from narrsum.oracle import (
    OracleAlignment,
    abstractor_pairs,
    align_summary,
    build_oracle,
    load_alignments,
    save_alignments,
    select_reference,
)
from narrsum.corpus import ReportExample
from narrsum.rouge import lcs_length, rouge_l_sentence, rouge_l_summary


def make_sentences(token_lists):
    return [Sentence(tuple(toks), (0, 1)) for toks in token_lists]


def make_doc(doc_id, token_lists):
    return Document(doc_id, make_sentences(token_lists), f"{doc_id}.txt")


# ---------------------------------------------------------------- align_summary


def test_align_verbatim_copies():
    doc = make_doc("r", [["profit", "rose"], ["costs", "fell"], ["cash", "grew"]])
    summary = make_sentences([["profit", "rose"], ["costs", "fell"]])
    rows = align_summary(doc, summary)
    assert rows == [(0, 0, 1.0), (1, 1, 1.0)]


def test_align_tie_prefers_lowest_index():
    doc = make_doc("r", [["profit", "up"], ["profit", "up", "again"]])
    summary = make_sentences([["profit", "up"]])
    assert align_summary(doc, summary) == [(0, 0, 1.0)]


def test_align_zero_overlap_falls_to_index_zero():
    doc = make_doc("r", [["alpha"], ["beta"]])
    summary = make_sentences([["zeta", "eta"]])
    assert align_summary(doc, summary) == [(0, 0, 0.0)]


token_lists = st.lists(
    st.lists(st.sampled_from("abcde"), min_size=1, max_size=5), min_size=1, max_size=6
)


@settings(max_examples=150)
@given(token_lists, token_lists)
def test_align_dominance(report_sents, summary_sents):
    doc = make_doc("r", report_sents)
    summary = make_sentences(summary_sents)
    for t, j, recall in align_summary(doc, summary):
        target = summary_sents[t]
        assert recall == pytest.approx(lcs_length(report_sents[j], target) / len(target))
        for other in report_sents:
            assert lcs_length(other, target) / len(target) <= recall + 1e-12


# ---------------------------------------------------------------- select_reference


def test_select_single_summary():
    doc = make_doc("r", [["a", "b"], ["c", "d"]])
    sset = SummarySet("r", [("1", make_sentences([["a", "b"]]))])
    alignment = select_reference(doc, sset)
    assert alignment.chosen_summary == 0
    assert alignment.extract_targets == [0]


def test_select_prefers_reconstructable_summary():
    doc = make_doc("r", [["profit", "rose", "sharply"], ["costs", "fell", "hard"]])
    disjoint = make_sentences([["zebra", "quark"]])
    verbatim = make_sentences([["profit", "rose", "sharply"]])
    sset = SummarySet("r", [("1", disjoint), ("2", verbatim)])
    alignment = select_reference(doc, sset)
    assert alignment.chosen_summary == 1
    assert alignment.per_sentence == [(0, 0, 1.0)]


def test_select_matches_exhaustive_recomputation():
    rng = np.random.default_rng(7)
    vocab = [f"w{i}" for i in range(12)]
    report_sents = [[vocab[rng.integers(0, 12)] for _ in range(6)] for _ in range(10)]
    doc = make_doc("r", report_sents)
    summaries = []
    for j in range(3):
        sents = [[vocab[rng.integers(0, 12)] for _ in range(5)] for _ in range(3)]
        summaries.append((str(j + 1), make_sentences(sents)))
    sset = SummarySet("r", summaries)
    alignment = select_reference(doc, sset)

    recalls = []
    for _, sentences in summaries:
        rows = align_summary(doc, sentences)
        targets = []
        for _, jt, _ in rows:
            if jt not in targets:
                targets.append(jt)
        extracted = [report_sents[i] for i in targets]
        reference = [list(s.tokens) for s in sentences]
        recalls.append(rouge_l_summary(extracted, reference).recall)
    expected = max(range(3), key=lambda j: (recalls[j], -j))
    assert alignment.chosen_summary == expected


def test_select_tie_prefers_lowest_summary():
    doc = make_doc("r", [["a", "b"]])
    same = [("1", make_sentences([["a", "b"]])), ("2", make_sentences([["a", "b"]]))]
    assert select_reference(doc, SummarySet("r", same)).chosen_summary == 0


# ---------------------------------------------------------------- build + persist


def _examples():
    doc1 = make_doc("r1", [["profit", "rose"], ["costs", "fell"]])
    set1 = SummarySet("r1", [("1", make_sentences([["profit", "rose"], ["costs", "fell"]]))])
    doc2 = make_doc("r2", [["cash", "grew"], ["debt", "shrank"]])
    set2 = SummarySet("r2", [("1", make_sentences([["debt", "shrank"]]))])
    return [ReportExample(doc1, set1), ReportExample(doc2, set2)]


def test_build_oracle_round_trip(tmp_path):
    alignments = build_oracle(_examples())
    assert [a.report_id for a in alignments] == ["r1", "r2"]
    assert alignments[0].extract_targets == [0, 1]
    assert alignments[1].extract_targets == [1]

    path = tmp_path / "alignments.jsonl"
    save_alignments(alignments, path)
    first = path.read_bytes()
    save_alignments(alignments, path)
    assert path.read_bytes() == first

    reloaded = load_alignments(path)
    assert reloaded == alignments


def test_build_oracle_skips_summaryless(caplog):
    examples = _examples()
    examples.append(ReportExample(make_doc("r3", [["lонely"]]), SummarySet("r3", [])))
    import logging

    with caplog.at_level(logging.WARNING):
        alignments = build_oracle(examples)
    assert [a.report_id for a in alignments] == ["r1", "r2"]
    assert any("r3" in rec.message for rec in caplog.records)


def test_targets_dedup_keeps_first_occurrence():
    doc = make_doc("r", [["alpha", "beta"], ["gamma", "delta"]])
    summary = make_sentences([["gamma"], ["alpha"], ["gamma", "delta"]])
    sset = SummarySet("r", [("1", summary)])
    alignment = select_reference(doc, sset)
    assert [j for _, j, _ in alignment.per_sentence] == [1, 0, 1]
    assert alignment.extract_targets == [1, 0]
    assert len(alignment.extract_targets) <= len(alignment.per_sentence)


def test_abstractor_pairs_duplicates_included():
    doc = make_doc("r", [["alpha", "beta"], ["gamma", "delta"]])
    summary = make_sentences([["gamma"], ["alpha"], ["gamma", "delta"]])
    sset = SummarySet("r", [("1", summary)])
    alignment = select_reference(doc, sset)
    pairs = abstractor_pairs(alignment, doc, sset)
    assert pairs == [
        (["gamma", "delta"], ["gamma"]),
        (["alpha", "beta"], ["alpha"]),
        (["gamma", "delta"], ["gamma", "delta"]),
    ]


def test_record_round_trip_preserves_fields():
    alignment = OracleAlignment("rep", 2, [(0, 3, 0.5), (1, 1, 1.0)], [3, 1])
    again = OracleAlignment.from_record(alignment.to_record())
    assert again == alignment
