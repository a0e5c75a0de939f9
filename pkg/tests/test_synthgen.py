"""Synthetic corpus tests: determinism, optimality, round-trip."""

import hashlib
import json
from pathlib import Path

import pytest

from narrsum.corpus import load_dataset
from narrsum.oracle import build_oracle, load_alignments
from narrsum.synthgen import SynthSpec, generate


def tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            h.update(str(path.relative_to(root)).encode())
            h.update(path.read_bytes())
    return h.hexdigest()


def test_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(noise_rate=1.0)
    with pytest.raises(ValueError):
        SynthSpec(summary_sentences=5, sentences_per_report=4)
    with pytest.raises(ValueError):
        SynthSpec(vocabulary_size=3)
    with pytest.raises(ValueError):
        SynthSpec(min_sentence_tokens=0)


def test_spec_from_json(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"seed": 5, "n_reports": 3, "noise_rate": 0.1}), encoding="utf-8")
    spec = SynthSpec.from_json(path)
    assert (spec.seed, spec.n_reports, spec.noise_rate) == (5, 3, 0.1)
    path.write_text(json.dumps({"seed": 5, "bogus": 1}), encoding="utf-8")
    with pytest.raises(ValueError):
        SynthSpec.from_json(path)


def test_same_seed_byte_identical(tmp_path):
    spec = SynthSpec(seed=11, n_reports=4, sentences_per_report=8, summary_sentences=2, noise_rate=0.1)
    generate(spec, tmp_path / "a")
    generate(spec, tmp_path / "b")
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
    generate(SynthSpec(seed=12, n_reports=4, sentences_per_report=8, summary_sentences=2, noise_rate=0.1), tmp_path / "c")
    assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "c")


def test_noise_free_oracle_recovery(tmp_path):
    spec = SynthSpec(seed=3, n_reports=6, sentences_per_report=10, summary_sentences=3, noise_rate=0.0)
    truth = generate(spec, tmp_path)
    data = load_dataset(tmp_path)
    recovered = build_oracle(data.training)
    assert recovered == truth["training"]
    for alignment in truth["training"]:
        assert all(recall == 1.0 for _, _, recall in alignment.per_sentence)


def test_noisy_oracle_recovery_is_total(tmp_path):
    spec = SynthSpec(
        seed=7, n_reports=10, sentences_per_report=12, summary_sentences=3,
        noise_rate=0.15, summaries_per_report=2,
    )
    truth = generate(spec, tmp_path)
    data = load_dataset(tmp_path)
    recovered = build_oracle(data.training)
    assert recovered == truth["training"]


def test_round_trip_token_sequences(tmp_path):
    spec = SynthSpec(seed=9, n_reports=3, sentences_per_report=6, summary_sentences=2)
    generate(spec, tmp_path)
    data = load_dataset(tmp_path)
    assert len(data.training) == 3
    assert len(data.validation) == spec.n_validation_reports
    assert len(data.testing) == spec.n_testing_reports
    for ex in data.training:
        assert len(ex.document.sentences) == 6
        for sent in ex.document.sentences:
            assert 5 <= len(sent.tokens) <= 9
            assert all(tok.startswith("w") for tok in sent.tokens)
        for _, sents in ex.summary_set.summaries:
            assert len(sents) == 2


def test_truth_files_reload(tmp_path):
    spec = SynthSpec(seed=4, n_reports=3, sentences_per_report=6, summary_sentences=2)
    truth = generate(spec, tmp_path)
    for split in ("training", "validation", "testing"):
        reloaded = load_alignments(tmp_path / f"truth_alignments_{split}.jsonl")
        assert reloaded == truth[split]


def test_targets_are_sorted_and_unique(tmp_path):
    spec = SynthSpec(seed=2, n_reports=5, sentences_per_report=9, summary_sentences=4)
    truth = generate(spec, tmp_path)
    for alignment in truth["training"]:
        targets = alignment.extract_targets
        assert targets == sorted(set(targets))
        assert len(alignment.per_sentence) == 4
