"""Deterministic synthetic corpus with known-optimal extraction labels.

Each gold summary sentence is a (possibly perturbed) copy of one report
sentence. The generator re-rolls any perturbation that would stop the
source sentence from being the unique best match, so the emitted truth
alignments are argmax-optimal by construction and downstream tests have
exact expected outputs without shipping any real corpus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .corpus import Document, Sentence, SummarySet
from .oracle import OracleAlignment, save_alignments, select_reference
from .rouge import rouge_l_sentence, rouge_l_summary

_SPLIT_PREFIX = {"training": "tr", "validation": "va", "testing": "te"}


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_reports: int = 10
    sentences_per_report: int = 12
    summary_sentences: int = 3
    vocabulary_size: int = 40
    noise_rate: float = 0.0
    summaries_per_report: int = 1
    n_validation_reports: int = 2
    n_testing_reports: int = 2
    min_sentence_tokens: int = 5
    max_sentence_tokens: int = 9

    def __post_init__(self):
        if not 0 <= self.noise_rate < 1:
            raise ValueError(f"noise_rate must be in [0,1), got {self.noise_rate}")
        if self.summary_sentences > self.sentences_per_report:
            raise ValueError("summary_sentences cannot exceed sentences_per_report")
        if self.vocabulary_size < 10:
            raise ValueError("vocabulary_size must be at least 10")
        if not 1 <= self.min_sentence_tokens <= self.max_sentence_tokens <= 60:
            raise ValueError("sentence token bounds must satisfy 1 <= min <= max <= 60")
        if self.n_reports < 1 or self.summaries_per_report < 1:
            raise ValueError("need at least one report and one summary per report")

    @staticmethod
    def from_json(path: str | Path) -> "SynthSpec":
        with Path(path).open("r", encoding="utf-8") as fh:
            raw = json.load(fh)
        known = set(SynthSpec.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown synth spec fields: {sorted(unknown)}")
        return SynthSpec(**raw)


def _is_subsequence(needle, haystack) -> bool:
    it = iter(haystack)
    return all(tok in it for tok in needle)


def _sentence_line(tokens: list[str]) -> str:
    text = " ".join(tokens) + "."
    return text[0].upper() + text[1:]


def _draw_sentence(rng, vocab, spec) -> list[str]:
    length = int(rng.integers(spec.min_sentence_tokens, spec.max_sentence_tokens + 1))
    return [vocab[int(rng.integers(len(vocab)))] for _ in range(length)]


def _best_source(report_sents: list[list[str]], target: list[str]) -> tuple[int, float]:
    best, best_recall = 0, -1.0
    for i, sent in enumerate(report_sents):
        recall = rouge_l_sentence(sent, target).recall
        if recall > best_recall:
            best, best_recall = i, recall
    return best, best_recall


def _perturbed_copy(rng, vocab, spec, report_sents, source_idx) -> list[str]:
    source = report_sents[source_idx]
    for _ in range(50):
        cand = [
            vocab[int(rng.integers(len(vocab)))] if rng.random() < spec.noise_rate else tok
            for tok in source
        ]
        if _best_source(report_sents, cand)[0] == source_idx:
            return cand
    # Verbatim copy: optimal because no report sentence contains another.
    return list(source)


def _make_report(rng, vocab, spec):
    """Report sentences with no mutual containment, plus its summaries."""
    sentences: list[list[str]] = []
    while len(sentences) < spec.sentences_per_report:
        cand = _draw_sentence(rng, vocab, spec)
        if any(_is_subsequence(cand, s) or _is_subsequence(s, cand) for s in sentences):
            continue
        sentences.append(cand)

    summaries = []
    truth_rows = []
    for _ in range(spec.summaries_per_report):
        sources = sorted(rng.choice(spec.sentences_per_report, size=spec.summary_sentences, replace=False).tolist())
        sents = []
        rows = []
        for t, src in enumerate(sources):
            copy = _perturbed_copy(rng, vocab, spec, sentences, src)
            sents.append(copy)
            rows.append((t, src, rouge_l_sentence(sentences[src], copy).recall))
        summaries.append(sents)
        truth_rows.append(rows)
    return sentences, summaries, truth_rows


def _truth_alignment(report_id, sentences, summaries, truth_rows) -> OracleAlignment:
    recalls = []
    for sents, rows in zip(summaries, truth_rows):
        targets = []
        for _, src, _ in rows:
            if src not in targets:
                targets.append(src)
        extracted = [sentences[i] for i in targets]
        recalls.append(rouge_l_summary(extracted, sents).recall)
    chosen = max(range(len(summaries)), key=lambda j: (recalls[j], -j))
    rows = truth_rows[chosen]
    targets = []
    for _, src, _ in rows:
        if src not in targets:
            targets.append(src)
    return OracleAlignment(report_id, chosen, rows, targets)


def _as_example(report_id, sentences, summaries):
    doc = Document(report_id, [Sentence(tuple(s), (0, 1)) for s in sentences], "<memory>")
    sset = SummarySet(
        report_id,
        [(str(j + 1), [Sentence(tuple(s), (0, 1)) for s in sents]) for j, sents in enumerate(summaries)],
    )
    return doc, sset


def generate(spec: SynthSpec, root: str | Path) -> dict[str, list[OracleAlignment]]:
    """Write the corpus tree under root; returns truth alignments per split.

    Same spec and root contents are byte-identical across runs.
    """
    root = Path(root)
    vocab = [f"w{i}" for i in range(spec.vocabulary_size)]
    counts = {
        "training": spec.n_reports,
        "validation": spec.n_validation_reports,
        "testing": spec.n_testing_reports,
    }
    truth: dict[str, list[OracleAlignment]] = {}
    for split_idx, (split, n) in enumerate(counts.items()):
        reports_dir = root / split / "annual_reports"
        summaries_dir = root / split / "gold_summaries"
        reports_dir.mkdir(parents=True, exist_ok=True)
        summaries_dir.mkdir(parents=True, exist_ok=True)
        alignments = []
        for ridx in range(n):
            report_id = f"{_SPLIT_PREFIX[split]}{ridx:04d}"
            for attempt in range(20):
                rng = np.random.default_rng([spec.seed, split_idx, ridx, attempt])
                sentences, summaries, truth_rows = _make_report(rng, vocab, spec)
                alignment = _truth_alignment(report_id, sentences, summaries, truth_rows)
                doc, sset = _as_example(report_id, sentences, summaries)
                if select_reference(doc, sset) == alignment:
                    break
            else:
                raise RuntimeError(f"could not build an argmax-consistent report {report_id}")
            (reports_dir / f"{report_id}.txt").write_text(
                "\n".join(_sentence_line(s) for s in sentences) + "\n", encoding="utf-8"
            )
            for j, sents in enumerate(summaries):
                (summaries_dir / f"{report_id}_{j + 1}.txt").write_text(
                    "\n".join(_sentence_line(s) for s in sents) + "\n", encoding="utf-8"
                )
            alignments.append(alignment)
        save_alignments(alignments, root / f"truth_alignments_{split}.jsonl")
        truth[split] = alignments
    with (root / "synth_spec.json").open("w", encoding="utf-8") as fh:
        json.dump(asdict(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return truth
