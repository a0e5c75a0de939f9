"""Dataset ingestion: sentence splitting, word tokenization, vocabulary.

The on-disk layout is ``<root>/<split>/annual_reports/<report_id>.txt``
plus ``<root>/<split>/gold_summaries/<report_id>_<j>.txt`` for the three
splits training, validation, testing. All text is UTF-8.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

SPLITS = ("training", "validation", "testing")

PAD_ID, UNK_ID, START_ID, END_ID = 0, 1, 2, 3
RESERVED_TOKENS = ("<pad>", "<unk>", "<s>", "</s>")

MAX_SENTENCE_TOKENS = 60
DEFAULT_VOCAB_SIZE = 20000

# Words whose trailing period never ends a sentence. Matched case-sensitively
# against the non-whitespace run ending at the candidate punctuation, after
# stripping any leading brackets or quotes.
ABBREVIATIONS = frozenset({"Mr.", "Mrs.", "Dr.", "St.", "No.", "Fig.", "e.g.", "i.e.", "etc."})

_BOUNDARY = re.compile(r"[.!?]\s+(?=[A-Z0-9])")
_WORD = re.compile(r"[A-Za-z0-9]+")


class DataError(Exception):
    """Raised for unusable dataset layouts or files."""


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    char_span: tuple[int, int]


@dataclass
class Document:
    id: str
    sentences: list[Sentence]
    source_path: str


@dataclass
class SummarySet:
    report_id: str
    summaries: list[tuple[str, list[Sentence]]]

    def sentence_lists(self) -> list[list[list[str]]]:
        return [[list(s.tokens) for s in sents] for _, sents in self.summaries]


@dataclass
class ReportExample:
    document: Document
    summary_set: SummarySet


def split_sentence_spans(text: str) -> list[tuple[int, int]]:
    """Character spans of sentences, trimmed of surrounding whitespace."""
    cuts = [0]
    for match in _BOUNDARY.finditer(text):
        punct = match.start()
        word_start = punct
        while word_start > 0 and not text[word_start - 1].isspace():
            word_start -= 1
        word = text[word_start : punct + 1].lstrip("\"'([{“‘")
        if word in ABBREVIATIONS:
            continue
        cuts.append(punct + 1)
    cuts.append(len(text))
    spans = []
    for lo, hi in zip(cuts, cuts[1:]):
        segment = text[lo:hi]
        stripped = segment.strip()
        if not stripped:
            continue
        start = lo + (len(segment) - len(segment.lstrip()))
        spans.append((start, start + len(stripped)))
    return spans


def split_sentences(text: str) -> list[str]:
    """Sentence substrings of a raw document, in order."""
    return [text[a:b] for a, b in split_sentence_spans(text)]


def tokenize_words(sentence_text: str, max_tokens: int = MAX_SENTENCE_TOKENS) -> list[str]:
    """Lowercased alphanumeric runs, truncated to the first max_tokens.

    Case folding (not plain lower()) keeps the output stable under case
    changes such as the German eszett.
    """
    return _WORD.findall(sentence_text.casefold())[:max_tokens]


def sentences_from_text(text: str, max_tokens: int = MAX_SENTENCE_TOKENS) -> list[Sentence]:
    """Split and tokenize, dropping spans that contain no word characters."""
    out = []
    for start, end in split_sentence_spans(text):
        tokens = tokenize_words(text[start:end], max_tokens)
        if tokens:
            out.append(Sentence(tuple(tokens), (start, end)))
    return out


@dataclass
class Vocab:
    token_to_id: dict[str, int]
    id_to_token: list[str]

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def id_for(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def to_list(self) -> list[str]:
        return list(self.id_to_token)

    @staticmethod
    def from_list(tokens: Sequence[str]) -> "Vocab":
        if tuple(tokens[:4]) != RESERVED_TOKENS:
            raise DataError("vocabulary list must start with the reserved tokens")
        return Vocab({t: i for i, t in enumerate(tokens)}, list(tokens))


def build_vocab(documents: Sequence[Document], max_size: int = DEFAULT_VOCAB_SIZE) -> Vocab:
    """Frequency-ranked vocabulary over document tokens, plus reserved ids.

    Ties in frequency go to the lexicographically smaller token.
    """
    if not documents:
        raise DataError("cannot build a vocabulary from zero documents")
    counts: Counter = Counter()
    for doc in documents:
        for sent in doc.sentences:
            counts.update(sent.tokens)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]
    id_to_token = list(RESERVED_TOKENS) + [tok for tok, _ in ranked]
    return Vocab({t: i for i, t in enumerate(id_to_token)}, id_to_token)


@dataclass
class LoadedDataset:
    training: list[ReportExample] = field(default_factory=list)
    validation: list[ReportExample] = field(default_factory=list)
    testing: list[ReportExample] = field(default_factory=list)

    def split(self, name: str) -> list[ReportExample]:
        if name not in SPLITS:
            raise DataError(f"unknown split: {name!r}")
        return getattr(self, name)

    def manifest(self) -> dict[str, dict[str, int]]:
        out = {}
        for name in SPLITS:
            examples = getattr(self, name)
            out[name] = {
                "reports": len(examples),
                "summaries": sum(len(ex.summary_set.summaries) for ex in examples),
            }
        return out


def _summary_sort_key(name: str):
    try:
        return (0, int(name))
    except ValueError:
        return (1, name)


def _load_split(split_dir: Path, split_name: str, max_tokens: int) -> list[ReportExample]:
    reports_dir = split_dir / "annual_reports"
    summaries_dir = split_dir / "gold_summaries"
    for needed in (reports_dir, summaries_dir):
        if not needed.is_dir():
            raise DataError(f"missing directory: {needed}")

    by_report: dict[str, list[tuple[str, Path]]] = {}
    for path in sorted(summaries_dir.glob("*.txt")):
        stem = path.stem
        if "_" not in stem:
            log.warning("ignoring summary without a _<j> suffix: %s", path.name)
            continue
        report_id, _, summary_id = stem.rpartition("_")
        by_report.setdefault(report_id, []).append((summary_id, path))

    examples = []
    report_paths = sorted(reports_dir.glob("*.txt"), key=lambda p: p.stem)
    for path in report_paths:
        sentences = sentences_from_text(path.read_text(encoding="utf-8"), max_tokens)
        if not sentences:
            log.warning("excluding empty report %s from %s", path.stem, split_name)
            continue
        doc = Document(path.stem, sentences, str(path))
        summaries = []
        for summary_id, spath in sorted(by_report.pop(path.stem, []), key=lambda kv: _summary_sort_key(kv[0])):
            summaries.append((summary_id, sentences_from_text(spath.read_text(encoding="utf-8"), max_tokens)))
        if not summaries and split_name == "training":
            log.warning("excluding training report %s: no gold summaries", path.stem)
            continue
        examples.append(ReportExample(doc, SummarySet(path.stem, summaries)))
    for orphan in sorted(by_report):
        log.warning("gold summaries for unknown report %s in %s", orphan, split_name)
    return examples


def load_dataset(root: str | Path, max_tokens: int = MAX_SENTENCE_TOKENS) -> LoadedDataset:
    """Load all three splits from the standard layout under root."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root is not a directory: {root}")
    loaded = LoadedDataset()
    for name in SPLITS:
        split_dir = root / name
        if not split_dir.is_dir():
            raise DataError(f"missing split directory: {split_dir}")
        setattr(loaded, name, _load_split(split_dir, name, max_tokens))
    return loaded
