"""Command-line pipeline: ingest, align, train, summarize, evaluate.

Subcommands cover the full flow from raw corpus to a score report whose
twelve cells per system (precision/recall/F1 for four metric variants)
are averaged over test documents. Every path is deterministic under a
fixed seed: rerunning a subcommand rewrites byte-identical outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .abstractor import AbstractorModel, DecodeConfig, prepare_abstractor_pairs, train_abstractor
from .baselines import lead_n, lexrank, textrank
from .config import ConfigError, RunConfig, load_config
from .corpus import (
    SPLITS,
    DataError,
    Document,
    LoadedDataset,
    SummarySet,
    Vocab,
    build_vocab,
    load_dataset,
    sentences_from_text,
)
from .extractor import (
    Extraction,
    ExtractorModel,
    doc_to_ids,
    prepare_extractor_examples,
    save_extractions,
    train_extractor,
)
from .oracle import OracleAlignment, build_oracle, load_alignments, save_alignments
from .rl import Critic, train_rl
from .rouge import MetricVariant, RougeScore, best_against_references
from .synthgen import SynthSpec, generate

log = logging.getLogger(__name__)

# Report rows, outermost first: variant blocks, each precision/recall/F1.
REPORT_VARIANTS: list[tuple[str, MetricVariant]] = [
    ("rouge-l", MetricVariant.RL_SUMMARY),
    ("rouge-1", MetricVariant.R1),
    ("rouge-2", MetricVariant.R2),
    ("rouge-su4", MetricVariant.RSU4),
]
REPORT_COMPONENTS = ("precision", "recall", "f1")


# ---------------------------------------------------------------- text output


def truncate_to_word_limit(tokens: Sequence[str], limit: int = 1000) -> list[str]:
    """First min(len(tokens), limit) tokens."""
    if limit < 1:
        raise ValueError("word limit must be at least 1")
    return list(tokens)[:limit]


def truncate_sentences(sentence_tokens: Sequence[Sequence[str]], limit: int) -> list[list[str]]:
    """Apply the word budget across sentences; the crossing one is cut."""
    out: list[list[str]] = []
    used = 0
    for tokens in sentence_tokens:
        if used >= limit:
            break
        kept = truncate_to_word_limit(tokens, limit - used)
        if kept:
            out.append(kept)
            used += len(kept)
    return out


def detokenize(sentence_tokens: Sequence[Sequence[str]]) -> str:
    """Space-join each sentence, close it with a period, capitalize.

    Capitalizing the first word lets the sentence splitter recover the
    same boundaries when the written summary is read back for scoring;
    scoring itself case-folds, so scores are unaffected.
    """
    parts = []
    for tokens in sentence_tokens:
        if not tokens:
            continue
        text = " ".join(tokens)
        if not text.endswith("."):
            text += "."
        parts.append(text[0].upper() + text[1:])
    return " ".join(parts)


# ---------------------------------------------------------------- summarize


def summarize_document(
    document: Document,
    extractor: ExtractorModel,
    abstractor: AbstractorModel,
    vocab: Vocab,
    config: RunConfig,
) -> tuple[Extraction, str]:
    """Extract, paraphrase each pick in pointer order, emit capped text.

    A pointer that stops immediately falls back to its highest-attention
    sentence so every report gets a non-empty extraction.
    """
    ids_lists = doc_to_ids(document, vocab)
    extraction = extractor.extract(document.id, ids_lists, max_steps=config.max_extract_sentences)
    if not extraction.indices:
        extraction = Extraction(document.id, [extractor.fallback_index(ids_lists)], [])
    decode = DecodeConfig(config.beam_width, config.repetition_penalty, config.max_output_tokens)
    rewritten = []
    for idx in extraction.indices:
        tokens = vocab.decode(abstractor.paraphrase(ids_lists[idx], decode))
        if tokens:
            rewritten.append(tokens)
    text = detokenize(truncate_sentences(rewritten, config.word_limit))
    return extraction, text


# ---------------------------------------------------------------- evaluation


@dataclass
class SystemEvaluation:
    system: str
    cells: dict[str, RougeScore]  # variant label -> mean over documents
    per_document: dict[str, dict[str, RougeScore]]
    missing_references: list[str]


@dataclass
class EvaluationReport:
    split: str
    aggregation: str
    systems: list[SystemEvaluation]


def evaluate_system(
    predictions: dict[str, str],
    references: dict[str, SummarySet],
    *,
    system: str = "system",
    aggregation: str = "max",
    max_sentence_tokens: int = 60,
) -> SystemEvaluation:
    """Score one system's summary texts against reference summary sets.

    Each document is scored against its best reference (or the mean,
    per the aggregation), and each report cell is the arithmetic mean
    over scored documents. Predictions without references are excluded
    and reported.
    """
    missing = sorted(
        rid for rid in predictions if rid not in references or not references[rid].summaries
    )
    if missing:
        log.warning("%s: %d predictions without references excluded", system, len(missing))
    scored_ids = sorted(rid for rid in predictions if rid not in set(missing))
    per_document: dict[str, dict[str, RougeScore]] = {}
    for rid in scored_ids:
        candidate = [list(s.tokens) for s in sentences_from_text(predictions[rid], max_sentence_tokens)]
        reference_sets = references[rid].sentence_lists()
        per_document[rid] = {}
        for label, variant in REPORT_VARIANTS:
            score, _ = best_against_references(candidate, reference_sets, variant, aggregation)
            per_document[rid][label] = score
    cells = {}
    for label, _ in REPORT_VARIANTS:
        means = []
        for component in REPORT_COMPONENTS:
            values = [getattr(per_document[rid][label], component) for rid in scored_ids]
            means.append(float(np.mean(values)) if values else 0.0)
        cells[label] = RougeScore(*means)
    return SystemEvaluation(system, cells, per_document, missing)


def report_rows(report: EvaluationReport) -> list[tuple[str, list[float]]]:
    """The twelve metric rows, one column per system."""
    rows = []
    for label, _ in REPORT_VARIANTS:
        for component in REPORT_COMPONENTS:
            values = [getattr(s.cells[label], component) for s in report.systems]
            rows.append((f"{component}({label})", values))
    return rows


def write_report(report: EvaluationReport, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    systems = [s.system for s in report.systems]

    lines = [",".join(["metric"] + systems)]
    for label, values in report_rows(report):
        lines.append(",".join([label] + [f"{v:.6f}" for v in values]))
    (out_dir / "report.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    name_width = max(len(label) for label, _ in report_rows(report))
    col_width = max(12, *(len(s) + 2 for s in systems))
    text = [f"split: {report.split}  aggregation: {report.aggregation}", ""]
    text.append(" " * name_width + "".join(s.rjust(col_width) for s in systems))
    for label, values in report_rows(report):
        text.append(label.ljust(name_width) + "".join(f"{v:.3f}".rjust(col_width) for v in values))
    text.append("")
    for s in report.systems:
        text.append(f"{s.system}: {len(s.per_document)} documents scored, "
                    f"{len(s.missing_references)} predictions without references excluded")
    (out_dir / "report.txt").write_text("\n".join(text) + "\n", encoding="utf-8")

    doc_lines = ["system,report_id,metric,precision,recall,f1"]
    for s in report.systems:
        for rid in sorted(s.per_document):
            for label, _ in REPORT_VARIANTS:
                score = s.per_document[rid][label]
                doc_lines.append(
                    f"{s.system},{rid},{label},{score.precision:.6f},{score.recall:.6f},{score.f1:.6f}"
                )
    (out_dir / "report_documents.csv").write_text("\n".join(doc_lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- shared plumbing


class UsageError(Exception):
    """Command-line misuse; mapped to exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep argparse from exiting with status 2
        raise UsageError(message)


def _add_global_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the seed")
    parser.add_argument("--data-root", dest="data_root", default=argparse.SUPPRESS,
                        help="corpus root directory")
    parser.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default ./out)")


def build_parser() -> _Parser:
    parser = _Parser(prog="narrsum", description=__doc__.splitlines()[0])
    _add_global_flags(parser)
    sub = parser.add_subparsers(dest="command")

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _add_global_flags(p)
        return p

    command("ingest", "load the corpus and write manifest.json")
    command("oracle", "write proxy alignment files per split")
    command("train-extractor", "teacher-forced pointer training")
    command("train-abstractor", "teacher-forced paraphraser training")
    command("train-rl", "actor-critic fine-tuning of the pointer")

    p = command("summarize", "write one summary file per report")
    p.add_argument("--split", default="testing", choices=SPLITS)
    p.add_argument("--extractor", default=argparse.SUPPRESS, help="extractor checkpoint path")
    p.add_argument("--abstractor", default=argparse.SUPPRESS, help="abstractor checkpoint path")

    p = command("baseline", "run an unsupervised baseline over a split")
    p.add_argument("--method", required=True, choices=["textrank", "lexrank", "lead"])
    p.add_argument("--split", default="testing", choices=SPLITS)

    p = command("evaluate", "score prediction directories against references")
    p.add_argument("--pred", nargs="+", default=argparse.SUPPRESS,
                   help="prediction directories (default: <out>/summaries)")
    p.add_argument("--split", default="testing", choices=SPLITS)

    p = command("synthgen", "generate the deterministic synthetic corpus")
    p.add_argument("--spec", default=argparse.SUPPRESS, help="synthesis spec JSON")
    return parser


def _resolve_config(ns: argparse.Namespace) -> RunConfig:
    config = load_config(getattr(ns, "config")) if hasattr(ns, "config") else RunConfig()
    overrides = {}
    if hasattr(ns, "seed"):
        overrides["seed"] = ns.seed
    if hasattr(ns, "data_root"):
        overrides["data_root"] = ns.data_root
    return config.replace(**overrides) if overrides else config


def _require_data_root(config: RunConfig) -> Path:
    if not config.data_root:
        raise UsageError("--data-root (or data_root in the config) is required")
    return Path(config.data_root)


def _load_corpus(config: RunConfig) -> LoadedDataset:
    return load_dataset(_require_data_root(config), config.max_sentence_tokens)


def _training_vocab(dataset: LoadedDataset, config: RunConfig) -> Vocab:
    """Vocabulary over training reports and their gold summaries."""
    docs = [ex.document for ex in dataset.training]
    for ex in dataset.training:
        for summary_id, sentences in ex.summary_set.summaries:
            docs.append(Document(f"{ex.document.id}#{summary_id}", list(sentences), ""))
    return build_vocab(docs, config.vocab_size)


def _load_or_build_alignments(dataset: LoadedDataset, split: str, out_dir: Path) -> list[OracleAlignment]:
    path = out_dir / f"alignments_{split}.jsonl"
    if path.exists():
        return load_alignments(path)
    return build_oracle(dataset.split(split))


def _load_models(
    extractor_path: Path, abstractor_path: Path, config: RunConfig, enforce_config: bool
) -> tuple[ExtractorModel, AbstractorModel, Vocab]:
    for path in (extractor_path, abstractor_path):
        if not path.exists():
            raise DataError(f"missing pretrained checkpoint: {path}")
    extractor, extractor_vocab = ExtractorModel.load(extractor_path)
    abstractor, abstractor_vocab = AbstractorModel.load(abstractor_path)
    if extractor_vocab is None or abstractor_vocab is None:
        raise DataError("pipeline checkpoints must embed their vocabulary")
    if extractor_vocab != abstractor_vocab:
        raise DataError("extractor and abstractor checkpoints disagree on the vocabulary")
    if enforce_config:
        for name, model in (("extractor", extractor), ("abstractor", abstractor)):
            arch = model.arch()
            if (arch["embedding_dim"], arch["hidden_dim"]) != (config.embedding_dim, config.hidden_dim):
                raise DataError(
                    f"{name} checkpoint {arch} does not match the active config "
                    f"(embedding_dim={config.embedding_dim}, hidden_dim={config.hidden_dim})"
                )
    return extractor, abstractor, Vocab.from_list(extractor_vocab)


def _rng(config: RunConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, stream])


# ---------------------------------------------------------------- subcommands


def cmd_ingest(ns, config: RunConfig, out_dir: Path) -> int:
    dataset = _load_corpus(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "data_root": str(_require_data_root(config)),
        "max_sentence_tokens": config.max_sentence_tokens,
        "splits": dataset.manifest(),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    for split, stats in dataset.manifest().items():
        print(f"{split}: {stats['reports']} reports, {stats['summaries']} summaries")
    return 0


def cmd_oracle(ns, config: RunConfig, out_dir: Path) -> int:
    dataset = _load_corpus(config)
    for split in SPLITS:
        alignments = build_oracle(dataset.split(split))
        save_alignments(alignments, out_dir / f"alignments_{split}.jsonl")
        print(f"{split}: {len(alignments)} alignments")
    return 0


def cmd_train_extractor(ns, config: RunConfig, out_dir: Path) -> int:
    dataset = _load_corpus(config)
    vocab = _training_vocab(dataset, config)
    alignments = _load_or_build_alignments(dataset, "training", out_dir)
    train_data = prepare_extractor_examples(dataset.training, alignments, vocab)
    validation = prepare_extractor_examples(
        dataset.validation, build_oracle(dataset.validation), vocab
    )
    model = ExtractorModel(vocab.size, config.embedding_dim, config.hidden_dim, _rng(config, 0))
    out_dir.mkdir(parents=True, exist_ok=True)
    train_log = train_extractor(
        model,
        train_data,
        epochs=config.extractor_epochs,
        lr=config.lr,
        lr_decay=config.lr_decay,
        clip_norm=config.clip_norm,
        batch_size=config.batch_size,
        checkpoint_every=config.checkpoint_every_batches,
        rng=_rng(config, 1),
        validation_data=validation,
        periodic_save=lambda: model.save(out_dir / "extractor_periodic.ckpt", vocab.to_list()),
        frozen_params=("embed",) if config.freeze_embeddings else (),
    )
    model.save(out_dir / "extractor.ckpt", vocab.to_list())
    print(f"extractor: {config.extractor_epochs} epochs, final loss {train_log.epoch_losses[-1]:.4f}")
    return 0


def cmd_train_abstractor(ns, config: RunConfig, out_dir: Path) -> int:
    dataset = _load_corpus(config)
    vocab = _training_vocab(dataset, config)
    alignments = _load_or_build_alignments(dataset, "training", out_dir)
    pairs = prepare_abstractor_pairs(dataset.training, alignments, vocab)
    validation = prepare_abstractor_pairs(dataset.validation, build_oracle(dataset.validation), vocab)
    model = AbstractorModel(vocab.size, config.embedding_dim, config.hidden_dim, _rng(config, 2))
    out_dir.mkdir(parents=True, exist_ok=True)
    train_log = train_abstractor(
        model,
        pairs,
        epochs=config.abstractor_epochs,
        lr=config.lr,
        lr_decay=config.lr_decay,
        clip_norm=config.clip_norm,
        batch_size=config.batch_size,
        checkpoint_every=config.checkpoint_every_batches,
        rng=_rng(config, 3),
        validation_pairs=validation,
        periodic_save=lambda: model.save(out_dir / "abstractor_periodic.ckpt", vocab.to_list()),
        frozen_params=("embed",) if config.freeze_embeddings else (),
    )
    model.save(out_dir / "abstractor.ckpt", vocab.to_list())
    print(f"abstractor: {config.abstractor_epochs} epochs, final loss {train_log.epoch_losses[-1]:.4f}")
    return 0


def cmd_train_rl(ns, config: RunConfig, out_dir: Path) -> int:
    dataset = _load_corpus(config)
    extractor, abstractor, vocab = _load_models(
        out_dir / "extractor.ckpt", out_dir / "abstractor.ckpt", config, hasattr(ns, "config")
    )
    alignments = _load_or_build_alignments(dataset, "training", out_dir)
    critic = Critic(extractor.hidden_dim, _rng(config, 4))
    rows = train_rl(
        dataset.training,
        alignments,
        extractor,
        abstractor,
        critic,
        vocab,
        config,
        rng=_rng(config, 5),
        csv_path=out_dir / "rl_rewards.csv",
    )
    extractor.save(out_dir / "extractor_rl.ckpt", vocab.to_list())
    critic.save(out_dir / "critic.ckpt")
    if config.rl_finetune_abstractor:
        abstractor.save(out_dir / "abstractor_rl.ckpt", vocab.to_list())
    final = rows[-1].mean_reward if rows else float("nan")
    print(f"rl: {len(rows)} episodes, final mean greedy reward {final:.4f}")
    return 0


def cmd_summarize(ns, config: RunConfig, out_dir: Path) -> int:
    dataset = _load_corpus(config)
    extractor_path = Path(getattr(ns, "extractor", out_dir / "extractor.ckpt"))
    abstractor_path = Path(getattr(ns, "abstractor", out_dir / "abstractor.ckpt"))
    extractor, abstractor, vocab = _load_models(
        extractor_path, abstractor_path, config, hasattr(ns, "config")
    )
    target_dir = out_dir / "summaries"
    target_dir.mkdir(parents=True, exist_ok=True)
    extractions = []
    for example in sorted(dataset.split(ns.split), key=lambda ex: ex.document.id):
        extraction, text = summarize_document(example.document, extractor, abstractor, vocab, config)
        (target_dir / f"{example.document.id}.txt").write_text(text + "\n", encoding="utf-8")
        extractions.append(extraction)
    save_extractions(extractions, target_dir / "extractions.jsonl")
    print(f"summarize: {len(extractions)} reports -> {target_dir}")
    return 0


def cmd_baseline(ns, config: RunConfig, out_dir: Path) -> int:
    dataset = _load_corpus(config)
    target_dir = out_dir / f"baseline_{ns.method}"
    target_dir.mkdir(parents=True, exist_ok=True)
    extractions = []
    for example in sorted(dataset.split(ns.split), key=lambda ex: ex.document.id):
        doc = example.document
        if ns.method == "textrank":
            indices = textrank(
                doc, config.word_limit,
                damping=config.damping, tol=config.pagerank_tol, max_iter=config.pagerank_max_iter,
            )
        elif ns.method == "lexrank":
            indices = lexrank(
                doc, config.word_limit,
                threshold=config.lexrank_threshold,
                damping=config.damping, tol=config.pagerank_tol, max_iter=config.pagerank_max_iter,
            )
        else:
            indices = lead_n(doc, config.word_limit)
        sentences = [list(doc.sentences[i].tokens) for i in indices]
        text = detokenize(truncate_sentences(sentences, config.word_limit))
        (target_dir / f"{doc.id}.txt").write_text(text + "\n", encoding="utf-8")
        extractions.append(Extraction(doc.id, indices, []))
    save_extractions(extractions, target_dir / "extractions.jsonl")
    print(f"baseline {ns.method}: {len(extractions)} reports -> {target_dir}")
    return 0


def cmd_evaluate(ns, config: RunConfig, out_dir: Path) -> int:
    dataset = _load_corpus(config)
    references = {ex.document.id: ex.summary_set for ex in dataset.split(ns.split)}
    pred_dirs = [Path(p) for p in getattr(ns, "pred", [out_dir / "summaries"])]
    systems = []
    for pred_dir in pred_dirs:
        if not pred_dir.is_dir():
            raise DataError(f"prediction directory not found: {pred_dir}")
        predictions = {
            path.stem: path.read_text(encoding="utf-8") for path in sorted(pred_dir.glob("*.txt"))
        }
        systems.append(
            evaluate_system(
                predictions,
                references,
                system=pred_dir.name,
                aggregation=config.reference_aggregation,
                max_sentence_tokens=config.max_sentence_tokens,
            )
        )
    report = EvaluationReport(ns.split, config.reference_aggregation, systems)
    write_report(report, out_dir)
    print((out_dir / "report.txt").read_text(encoding="utf-8"), end="")
    return 0


def cmd_synthgen(ns, config: RunConfig, out_dir: Path) -> int:
    root = _require_data_root(config)
    try:
        spec = SynthSpec.from_json(getattr(ns, "spec")) if hasattr(ns, "spec") else SynthSpec()
        if hasattr(ns, "seed"):
            spec = dataclasses.replace(spec, seed=ns.seed)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad synthesis spec: {exc}") from exc
    truth = generate(spec, root)
    for split in SPLITS:
        print(f"{split}: {len(truth[split])} reports -> {root}")
    return 0


HANDLERS = {
    "ingest": cmd_ingest,
    "oracle": cmd_oracle,
    "train-extractor": cmd_train_extractor,
    "train-abstractor": cmd_train_abstractor,
    "train-rl": cmd_train_rl,
    "summarize": cmd_summarize,
    "baseline": cmd_baseline,
    "evaluate": cmd_evaluate,
    "synthgen": cmd_synthgen,
}


def cli(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand; 0 = success, 1 = usage error, 2 = data error."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        print(parser.format_usage(), file=sys.stderr, end="")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help paths
        return int(exc.code or 0)
    if not getattr(ns, "command", None):
        print(parser.format_usage(), file=sys.stderr, end="")
        print("error: a subcommand is required", file=sys.stderr)
        return 1
    try:
        config = _resolve_config(ns)
        out_dir = Path(getattr(ns, "out", "out"))
        return HANDLERS[ns.command](ns, config, out_dir)
    except UsageError as exc:
        print(parser.format_usage(), file=sys.stderr, end="")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
