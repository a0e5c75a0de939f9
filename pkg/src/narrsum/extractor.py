"""Pointer-network sentence extractor over hierarchical BiLSTM encodings.

Each document sentence is encoded word-by-word, then the sentence
vectors are contextualized by a second bidirectional pass. An attention
decoder points at one not-yet-chosen sentence per step, with a learned
stop sentinel appended to the candidate set; selection is capped at a
hard maximum number of steps.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .corpus import Document, Vocab
from .training import HalveOnPlateau, PeriodicSaver, TrainLog, iter_batches, mean_of

log = logging.getLogger(__name__)

MASK_SCORE = -1e9
DEFAULT_MAX_STEPS = 80


@dataclass
class Extraction:
    report_id: str
    indices: list[int]
    step_log_probs: list[float]

    def to_record(self) -> dict:
        return {
            "report_id": self.report_id,
            "indices": list(self.indices),
            "log_probs": [float(p) for p in self.step_log_probs],
        }

    @staticmethod
    def from_record(record: dict) -> "Extraction":
        return Extraction(
            record["report_id"],
            [int(i) for i in record["indices"]],
            [float(p) for p in record["log_probs"]],
        )


@dataclass
class DecodeStep:
    """One pointer step: masked logits, decoder state, realized choice."""

    action: int
    scores: ad.Value
    state: ad.Value
    probs: np.ndarray


def _stable_softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def doc_to_ids(doc: Document, vocab: Vocab) -> list[list[int]]:
    return [vocab.encode(s.tokens) for s in doc.sentences]


class ExtractorModel:
    """Weights plus the forward passes; all state lives in .params."""

    def __init__(self, vocab_size: int, embedding_dim: int, hidden_dim: int, rng: np.random.Generator):
        e, h = embedding_dim, hidden_dim
        self.vocab_size = vocab_size
        self.embedding_dim = e
        self.hidden_dim = h
        u = lambda shape: ad.param(ad.uniform_init(rng, shape))
        self.params: dict[str, ad.Value] = {
            "embed": u((vocab_size, e)),
            "word_f_w": u((4 * h, e + h)),
            "word_f_b": ad.param(ad.lstm_bias_init(h)),
            "word_b_w": u((4 * h, e + h)),
            "word_b_b": ad.param(ad.lstm_bias_init(h)),
            "sent_f_w": u((4 * h, 2 * h + h)),
            "sent_f_b": ad.param(ad.lstm_bias_init(h)),
            "sent_b_w": u((4 * h, 2 * h + h)),
            "sent_b_b": ad.param(ad.lstm_bias_init(h)),
            "dec_w": u((4 * 2 * h, 2 * h + 2 * h)),
            "dec_b": ad.param(ad.lstm_bias_init(2 * h)),
            "att_wq": u((2 * h, h)),
            "att_wk": u((2 * h, h)),
            "att_v": u((h,)),
            "stop_key": u((2 * h,)),
        }

    def arch(self) -> dict:
        return {
            "kind": "extractor",
            "vocab_size": self.vocab_size,
            "embedding_dim": self.embedding_dim,
            "hidden_dim": self.hidden_dim,
        }

    # ------------------------------------------------------------ encoding

    def encode(self, ids_lists: Sequence[Sequence[int]]) -> ad.Value:
        """Contextual sentence keys, with the stop sentinel as the last row."""
        if not ids_lists:
            raise ValueError("cannot encode a document with no sentences")
        p = self.params
        h = self.hidden_dim
        sentence_vecs = []
        for ids in ids_lists:
            if not ids:
                raise ValueError("cannot encode an empty sentence")
            embedded = ad.embedding_lookup(p["embed"], ids)
            words = [ad.take_row(embedded, k) for k in range(len(ids))]
            _, f_last, b_first = ad.bilstm_sequence(words, p["word_f_w"], p["word_f_b"], p["word_b_w"], p["word_b_b"], h)
            sentence_vecs.append(ad.concat([f_last, b_first]))
        contextual, _, _ = ad.bilstm_sequence(
            sentence_vecs, p["sent_f_w"], p["sent_f_b"], p["sent_b_w"], p["sent_b_b"], h
        )
        return ad.stack_rows(list(contextual) + [p["stop_key"]])

    # ------------------------------------------------------------ decoding

    def decode(
        self,
        keys: ad.Value,
        n_sentences: int,
        choose: Callable[[np.ndarray, int], int],
        max_steps: int = DEFAULT_MAX_STEPS,
    ) -> list[DecodeStep]:
        """Pointer steps until stop, exhaustion, or the step cap.

        choose() sees the masked probability vector (stop at position
        n_sentences) and must return one unmasked index.
        """
        p = self.params
        h2 = 2 * self.hidden_dim
        stop = n_sentences
        key_proj = ad.matmul(keys, p["att_wk"])
        state = ad.const(np.zeros(h2))
        cell = ad.const(np.zeros(h2))
        prev = ad.const(np.zeros(h2))
        chosen: list[int] = []
        steps: list[DecodeStep] = []
        for t in range(max_steps):
            state, cell = ad.lstm_cell(prev, state, cell, p["dec_w"], p["dec_b"])
            mask = np.zeros(n_sentences + 1)
            mask[chosen] = MASK_SCORE
            scores = ad.matmul(ad.tanh(ad.add_row(key_proj, ad.matmul(state, p["att_wq"]))), p["att_v"])
            masked = ad.add(scores, ad.const(mask))
            probs = _stable_softmax(masked.data)
            action = int(choose(probs, t))
            steps.append(DecodeStep(action, masked, state, probs))
            if action == stop:
                break
            chosen.append(action)
            if len(chosen) == n_sentences:
                break
            prev = ad.take_row(keys, action)
        return steps

    def extract(
        self,
        report_id: str,
        ids_lists: Sequence[Sequence[int]],
        max_steps: int = DEFAULT_MAX_STEPS,
        mode: str = "greedy",
        rng: np.random.Generator | None = None,
    ) -> Extraction:
        if mode not in ("greedy", "sample"):
            raise ValueError(f"unknown decode mode: {mode!r}")
        if mode == "sample" and rng is None:
            raise ValueError("sampled extraction needs an rng")
        keys = self.encode(ids_lists)

        def choose(probs: np.ndarray, _t: int) -> int:
            if mode == "greedy":
                return int(np.argmax(probs))
            return int(rng.choice(len(probs), p=probs / probs.sum()))

        steps = self.decode(keys, len(ids_lists), choose, max_steps)
        stop = len(ids_lists)
        indices = [s.action for s in steps if s.action != stop]
        log_probs = [float(np.log(s.probs[s.action])) for s in steps]
        return Extraction(report_id, indices, log_probs)

    def fallback_index(self, ids_lists: Sequence[Sequence[int]]) -> int:
        """Highest first-step attention among real sentences; used when
        the pointer stops before choosing anything."""
        keys = self.encode(ids_lists)
        steps = self.decode(keys, len(ids_lists), lambda probs, _t: int(np.argmax(probs[:-1])), max_steps=1)
        return steps[0].action

    # ------------------------------------------------------------ training

    def teacher_forced_loss(self, ids_lists: Sequence[Sequence[int]], targets: Sequence[int]) -> ad.Value:
        """Mean cross-entropy along the forced path targets + stop."""
        keys = self.encode(ids_lists)
        stop = len(ids_lists)
        forced = list(targets) + [stop]
        it = iter(forced)
        losses: list[ad.Value] = []
        steps = self.decode(keys, len(ids_lists), lambda _p, _t: next(it), max_steps=len(forced))
        for step, target in zip(steps, forced):
            losses.append(ad.cross_entropy(step.scores, int(target)))
        total = losses[0]
        for node in losses[1:]:
            total = ad.add(total, node)
        return ad.scale(total, 1.0 / len(losses))

    # ------------------------------------------------------------ persistence

    def save(self, path: str | Path, vocab: Sequence[str] | None = None) -> None:
        ad.save_checkpoint(path, self.params, self.arch(), vocab)

    @classmethod
    def load(cls, path: str | Path) -> tuple["ExtractorModel", list[str] | None]:
        arrays, cfg, vocab = ad.load_checkpoint(path)
        if cfg.get("kind") != "extractor":
            raise ValueError(f"checkpoint at {path} is not an extractor")
        model = cls(cfg["vocab_size"], cfg["embedding_dim"], cfg["hidden_dim"], np.random.default_rng(0))
        for name, arr in arrays.items():
            if name not in model.params:
                raise ValueError(f"unexpected parameter {name!r} in checkpoint")
            if model.params[name].data.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name!r} in checkpoint")
            model.params[name].data[...] = arr
        return model, vocab


# ---------------------------------------------------------------- training loop


def prepare_extractor_examples(examples, alignments, vocab: Vocab):
    """Join loaded reports with their alignments into (id, ids, targets)."""
    by_id = {ex.document.id: ex for ex in examples}
    prepared = []
    for alignment in alignments:
        ex = by_id.get(alignment.report_id)
        if ex is None:
            log.warning("alignment for unknown report %s ignored", alignment.report_id)
            continue
        if not alignment.extract_targets:
            log.warning("report %s skipped: empty extraction targets", alignment.report_id)
            continue
        prepared.append((alignment.report_id, doc_to_ids(ex.document, vocab), list(alignment.extract_targets)))
    return prepared


def train_extractor(
    model: ExtractorModel,
    train_data: Sequence[tuple[str, list[list[int]], list[int]]],
    *,
    epochs: int,
    lr: float = 0.001,
    lr_decay: float = 0.5,
    clip_norm: float = 1.0,
    batch_size: int = 16,
    checkpoint_every: int = 16,
    rng: np.random.Generator,
    validation_data: Sequence[tuple[str, list[list[int]], list[int]]] = (),
    periodic_save: Callable[[], None] | None = None,
    frozen_params: Sequence[str] = (),
) -> TrainLog:
    """Teacher-forced pointer training with plateau-halved learning rate."""
    if not train_data:
        raise ValueError("no extractor training examples")
    trainable = {k: v for k, v in model.params.items() if k not in frozen_params}
    optimizer = ad.Adam(trainable, lr=lr, clip_norm=clip_norm)
    schedule = HalveOnPlateau(optimizer, lr_decay)
    train_log = TrainLog()
    saver = PeriodicSaver(checkpoint_every, periodic_save, train_log)

    for _ in range(epochs):
        epoch_losses = []
        for batch in iter_batches(len(train_data), batch_size, rng):
            optimizer.zero_grad()
            for idx in batch:
                _, ids_lists, targets = train_data[idx]
                loss = ad.scale(model.teacher_forced_loss(ids_lists, targets), 1.0 / len(batch))
                ad.backward(loss)
                epoch_losses.append(float(loss.data) * len(batch))
            optimizer.step()
            saver.batch_done()
        val_losses = [
            float(model.teacher_forced_loss(ids_lists, targets).data)
            for _, ids_lists, targets in validation_data
        ]
        train_loss = mean_of(epoch_losses)
        watched = mean_of(val_losses) if validation_data else train_loss
        train_log.record_epoch(train_loss, watched if validation_data else float("nan"), optimizer.lr)
        schedule.epoch_end(watched)
    return train_log


# ---------------------------------------------------------------- persistence of runs


def save_extractions(extractions: Sequence[Extraction], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for ex in extractions:
            fh.write(json.dumps(ex.to_record(), separators=(",", ":")) + "\n")


def load_extractions(path: str | Path) -> list[Extraction]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(Extraction.from_record(json.loads(line)))
    return out
