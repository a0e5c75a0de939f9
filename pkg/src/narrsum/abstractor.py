"""Sentence-level attention seq2seq paraphraser.

Maps one extracted report sentence to one summary sentence. Decoding is
beam search with a repetition penalty: the log-probability of a token
already present in a hypothesis is reduced by ln(penalty) before
ranking. A width-1 greedy lane always runs alongside the beam so the
returned hypothesis never scores below greedy.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .corpus import END_ID, PAD_ID, START_ID, Vocab
from .training import HalveOnPlateau, PeriodicSaver, TrainLog, iter_batches, mean_of

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecodeConfig:
    beam_width: int = 2
    repetition_penalty: float = 2.0
    max_output_tokens: int = 60

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be at least 1")
        if self.repetition_penalty < 1.0:
            raise ValueError("repetition_penalty must be at least 1")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be at least 1")


@dataclass
class _Hypothesis:
    tokens: list[int]
    present: frozenset[int]
    score: float
    state: tuple
    finished: bool


def _log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max()
    return shifted - np.log(np.exp(shifted).sum())


class AbstractorModel:
    """Encoder-decoder weights plus forward passes; state in .params."""

    def __init__(self, vocab_size: int, embedding_dim: int, hidden_dim: int, rng: np.random.Generator):
        e, h = embedding_dim, hidden_dim
        self.vocab_size = vocab_size
        self.embedding_dim = e
        self.hidden_dim = h
        u = lambda shape: ad.param(ad.uniform_init(rng, shape))
        self.params: dict[str, ad.Value] = {
            "embed": u((vocab_size, e)),
            "enc_f_w": u((4 * h, e + h)),
            "enc_f_b": ad.param(ad.lstm_bias_init(h)),
            "enc_b_w": u((4 * h, e + h)),
            "enc_b_b": ad.param(ad.lstm_bias_init(h)),
            "dec_w": u((4 * 2 * h, (e + 2 * h) + 2 * h)),
            "dec_b": ad.param(ad.lstm_bias_init(2 * h)),
            "att_wq": u((2 * h, h)),
            "att_wk": u((2 * h, h)),
            "att_v": u((h,)),
            "out_w": u((vocab_size, 4 * h)),
            "out_b": u((vocab_size,)),
        }

    def arch(self) -> dict:
        return {
            "kind": "abstractor",
            "vocab_size": self.vocab_size,
            "embedding_dim": self.embedding_dim,
            "hidden_dim": self.hidden_dim,
        }

    # ------------------------------------------------------------ forward

    def encode(self, ids: Sequence[int]) -> tuple[ad.Value, ad.Value]:
        """Source keys (T, 2H) and the initial decoder state (2H,)."""
        if not ids:
            raise ValueError("cannot paraphrase an empty sentence")
        p = self.params
        embedded = ad.embedding_lookup(p["embed"], ids)
        words = [ad.take_row(embedded, k) for k in range(len(ids))]
        outputs, f_last, b_first = ad.bilstm_sequence(
            words, p["enc_f_w"], p["enc_f_b"], p["enc_b_w"], p["enc_b_b"], self.hidden_dim
        )
        return ad.stack_rows(outputs), ad.concat([f_last, b_first])

    def _step(self, keys: ad.Value, token_id: int, state: tuple) -> tuple[ad.Value, tuple]:
        """One decoder step from (h, c, context); returns logits, new state."""
        p = self.params
        h, c, context = state
        token_vec = ad.take_row(p["embed"], token_id)
        h, c = ad.lstm_cell(ad.concat([token_vec, context]), h, c, p["dec_w"], p["dec_b"])
        _, context = ad.bahdanau_attention(h, keys, p["att_wq"], p["att_wk"], p["att_v"])
        logits = ad.add(ad.matmul(p["out_w"], ad.concat([h, context])), p["out_b"])
        return logits, (h, c, context)

    def _initial_state(self, init: ad.Value) -> tuple:
        h2 = 2 * self.hidden_dim
        return (init, ad.const(np.zeros(h2)), ad.const(np.zeros(h2)))

    def _forced_logits(self, src_ids: Sequence[int], tgt_ids: Sequence[int]) -> list[ad.Value]:
        keys, init = self.encode(src_ids)
        state = self._initial_state(init)
        logits_per_step = []
        for prev in [START_ID] + list(tgt_ids):
            logits, state = self._step(keys, prev, state)
            logits_per_step.append(logits)
        return logits_per_step

    # ------------------------------------------------------------ training

    def teacher_forced_loss(self, src_ids: Sequence[int], tgt_ids: Sequence[int]) -> ad.Value:
        """Mean cross-entropy over target tokens plus the end marker."""
        targets = list(tgt_ids) + [END_ID]
        nodes = self._forced_logits(src_ids, tgt_ids)
        total = ad.cross_entropy(nodes[0], targets[0])
        for logits, target in zip(nodes[1:], targets[1:]):
            total = ad.add(total, ad.cross_entropy(logits, target))
        return ad.scale(total, 1.0 / len(targets))

    def teacher_forced_accuracy(self, pairs: Sequence[tuple[list[int], list[int]]]) -> float:
        """Fraction of forced steps whose argmax equals the target token."""
        hits = total = 0
        for src, tgt in pairs:
            targets = list(tgt) + [END_ID]
            for logits, target in zip(self._forced_logits(src, tgt), targets):
                hits += int(np.argmax(logits.data) == target)
                total += 1
        return hits / total if total else 0.0

    # ------------------------------------------------------------ decoding

    def paraphrase(self, src_ids: Sequence[int], decode: DecodeConfig = DecodeConfig()) -> list[int]:
        """Best hypothesis under beam search with the repetition penalty."""
        tokens, _, _ = self.paraphrase_scored(src_ids, decode)
        return tokens

    def paraphrase_scored(
        self, src_ids: Sequence[int], decode: DecodeConfig = DecodeConfig()
    ) -> tuple[list[int], float, bool]:
        """Tokens, penalized score, and finished flag of the best hypothesis.

        Finished hypotheses (end marker emitted) are preferred; among the
        candidates the best penalized score wins, and the result never
        scores below the greedy lane's hypothesis.
        """
        keys, init = self.encode(src_ids)
        root = _Hypothesis([], frozenset(), 0.0, self._initial_state(init), False)
        greedy = self._greedy_lane(keys, root, decode)
        pool = self._beam(keys, root, decode) + [greedy]
        finished = [h for h in pool if h.finished]
        candidates = finished if finished else pool
        best = max(candidates, key=lambda h: h.score)
        if best.score < greedy.score:
            best = greedy
        return list(best.tokens), best.score, best.finished

    def _adjusted_logp(self, logits: ad.Value, hyp: _Hypothesis, decode: DecodeConfig) -> np.ndarray:
        logp = _log_softmax(logits.data)
        logp[PAD_ID] = -np.inf
        logp[START_ID] = -np.inf
        penalty = np.log(decode.repetition_penalty)
        if penalty > 0.0 and hyp.present:
            logp[list(hyp.present)] -= penalty
        return logp

    def _extend(self, hyp: _Hypothesis, token: int, score: float, state: tuple) -> _Hypothesis:
        if token == END_ID:
            return _Hypothesis(hyp.tokens, hyp.present, hyp.score + score, state, True)
        return _Hypothesis(
            hyp.tokens + [token], hyp.present | {token}, hyp.score + score, state, False
        )

    def _greedy_lane(self, keys: ad.Value, root: _Hypothesis, decode: DecodeConfig) -> _Hypothesis:
        hyp = root
        for _ in range(decode.max_output_tokens):
            prev = hyp.tokens[-1] if hyp.tokens else START_ID
            logits, state = self._step(keys, prev, hyp.state)
            adjusted = self._adjusted_logp(logits, hyp, decode)
            token = int(np.argmax(adjusted))
            hyp = self._extend(hyp, token, float(adjusted[token]), state)
            if hyp.finished:
                break
        return hyp

    def _beam(self, keys: ad.Value, root: _Hypothesis, decode: DecodeConfig) -> list[_Hypothesis]:
        width = decode.beam_width
        active = [root]
        finished: list[_Hypothesis] = []
        for _ in range(decode.max_output_tokens):
            extensions: list[_Hypothesis] = []
            for hyp in active:
                prev = hyp.tokens[-1] if hyp.tokens else START_ID
                logits, state = self._step(keys, prev, hyp.state)
                adjusted = self._adjusted_logp(logits, hyp, decode)
                top = np.argsort(adjusted)[::-1][:width]
                for token in top:
                    extensions.append(self._extend(hyp, int(token), float(adjusted[token]), state))
            extensions.sort(key=lambda h: h.score, reverse=True)
            kept = extensions[:width]
            finished.extend(h for h in kept if h.finished)
            active = [h for h in kept if not h.finished]
            if not active:
                break
        return finished + active

    # ------------------------------------------------------------ persistence

    def save(self, path: str | Path, vocab: Sequence[str] | None = None) -> None:
        ad.save_checkpoint(path, self.params, self.arch(), vocab)

    @classmethod
    def load(cls, path: str | Path) -> tuple["AbstractorModel", list[str] | None]:
        arrays, cfg, vocab = ad.load_checkpoint(path)
        if cfg.get("kind") != "abstractor":
            raise ValueError(f"checkpoint at {path} is not an abstractor")
        model = cls(cfg["vocab_size"], cfg["embedding_dim"], cfg["hidden_dim"], np.random.default_rng(0))
        for name, arr in arrays.items():
            if name not in model.params:
                raise ValueError(f"unexpected parameter {name!r} in checkpoint")
            if model.params[name].data.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name!r} in checkpoint")
            model.params[name].data[...] = arr
        return model, vocab


# ---------------------------------------------------------------- training loop


def prepare_abstractor_pairs(examples, alignments, vocab: Vocab):
    """Oracle (report sentence, summary sentence) id pairs for training."""
    from .oracle import abstractor_pairs  # local import avoids a cycle

    by_id = {ex.document.id: ex for ex in examples}
    prepared = []
    for alignment in alignments:
        ex = by_id.get(alignment.report_id)
        if ex is None:
            log.warning("alignment for unknown report %s ignored", alignment.report_id)
            continue
        for src_tokens, tgt_tokens in abstractor_pairs(alignment, ex.document, ex.summary_set):
            if not tgt_tokens:
                log.warning("report %s: pair with empty target skipped", alignment.report_id)
                continue
            prepared.append((vocab.encode(src_tokens), vocab.encode(tgt_tokens)))
    return prepared


def train_abstractor(
    model: AbstractorModel,
    pairs: Sequence[tuple[list[int], list[int]]],
    *,
    epochs: int,
    lr: float = 0.001,
    lr_decay: float = 0.5,
    clip_norm: float = 1.0,
    batch_size: int = 16,
    checkpoint_every: int = 16,
    rng: np.random.Generator,
    validation_pairs: Sequence[tuple[list[int], list[int]]] = (),
    periodic_save: Callable[[], None] | None = None,
    frozen_params: Sequence[str] = (),
) -> TrainLog:
    """Teacher-forced seq2seq training; deterministic under a fixed rng."""
    if not pairs:
        raise ValueError("no abstractor training pairs")
    trainable = {k: v for k, v in model.params.items() if k not in frozen_params}
    optimizer = ad.Adam(trainable, lr=lr, clip_norm=clip_norm)
    schedule = HalveOnPlateau(optimizer, lr_decay)
    train_log = TrainLog()
    saver = PeriodicSaver(checkpoint_every, periodic_save, train_log)

    for _ in range(epochs):
        epoch_losses = []
        for batch in iter_batches(len(pairs), batch_size, rng):
            optimizer.zero_grad()
            for idx in batch:
                src, tgt = pairs[idx]
                loss = ad.scale(model.teacher_forced_loss(src, tgt), 1.0 / len(batch))
                ad.backward(loss)
                epoch_losses.append(float(loss.data) * len(batch))
            optimizer.step()
            saver.batch_done()
        val_losses = [float(model.teacher_forced_loss(s, t).data) for s, t in validation_pairs]
        train_loss = mean_of(epoch_losses)
        watched = mean_of(val_losses) if validation_pairs else train_loss
        train_log.record_epoch(train_loss, watched if validation_pairs else float("nan"), optimizer.lr)
        schedule.epoch_end(watched)
    return train_log
