"""Advantage actor-critic fine-tuning of the sentence pointer.

The pointer network is the policy; a frozen paraphraser rewrites each
chosen sentence, and the step reward is longest-common-subsequence F1
between that rewrite and the position-aligned gold summary sentence.
Choosing stop earns the marginal change in summary-level F1 from the
last emitted sentence, clamped to [0, 1]. A linear critic on the
detached pointer state supplies the advantage baseline.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .abstractor import AbstractorModel, DecodeConfig
from .config import RunConfig
from .corpus import Document, ReportExample, Vocab
from .extractor import ExtractorModel, doc_to_ids
from .oracle import OracleAlignment
from .rouge import rouge_l_sentence, rouge_l_summary

log = logging.getLogger(__name__)


def compute_reward(generated: Sequence[str], target: Sequence[str]) -> float:
    """Longest-common-subsequence F1 of a rewrite against one gold sentence."""
    return rouge_l_sentence(generated, target).f1


@dataclass(frozen=True)
class TrajectoryStep:
    action: int  # sentence index, or n_sentences for stop
    log_prob: float
    reward: float
    value: float


@dataclass
class Trajectory:
    report_id: str
    steps: list[TrajectoryStep]
    return_per_step: list[float]
    # Graph handles for the update that consumes this rollout. States are
    # detached copies so critic gradients never reach the policy.
    log_prob_nodes: list[ad.Value] = field(default_factory=list)
    entropy_nodes: list[ad.Value] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)

    def mean_reward(self) -> float:
        return float(np.mean([s.reward for s in self.steps])) if self.steps else 0.0


def suffix_returns(rewards: Sequence[float]) -> list[float]:
    """Undiscounted return-to-go for each step."""
    out: list[float] = []
    acc = 0.0
    for r in reversed(rewards):
        acc += r
        out.append(acc)
    out.reverse()
    return out


# ---------------------------------------------------------------- critic


class Critic:
    """Affine value head over the detached pointer decoder state (2H,)."""

    def __init__(self, hidden_dim: int, rng: np.random.Generator):
        self.hidden_dim = hidden_dim
        self.params: dict[str, ad.Value] = {
            "w": ad.param(ad.uniform_init(rng, (2 * hidden_dim,))),
            "b": ad.param(np.zeros(())),
        }

    def arch(self) -> dict:
        return {"kind": "critic", "hidden_dim": self.hidden_dim}

    def value_node(self, state: np.ndarray) -> ad.Value:
        return ad.add(ad.dot(self.params["w"], ad.const(state)), self.params["b"])

    def value(self, state: np.ndarray) -> float:
        return float(self.params["w"].data @ state + self.params["b"].data)

    def save(self, path: str | Path) -> None:
        ad.save_checkpoint(path, self.params, self.arch())

    @classmethod
    def load(cls, path: str | Path) -> "Critic":
        arrays, cfg, _ = ad.load_checkpoint(path)
        if cfg.get("kind") != "critic":
            raise ValueError(f"checkpoint at {path} is not a critic")
        critic = cls(cfg["hidden_dim"], np.random.default_rng(0))
        for name, arr in arrays.items():
            if name not in critic.params or critic.params[name].data.shape != arr.shape:
                raise ValueError(f"unexpected critic parameter {name!r}")
            critic.params[name].data[...] = arr
        return critic


# ---------------------------------------------------------------- rollout


def _summary_f1(candidate_sentences: list[list[str]], gold_sentences: Sequence[Sequence[str]]) -> float:
    if not candidate_sentences:
        return 0.0
    return rouge_l_summary(candidate_sentences, gold_sentences).f1


def rollout(
    document: Document,
    gold_sentences: Sequence[Sequence[str]],
    extractor: ExtractorModel,
    abstractor,
    vocab: Vocab,
    *,
    mode: str,
    rng: np.random.Generator | None = None,
    critic: Critic | None = None,
    decode: DecodeConfig = DecodeConfig(),
    max_steps: int = 80,
    paraphrase_cache: dict | None = None,
) -> Trajectory:
    """One episode: point, paraphrase, reward each step against gold.

    The episode ends when the policy picks stop, when gold sentences are
    exhausted, or at max_steps, whichever comes first.
    """
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown rollout mode: {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sampled rollout needs an rng")
    if not gold_sentences:
        raise ValueError(f"report {document.id}: rollout needs gold sentences")

    ids_lists = doc_to_ids(document, vocab)
    keys = extractor.encode(ids_lists)
    n = len(ids_lists)
    horizon = min(len(gold_sentences), max_steps)

    def choose(probs: np.ndarray, _t: int) -> int:
        if mode == "greedy":
            return int(np.argmax(probs))
        return int(rng.choice(len(probs), p=probs))

    decode_steps = extractor.decode(keys, n, choose, max_steps=horizon)

    generated: list[list[str]] = []
    steps: list[TrajectoryStep] = []
    traj = Trajectory(document.id, steps, [])
    for t, step in enumerate(decode_steps):
        if step.action == n:  # stop
            full = _summary_f1(generated, gold_sentences)
            earlier = _summary_f1(generated[:-1], gold_sentences)
            reward = min(1.0, max(0.0, full - earlier))
        else:
            cache_key = (document.id, step.action)
            if paraphrase_cache is not None and cache_key in paraphrase_cache:
                out_ids = paraphrase_cache[cache_key]
            else:
                out_ids = abstractor.paraphrase(ids_lists[step.action], decode)
                if paraphrase_cache is not None:
                    paraphrase_cache[cache_key] = out_ids
            rewrite = vocab.decode(out_ids)
            reward = compute_reward(rewrite, gold_sentences[t])
            generated.append(rewrite)
        state = step.state.data.copy()
        value = critic.value(state) if critic is not None else 0.0
        steps.append(TrajectoryStep(step.action, float(np.log(step.probs[step.action])), reward, value))
        traj.log_prob_nodes.append(ad.log_softmax_at(step.scores, step.action))
        traj.entropy_nodes.append(ad.softmax_entropy(step.scores))
        traj.states.append(state)
    traj.return_per_step = suffix_returns([s.reward for s in steps])
    return traj


# ---------------------------------------------------------------- update


@dataclass(frozen=True)
class UpdateStats:
    mean_advantage: float
    critic_loss: float
    policy_grad_norm: float
    critic_grad_norm: float


class A2CTrainer:
    """Separate Adam updates for the policy and for the critic.

    Advantages enter the policy term as plain numbers, so critic
    gradients never flow into the policy update. Critic values are
    recomputed from the stored detached states at update time.
    """

    def __init__(
        self,
        policy_params: dict[str, ad.Value],
        critic: Critic,
        *,
        policy_lr: float,
        critic_lr: float | None = None,
        clip_norm: float = 1.0,
        entropy_coef: float = 0.0,
        normalize_advantage: bool = False,
    ):
        self.critic = critic
        self.policy_opt = ad.Adam(policy_params, lr=policy_lr, clip_norm=clip_norm)
        self.critic_opt = ad.Adam(critic.params, lr=critic_lr if critic_lr is not None else policy_lr, clip_norm=clip_norm)
        self.entropy_coef = entropy_coef
        self.normalize_advantage = normalize_advantage

    def update(self, trajectories: Sequence[Trajectory]) -> UpdateStats | None:
        """One A2C step over a batch; returns None when it is discarded."""
        if not trajectories:
            raise ValueError("a2c update needs at least one trajectory")
        log_probs: list[ad.Value] = []
        entropies: list[ad.Value] = []
        value_nodes: list[ad.Value] = []
        returns: list[float] = []
        for traj in trajectories:
            for g, state, logp, ent in zip(
                traj.return_per_step, traj.states, traj.log_prob_nodes, traj.entropy_nodes
            ):
                value_nodes.append(self.critic.value_node(state))
                returns.append(g)
                log_probs.append(logp)
                entropies.append(ent)
        if not log_probs:
            raise ValueError("a2c update got trajectories without steps")
        advantages = np.array(returns) - np.array([float(v.data) for v in value_nodes])
        if not np.isfinite(advantages).all():
            log.warning("discarding a2c batch: non-finite advantage")
            return None
        if self.normalize_advantage:
            advantages = advantages / (advantages.std() + 1e-8)

        self.policy_opt.zero_grad()
        self.critic_opt.zero_grad()

        policy_terms = [ad.scale(lp, -float(a)) for lp, a in zip(log_probs, advantages)]
        if self.entropy_coef:
            policy_terms.extend(ad.scale(h, -self.entropy_coef) for h in entropies)
        policy_loss = policy_terms[0]
        for term in policy_terms[1:]:
            policy_loss = ad.add(policy_loss, term)
        ad.backward(policy_loss)
        policy_norm = self.policy_opt.step()

        critic_terms = []
        for g, v in zip(returns, value_nodes):
            diff = ad.sub(ad.const(np.asarray(g)), v)
            critic_terms.append(ad.mul(diff, diff))
        critic_loss = critic_terms[0]
        for term in critic_terms[1:]:
            critic_loss = ad.add(critic_loss, term)
        ad.backward(critic_loss)
        critic_norm = self.critic_opt.step()

        return UpdateStats(
            mean_advantage=float(advantages.mean()),
            critic_loss=float(critic_loss.data),
            policy_grad_norm=policy_norm,
            critic_grad_norm=critic_norm,
        )


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class RewardRow:
    episode: int
    mean_reward: float
    mean_advantage: float
    critic_loss: float


def write_reward_curve(rows: Sequence[RewardRow], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "mean_reward", "mean_advantage", "critic_loss"])
        for row in rows:
            writer.writerow(
                [row.episode, f"{row.mean_reward:.6f}", f"{row.mean_advantage:.6f}", f"{row.critic_loss:.6f}"]
            )


def _paired_examples(
    examples: Sequence[ReportExample], alignments: Sequence[OracleAlignment]
) -> list[tuple[ReportExample, list[list[str]]]]:
    by_id = {al.report_id: al for al in alignments}
    paired = []
    for ex in examples:
        al = by_id.get(ex.document.id)
        if al is None:
            log.warning("report %s has no alignment; skipped for rl", ex.document.id)
            continue
        _, chosen = ex.summary_set.summaries[al.chosen_summary]
        gold = [list(s.tokens) for s in chosen if s.tokens]
        if not gold:
            log.warning("report %s has an empty gold summary; skipped for rl", ex.document.id)
            continue
        paired.append((ex, gold))
    return paired


def train_rl(
    examples: Sequence[ReportExample],
    alignments: Sequence[OracleAlignment],
    extractor: ExtractorModel,
    abstractor: AbstractorModel,
    critic: Critic,
    vocab: Vocab,
    config: RunConfig,
    *,
    rng: np.random.Generator,
    episodes: int | None = None,
    csv_path: str | Path | None = None,
) -> list[RewardRow]:
    """Alternate sampled rollouts with A2C updates over cycled reports.

    The curve records, per episode, the mean step reward of a greedy
    rollout on that episode's report (a deterministic function of the
    current parameters), plus the statistics of the latest update.
    """
    paired = _paired_examples(examples, alignments)
    if not paired:
        raise ValueError("no usable reports for rl training")
    episodes = config.rl_episodes if episodes is None else episodes
    decode = DecodeConfig(config.beam_width, config.repetition_penalty, config.max_output_tokens)
    trainer = A2CTrainer(
        extractor.params,
        critic,
        policy_lr=config.effective_rl_lr,
        critic_lr=config.effective_rl_lr,
        clip_norm=config.clip_norm,
        entropy_coef=config.entropy_coef,
        normalize_advantage=config.normalize_advantage,
    )
    cache: dict | None = None if config.rl_finetune_abstractor else {}
    abstractor_opt = (
        ad.Adam(abstractor.params, lr=config.effective_rl_lr, clip_norm=config.clip_norm)
        if config.rl_finetune_abstractor
        else None
    )

    rows: list[RewardRow] = []
    wave: list[Trajectory] = []
    wave_pairs: list[tuple[list[int], list[int]]] = []
    last = UpdateStats(0.0, 0.0, 0.0, 0.0)
    for episode in range(episodes):
        example, gold = paired[episode % len(paired)]
        traj = rollout(
            example.document,
            gold,
            extractor,
            abstractor,
            vocab,
            mode="sample",
            rng=rng,
            critic=critic,
            decode=decode,
            max_steps=config.max_extract_sentences,
            paraphrase_cache=cache,
        )
        wave.append(traj)
        if abstractor_opt is not None:
            ids_lists = doc_to_ids(example.document, vocab)
            for t, step in enumerate(traj.steps):
                if step.action < len(ids_lists):
                    wave_pairs.append((ids_lists[step.action], vocab.encode(gold[t])))
        if len(wave) >= config.rl_updates_every:
            stats = trainer.update(wave)
            if stats is not None:
                last = stats
            if abstractor_opt is not None and wave_pairs:
                abstractor_opt.zero_grad()
                for src, tgt in wave_pairs:
                    ad.backward(ad.scale(abstractor.teacher_forced_loss(src, tgt), 1.0 / len(wave_pairs)))
                abstractor_opt.step()
            wave = []
            wave_pairs = []
        greedy = rollout(
            example.document,
            gold,
            extractor,
            abstractor,
            vocab,
            mode="greedy",
            critic=critic,
            decode=decode,
            max_steps=config.max_extract_sentences,
            paraphrase_cache=cache,
        )
        rows.append(RewardRow(episode, greedy.mean_reward(), last.mean_advantage, last.critic_loss))
    if csv_path is not None:
        write_reward_curve(rows, csv_path)
    return rows


def mean_greedy_reward(
    examples: Sequence[ReportExample],
    alignments: Sequence[OracleAlignment],
    extractor: ExtractorModel,
    abstractor,
    vocab: Vocab,
    *,
    decode: DecodeConfig = DecodeConfig(),
    max_steps: int = 80,
    paraphrase_cache: dict | None = None,
) -> float:
    """Mean greedy-rollout step reward across reports; the rl yardstick."""
    paired = _paired_examples(examples, alignments)
    if not paired:
        raise ValueError("no usable reports to evaluate")
    rewards = []
    for example, gold in paired:
        traj = rollout(
            example.document,
            gold,
            extractor,
            abstractor,
            vocab,
            mode="greedy",
            decode=decode,
            max_steps=max_steps,
            paraphrase_cache=paraphrase_cache,
        )
        rewards.append(traj.mean_reward())
    return float(np.mean(rewards))
