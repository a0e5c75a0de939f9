"""Run configuration: pinned defaults, JSON loading, override precedence."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path


class ConfigError(Exception):
    """Raised for unusable configuration files or values."""


@dataclass
class RunConfig:
    """Every knob of the pipeline. Defaults are the published settings."""

    data_root: str | None = None
    seed: int = 0
    vocab_size: int = 20000
    embedding_dim: int = 300
    max_sentence_tokens: int = 60
    max_extract_sentences: int = 80
    lr: float = 0.001
    lr_decay: float = 0.5
    clip_norm: float = 1.0
    batch_size: int = 16
    checkpoint_every_batches: int = 16
    beam_width: int = 2
    repetition_penalty: float = 2.0
    word_limit: int = 1000

    # Model sizes and run lengths the published settings leave open.
    hidden_dim: int = 64
    extractor_epochs: int = 10
    abstractor_epochs: int = 10
    max_output_tokens: int = 60
    freeze_embeddings: bool = False

    # Reinforcement phase.
    rl_episodes: int = 500
    rl_lr: float | None = None  # None: reuse lr
    rl_updates_every: int = 4  # trajectories per update batch
    entropy_coef: float = 0.0
    normalize_advantage: bool = False
    rl_finetune_abstractor: bool = False

    # Evaluation.
    reference_aggregation: str = "max"  # or "mean"

    # Graph baselines.
    damping: float = 0.85
    lexrank_threshold: float = 0.1
    pagerank_tol: float = 1e-6
    pagerank_max_iter: int = 100

    def __post_init__(self):
        if self.reference_aggregation not in ("max", "mean"):
            raise ConfigError(
                f"reference_aggregation must be 'max' or 'mean', got {self.reference_aggregation!r}"
            )
        if self.beam_width < 1:
            raise ConfigError("beam_width must be at least 1")
        if self.repetition_penalty < 1.0:
            raise ConfigError("repetition_penalty must be at least 1")
        if self.word_limit < 1:
            raise ConfigError("word_limit must be at least 1")

    @property
    def effective_rl_lr(self) -> float:
        return self.lr if self.rl_lr is None else self.rl_lr

    def replace(self, **overrides) -> "RunConfig":
        unknown = set(overrides) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return dataclasses.replace(self, **overrides)

    def extractor_arch(self) -> dict:
        return {
            "kind": "extractor",
            "vocab_size": self.vocab_size,
            "embedding_dim": self.embedding_dim,
            "hidden_dim": self.hidden_dim,
        }

    def abstractor_arch(self) -> dict:
        return {
            "kind": "abstractor",
            "vocab_size": self.vocab_size,
            "embedding_dim": self.embedding_dim,
            "hidden_dim": self.hidden_dim,
        }

    def critic_arch(self) -> dict:
        return {"kind": "critic", "hidden_dim": self.hidden_dim}


def load_config(path: str | Path) -> RunConfig:
    """Parse a JSON config; any key outside RunConfig is fatal."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {path} ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a JSON object: {path}")
    try:
        return RunConfig().replace(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad config value in {path}: {exc}") from exc
