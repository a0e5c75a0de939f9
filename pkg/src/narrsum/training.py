"""Shared training-loop plumbing: batching, plateau decay, checkpoints."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .autodiff import Adam


@dataclass
class TrainLog:
    epoch_losses: list[float] = field(default_factory=list)
    validation_losses: list[float] = field(default_factory=list)
    lr_history: list[float] = field(default_factory=list)
    batches_seen: int = 0
    periodic_saves: int = 0

    def record_epoch(self, train_loss: float, val_loss: float, lr: float) -> None:
        self.epoch_losses.append(train_loss)
        self.validation_losses.append(val_loss)
        self.lr_history.append(lr)


def iter_batches(n_items: int, batch_size: int, rng: np.random.Generator | None) -> Iterator[list[int]]:
    """Index batches over one epoch; shuffled when an rng is given."""
    order = np.arange(n_items)
    if rng is not None:
        rng.shuffle(order)
    for start in range(0, n_items, batch_size):
        yield order[start : start + batch_size].tolist()


class HalveOnPlateau:
    """Multiply the optimizer lr by decay when a full epoch brings no
    improvement in the watched loss."""

    def __init__(self, optimizer: Adam, decay: float = 0.5):
        self.optimizer = optimizer
        self.decay = decay
        self.best = math.inf

    def epoch_end(self, loss: float) -> bool:
        if loss < self.best:
            self.best = loss
            return False
        self.optimizer.lr *= self.decay
        return True


class PeriodicSaver:
    """Invoke a save callback every fixed number of completed batches."""

    def __init__(self, every: int, save: Callable[[], None] | None, log: TrainLog):
        self.every = every
        self.save = save
        self.log = log

    def batch_done(self) -> None:
        self.log.batches_seen += 1
        if self.save is not None and self.every > 0 and self.log.batches_seen % self.every == 0:
            self.save()
            self.log.periodic_saves += 1


def mean_of(values: Sequence[float]) -> float:
    return float(np.mean(values)) if len(values) else 0.0
