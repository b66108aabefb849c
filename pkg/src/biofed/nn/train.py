"""Local SGD training with seed-derived, platform-stable shuffling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyShardError, ValidationError
from .params import ModelParameters, check_same_schema

SHUFFLE_DOMAIN = 2  # seed-stream namespace for epoch shuffles


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    batch_size: int
    local_epochs: int
    seed: int

    def __post_init__(self):
        problems = []
        if not self.learning_rate > 0:
            problems.append(("learning_rate", "must be > 0"))
        if self.batch_size < 1:
            problems.append(("batch_size", "must be >= 1"))
        if self.local_epochs < 1:
            problems.append(("local_epochs", "must be >= 1"))
        if self.seed < 0:
            problems.append(("seed", "must be >= 0"))
        if problems:
            raise ValidationError(problems)


def sgd_step(params: ModelParameters, grads: ModelParameters, lr: float) -> ModelParameters:
    """One step of p' = p - lr * g, leaving the inputs untouched."""
    if not lr > 0:
        raise ValidationError([("lr", "must be > 0")])
    check_same_schema(params, grads, "sgd_step")
    entries = []
    for (name, p), (_, g) in zip(params.items(), grads.items()):
        updated = p.astype(np.float64) - lr * g.astype(np.float64)
        entries.append((name, updated.astype(p.dtype)))
    return ModelParameters(entries)


def fisher_yates(n, rng):
    """Index permutation via an explicit Fisher-Yates pass."""
    order = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    return order


def epoch_order(n, seed, epoch):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(SHUFFLE_DOMAIN, epoch)))
    return fisher_yates(n, rng)


def train_local(network, params, x, y, cfg: TrainConfig):
    """Mini-batch SGD over one shard.

    Runs ``cfg.local_epochs`` epochs with a per-epoch Fisher-Yates shuffle
    keyed on (seed, epoch). The last partial batch is trained, not dropped.
    Returns (updated params, number of training samples, mean loss of the
    final epoch).
    """
    n = len(y)
    if n == 0:
        raise EmptyShardError("cannot train on an empty shard")
    current = params
    final_loss = 0.0
    for epoch in range(cfg.local_epochs):
        order = epoch_order(n, cfg.seed, epoch)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, _, grads = network.backward(current, x[batch], y[batch])
            current = sgd_step(current, grads, cfg.learning_rate)
            loss_sum += loss * len(batch)
        final_loss = loss_sum / n
    return current, n, final_loss
