"""Offspring generators: the iso+line genetic operator and the
critic-guided policy-gradient variation.

Both take parents from the archive and return a new flat parameter vector.
The PG variation copies its parent and applies a burst of actor-gradient
steps with a fresh optimizer, so offspring are independent of the order in
which a batch is produced and the shared trainer is never touched.
"""

from dataclasses import dataclass

import numpy as np

from . import nets, trainers
from .errors import ShapeError


@dataclass(frozen=True)
class VariationConfig:
    sigma_iso: float = 0.01
    sigma_line: float = 0.1
    p_pg: float = 0.5
    g_pg: int = 100
    pg_lr: float = 0.001

    def __post_init__(self):
        if not 0.0 <= self.p_pg <= 1.0:
            raise ShapeError("p_pg must lie in [0, 1]")
        if self.g_pg < 0:
            raise ShapeError("g_pg must be non-negative")


def split_batch(batch_size: int, p_pg: float) -> tuple[int, int]:
    """(n_pg, n_ga): PG offspring take the first floor(B * p_pg) slots."""
    if batch_size < 1:
        raise ShapeError("batch size must be positive")
    n_pg = int(np.floor(batch_size * p_pg))
    return n_pg, batch_size - n_pg


def iso_line(parent1: np.ndarray, parent2: np.ndarray, cfg: VariationConfig,
             rng: np.random.Generator) -> np.ndarray:
    """child = p1 + sigma_iso * N(0, I) + sigma_line * n * (p2 - p1),
    with one scalar standard normal n."""
    if parent1.shape != parent2.shape:
        raise ShapeError("parents must have equal parameter counts")
    iso = rng.standard_normal(parent1.shape[0])
    line = rng.standard_normal()
    return parent1 + cfg.sigma_iso * iso + cfg.sigma_line * line * (parent2 - parent1)


def pg_variation(parent: np.ndarray, trainer: trainers.TrainerState, buffer,
                 cfg: VariationConfig, rng: np.random.Generator) -> np.ndarray:
    """g_pg actor-gradient steps on a copy of the parent.

    Uses the trainer's critics (and alpha) read-only with a fresh Adam state
    at the PG learning rate; each step draws a fresh mini-batch.
    """
    child = parent.copy()
    adam = nets.AdamState.fresh(trainer.actor_spec.param_count)
    for _ in range(cfg.g_pg):
        batch = buffer.sample(trainer.batch_size, rng)
        child, adam, _ = trainers.actor_gradient_step(trainer, child, adam,
                                                      batch, cfg.pg_lr, rng)
    return child
