"""Deterministic RNG streams keyed by (seed, purpose, indices...).

Every stochastic site in a run derives its own generator from the run seed
plus a fixed purpose code and loop indices. Streams are therefore independent
of execution order: skipping one consumer (e.g. the greedy-actor evaluation)
or evaluating offspring in parallel never shifts any other stream.
"""

import numpy as np

# Purpose codes. Values are part of the reproducibility contract: changing
# them changes every seeded run.
TRAINER_INIT = 1
INIT_GENOTYPE = 2
INIT_EVAL = 3
SELECT = 4
GA_VARIATION = 5
PG_VARIATION = 6
OFFSPRING_EVAL = 7
ACTOR_EVAL = 8
TRAIN = 9
SINGLE_ACT = 10
SINGLE_TRAIN = 11


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return a fresh PCG64 generator for (seed, *key)."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng([seed, *key])
