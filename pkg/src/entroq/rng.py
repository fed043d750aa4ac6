"""Seed derivation.

Every random stream is a PCG64 generator keyed by a ``SeedSequence`` built
from the run seed plus a tuple of non-negative integers naming its purpose
(node, iteration, family, request index, ...).  Two processes that agree on
the run seed therefore agree on every draw, which is what makes distributed
runs reproducible.
"""
from __future__ import annotations

import os

import numpy as np

SEED_ENV = "ENTROQ_SEED"


def resolve_seed(seed: int | None, default: int = 0) -> int:
    """``ENTROQ_SEED`` overrides the given seed when it is set."""
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        return int(env)
    return default if seed is None else int(seed)


def derive_seed(run_seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(run_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def generator(run_seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(run_seed), spawn_key=tuple(int(k) for k in key))))
