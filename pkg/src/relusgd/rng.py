"""Seeded random streams.

Every stream is a numpy ``Generator`` over the Philox-4x64 counter-based bit
generator, keyed by ``SeedSequence(master_seed, spawn_key=keys)``. Distinct key
tuples give statistically independent substreams, so a (master seed, trial
index, ...) tuple fully determines the random numbers a task consumes no matter
which thread or in which order it runs.
"""
import numpy as np

# Stream tags used as the first spawn key.
DATA = 0
INIT = 1
TRAIN = 2
TEST = 3


def substream(master_seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
