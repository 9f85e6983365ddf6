"""Reproducible, splittable random streams.

Stream ``(seed, k)`` is PCG64 seeded from ``SeedSequence(seed, spawn_key=(k,))``,
the same derivation numpy uses for ``SeedSequence(seed).spawn``.  It depends
only on the two integers, so results are stable across runs and releases.
"""
import numpy as np

SEED_MASK = (1 << 64) - 1


def seed_stream(master_seed: int, worker_index: int) -> np.random.Generator:
    if master_seed < 0 or worker_index < 0:
        raise ValueError("seeds and worker indices must be non-negative")
    ss = np.random.SeedSequence(int(master_seed) & SEED_MASK, spawn_key=(int(worker_index),))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng, worker_index: int = 0):
    """Accept a Generator or an integer seed; return (generator, seed or None)."""
    if isinstance(rng, np.random.Generator):
        return rng, None
    if isinstance(rng, (int, np.integer)):
        return seed_stream(int(rng), worker_index), int(rng)
    raise TypeError(f"expected a numpy Generator or an integer seed, got {type(rng).__name__}")
