"""Counter-based randomness.

Every draw is a pure function of ``(seed, *keys)``, so the coin used at round
``t`` never depends on what the stream looked like before ``t``.
"""
import numpy as np

MASK64 = (1 << 64) - 1


def generator(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & MASK64, *(int(k) & MASK64 for k in keys)])


def uniform(seed: int, *keys: int) -> float:
    return float(generator(seed, *keys).random())
