"""Seed derivation. Every random stream in the package is keyed off one
64-bit seed plus integer keys, so results never depend on call order."""

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x):
    x = (x + _GOLDEN) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed, *keys):
    """Mix ``seed`` with each key in turn; distinct key tuples give independent streams."""
    state = splitmix64(int(seed) & _MASK)
    for k in keys:
        state = splitmix64(state ^ splitmix64(int(k) & _MASK))
    return state


def generator(seed, *keys):
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))
