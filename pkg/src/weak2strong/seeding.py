"""Deterministic seed derivation.

Every random quantity is drawn from a generator keyed by ``(seed, label)``, so
results depend on the seed tree and never on execution order.
"""
from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer: a bijective 64-bit avalanche mixer."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def _key(k: int | str) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k) & MASK64


def derive_seed(seed: int, *keys: int | str) -> int:
    """Fold ``keys`` into ``seed``; e.g. ``derive_seed(base, trial_index)``."""
    s = int(seed) & MASK64
    for k in keys:
        s = splitmix64(s ^ splitmix64(_key(k)))
    return s


def trial_seed(base_seed: int, trial_index: int) -> int:
    return derive_seed(base_seed, "trial", trial_index)


def rng_for(seed: int, label: str) -> np.random.Generator:
    """Generator for the labeled sub-stream ``label`` of ``seed``."""
    return np.random.default_rng(derive_seed(seed, label))
