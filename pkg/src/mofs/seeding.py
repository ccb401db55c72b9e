"""Deterministic seed derivation.

Every stochastic component takes a seed computed from a master seed plus a
tuple of labels (objective name, subset bitmask, tree index, ...). Hashing
keeps derived streams independent of evaluation order.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, *labels: object) -> int:
    """Return a 64-bit seed that depends only on ``master_seed`` and ``labels``."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master_seed) & _MASK64).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "little")


def derive_rng(master_seed: int, *labels: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, *labels))
