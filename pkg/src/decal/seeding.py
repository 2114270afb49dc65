"""Deterministic seed derivation.

Every stochastic component derives its stream from a tuple of labels via
sha256, so results are independent of execution order, platform hash
randomization, and worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_seed", "rng_from"]


def derive_seed(*parts: int | str) -> int:
    """Hash a label tuple into a 64-bit seed, stably across runs and platforms."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, bool) or not isinstance(part, (int, str)):
            raise TypeError(f"seed parts must be int or str, got {type(part).__name__}")
        tag = b"i:" if isinstance(part, int) else b"s:"
        h.update(tag + str(part).encode("utf-8") + b"\x1f")
    return int.from_bytes(h.digest()[:8], "little")


def rng_from(*parts: int | str) -> np.random.Generator:
    """Generator seeded from a derived label tuple."""
    return np.random.default_rng(derive_seed(*parts))
