"""Deterministic sub-seed derivation.

All randomness in the package flows from one user seed; sub-streams are
derived by hashing (seed, purpose, index) so results do not depend on
execution order, worker count, or Python's salted ``hash``.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, purpose: str, index: int = 0) -> int:
    """Return a 64-bit sub-seed for (seed, purpose, index)."""
    digest = hashlib.sha256(f"{seed}:{purpose}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Independent generator for one derived stream."""
    return np.random.default_rng(derive_seed(seed, purpose, index))
