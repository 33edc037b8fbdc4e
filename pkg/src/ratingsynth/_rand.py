"""Deterministic random streams keyed by seed, purpose tag, and string ids."""

import hashlib
import math

import numpy as np

# Purpose tags keep the retention / cell-draw / split streams disjoint even
# when they share a master seed.
TAG_SPLIT = 1
TAG_RETAIN = 2
TAG_DRAW = 3


def id_digest(*parts: str) -> int:
    """Stable 64-bit digest of one or more string ids (platform independent)."""
    joined = "\x1f".join(parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(joined, digest_size=8).digest(), "big")


def stream(seed: int, *tags: int) -> np.random.Generator:
    """A PCG64 generator derived from (seed, *tags); same inputs, same stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed,) + tags)))


def round_half_up(x: float) -> int:
    """Round with ties away from zero-half, e.g. 2.5 -> 3 (not banker's)."""
    return int(math.floor(x + 0.5))
