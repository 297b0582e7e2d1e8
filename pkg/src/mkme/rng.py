"""Seeded random streams keyed by names and indices.

Every random draw in the package comes from ``substream(seed, *keys)``.
The keys are hashed into the spawn key of a ``SeedSequence`` that drives a
counter-based Philox generator, so a stream depends only on ``(seed, keys)``
and never on the order in which other streams were consumed.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key: int | str) -> int:
    if isinstance(key, (bool, np.bool_)):
        raise TypeError("boolean substream keys are ambiguous")
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"substream keys must be nonnegative, got {key}")
        return int(key)
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, *keys: int | str) -> np.random.Generator:
    """Return an independent generator for ``(seed, *keys)``."""
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed: int, *keys: int | str) -> int:
    """A derived 63-bit integer seed, for APIs that take an ``int`` seed."""
    return int(substream(seed, *keys).integers(0, 2**63 - 1))
