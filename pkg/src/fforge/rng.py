"""Keyed random substreams.

Every stochastic step draws from a generator derived from a tuple of keys,
typically ``(global_seed, sample_id, op_name)``. Distinct keys give
statistically independent streams; equal keys give identical streams.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def seed_sequence(*keys) -> np.random.SeedSequence:
    return np.random.SeedSequence([_key_to_int(k) for k in keys])


def substream(*keys) -> np.random.Generator:
    """Return a PCG64 generator uniquely determined by ``keys``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(*keys)))


def derive_seed(*keys) -> int:
    """A 63-bit integer seed derived from ``keys`` (for torch.manual_seed etc.)."""
    return int(seed_sequence(*keys).generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))
