"""Counter-based random streams keyed by (seed, *keys).

Each stream is independent of how many draws any other stream made, so
per-root sampling and per-step noise stay reproducible under any schedule.
"""
import hashlib
from typing import Union

import numpy as np

Key = Union[int, str]


def _key_entropy(key: Key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        # SeedSequence rejects negative entropy; fold the sign into the low bit
        value = int(key)
        return (value << 1) if value >= 0 else ((-value << 1) | 1)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def seed_sequence(seed: int, *keys: Key) -> np.random.SeedSequence:
    return np.random.SeedSequence([_key_entropy(seed), *(_key_entropy(k) for k in keys)])


def stream(seed: int, *keys: Key) -> np.random.Generator:
    """A fresh Philox generator for the given key path."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *keys)))
