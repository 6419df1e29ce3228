"""
Seeded random streams for the simulator.

Every stream is a numpy ``Generator`` over the Philox counter-based bit
generator, keyed through a ``SeedSequence`` built from the run seed and a
tuple of stream keys such as ``(repetition, rsta_label, 'clock')``. Philox
output depends only on key and counter, so a stream gives the same draws on
every platform and regardless of how many other streams were consumed first.
"""

import hashlib
from functools import lru_cache
from typing import Union

import numpy as np

MASK64 = (1 << 64) - 1

SeedLike = Union[int, np.random.Generator]


@lru_cache(maxsize=4096, typed=True)
def _key_word(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        key = int(key)
        # negatives get their own word range
        return key if key >= 0 else (1 << 64) + (-key & MASK64)
    if isinstance(key, bytes):
        digest = hashlib.sha256(key).digest()
    else:
        digest = hashlib.sha256(str(key).encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little')


def stream(seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``seed`` and the given keys"""
    entropy = [int(seed) & MASK64, len(keys)] + [_key_word(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def as_generator(seed: SeedLike, *keys) -> np.random.Generator:
    """Accept an integer seed or pass an existing generator through"""
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(int(seed), *keys)


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit seed for a derived stream"""
    return int(rng.integers(0, 2 ** 63, dtype=np.int64))
