"""Path-addressed random substreams.

Every draw in a run comes from ``RngStream(master_seed).child(...)``. A stream
is identified by its seed and a tuple of path keys (patient id, visit, reader
role, ...), so results do not depend on the order in which streams are used or
on how work is split across workers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_UINT64 = 2**64


def _key_to_int(key) -> int:
    if isinstance(key, bool):
        key = int(key)
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"integer path keys must be non-negative, got {key}")
        return int(key)
    if isinstance(key, str):
        digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
        # offset keeps hashed strings clear of small integer ids
        return _UINT64 + int.from_bytes(digest, "big")
    raise TypeError(f"unsupported path key type: {type(key).__name__}")


@dataclass(frozen=True)
class RngStream:
    seed: int
    path: tuple = ()

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise TypeError("seed must be an integer")
        if not 0 <= self.seed < _UINT64:
            raise ValueError("seed must be a non-negative 64-bit integer")

    def child(self, *keys) -> RngStream:
        for k in keys:
            _key_to_int(k)
        return RngStream(self.seed, self.path + tuple(keys))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(int(self.seed), spawn_key=tuple(_key_to_int(k) for k in self.path))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))


def as_generator(rng) -> np.random.Generator:
    """Accept a stream, a generator, or an integer seed."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")
