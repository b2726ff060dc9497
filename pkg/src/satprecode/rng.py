"""Deterministic fan-out of a master seed into independent named streams.

Every randomness consumer asks for a stream by (master seed, name, extra
integer keys such as the simulation step or Monte Carlo draw index). Streams
with different keys are statistically independent, and toggling one source
of randomness never shifts the draws of another.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "StreamBundle"]


def _key_to_int(key: str | int) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key) & 0xFFFFFFFF


def stream(master_seed: int, *keys: str | int) -> np.random.Generator:
    """Return a fresh generator for (master_seed, *keys)."""
    entropy = [int(master_seed)] + [_key_to_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


class StreamBundle:
    """Caches named streams under a common (seed, context) prefix.

    Repeated ``get`` calls with the same name return the same generator
    object, so a consumer may draw from it incrementally.
    """

    def __init__(self, master_seed: int, *context: str | int):
        self._seed = int(master_seed)
        self._context = tuple(context)
        self._streams: dict[str, np.random.Generator] = {}

    def get(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            self._streams[name] = stream(self._seed, *self._context, name)
        return self._streams[name]
