"""Seeded, splittable random streams.

Every stochastic consumer asks for its own named stream, so adding or
removing one consumer never shifts the draws of another.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode())


def stream(seed: int, *names) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``seed`` and a name path."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *(_key(n) for n in names)])
    return np.random.Generator(np.random.Philox(ss))
