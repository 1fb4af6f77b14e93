"""Named random substreams derived from a run seed.

Every stochastic choice in a run draws from ``substream(seed, name)``; there is
no global RNG. The name is hashed with CRC32 so streams are stable across
processes and Python versions.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode("utf-8")), *extra]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))
