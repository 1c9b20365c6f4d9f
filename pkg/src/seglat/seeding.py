"""Named random substreams derived from one run seed."""

from __future__ import annotations

import zlib

import numpy as np

#: Substreams used across the package. Each gets an independent generator.
STREAMS = ("data", "init", "shuffle", "bench")


def substream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for substream *name* of *seed*.

    The spawn key is a CRC of the name, so adding streams never shifts
    existing ones.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))
