"""Per-component random streams derived from (base seed, component tag, seed index)."""
from __future__ import annotations

import zlib

import numpy as np

U64 = (1 << 64) - 1


def tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(base_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent generator for one component of one seeded run.

    Adding a new tag never changes the draws of existing tags.
    """
    if not 0 <= int(base_seed) <= U64:
        raise ValueError("base seed must fit in an unsigned 64-bit integer")
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFF, int(base_seed) >> 32, tag_id(tag), int(index)])
    return np.random.default_rng(ss)


def derive_seed(base_seed: int, tag: str, index: int = 0) -> int:
    """A 63-bit integer seed for components that want a plain integer."""
    return int(stream(base_seed, tag, index).integers(0, 2**63 - 1))
