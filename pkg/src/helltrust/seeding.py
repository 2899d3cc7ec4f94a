"""Deterministic fan-out of one top-level seed into per-stage seeds."""

import zlib

import numpy as np


def derive_seed(base: int, tag: str) -> int:
    """Derive a stable child seed from a base seed and a stage tag.

    The same (base, tag) pair always yields the same child, and distinct
    tags decorrelate the child streams, so every pipeline stage can be
    seeded from one experiment-level seed.
    """
    ss = np.random.SeedSequence([int(base) & 0xFFFFFFFF, zlib.crc32(tag.encode("utf-8"))])
    return int(ss.generate_state(1, dtype=np.uint32)[0])
