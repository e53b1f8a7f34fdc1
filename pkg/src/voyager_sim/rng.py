"""Deterministic seed derivation.

Every random draw in a run is made from a generator derived from the master
seed plus a tag path (for example ``("train", node_id, round_index)``), so
phases never share streams and rerunning a scenario is bit-reproducible
regardless of which phases consume randomness.
"""
from __future__ import annotations

import hashlib

import numpy as np

_U64 = 2**64


def _tag_to_int(tag: int | str) -> int:
    if isinstance(tag, int):
        return tag % _U64
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def sub_seed(master_seed: int, *tags: int | str) -> int:
    """Derive a 64-bit seed from the master seed and a tag path."""
    entropy = [master_seed % _U64] + [_tag_to_int(t) for t in tags]
    ss = np.random.SeedSequence(entropy)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(master_seed: int, *tags: int | str) -> np.random.Generator:
    """Independent generator for the given tag path."""
    entropy = [master_seed % _U64] + [_tag_to_int(t) for t in tags]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
