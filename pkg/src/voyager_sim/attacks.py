"""Adversary behaviors injected into malicious nodes.

Attackers follow the protocol apart from their corruption: label flippers
train on a flipped shard, model poisoners corrupt the copy they share. There
is no collusion and no awareness of the defense.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .learning import DataShard
from .params import LayeredParams
from .rng import make_rng

logger = logging.getLogger(__name__)

ATTACK_KINDS = ("none", "label_flip", "model_poison")
PNR_LEVELS = (0, 10, 30, 60)


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "none"
    pnr_percent: int = 0
    salt_fraction: float = 0.8
    salt_magnitude_mode: str = "max_abs"  # replace with the model's max |param|
    seed: int | None = None  # None: derived from the scenario's master seed

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}, expected one of {ATTACK_KINDS}")
        if self.pnr_percent not in PNR_LEVELS:
            raise ValueError(f"pnr_percent must be one of {PNR_LEVELS}, got {self.pnr_percent}")
        if self.kind == "none" and self.pnr_percent != 0:
            raise ValueError("attack kind 'none' requires pnr_percent 0")
        if not 0.0 < self.salt_fraction <= 1.0:
            raise ValueError(f"salt_fraction must be in (0, 1], got {self.salt_fraction}")
        if self.salt_magnitude_mode != "max_abs":
            raise ValueError(f"unsupported salt_magnitude_mode {self.salt_magnitude_mode!r}")


def select_malicious(
    n: int, pnr_percent: int, seed: int, protected: int | None = None
) -> frozenset[int]:
    """Uniformly random attacker set of size round(n * pnr / 100).

    A pinned observation node is never selected.
    """
    count = round(n * pnr_percent / 100)
    if count == 0:
        return frozenset()
    candidates = [i for i in range(n) if i != protected]
    if count > len(candidates):
        raise ValueError(f"cannot pick {count} attackers from {len(candidates)} candidates")
    rng = make_rng(seed, "select-malicious")
    chosen = rng.choice(len(candidates), size=count, replace=False)
    return frozenset(candidates[i] for i in chosen)


def flip_labels(shard: DataShard, seed: int) -> DataShard:
    """Replace every training label with a uniformly random *different* label.

    The validation split is untouched; malicious nodes still evaluate honestly
    and their metrics are excluded from scoring anyway.
    """
    if shard.num_classes < 2:
        logger.warning("single-class shard on node %d, label flip is a no-op", shard.owner)
        return shard
    rng = make_rng(seed, "flip", shard.owner)
    originals = shard.train_labels
    offsets = rng.integers(0, shard.num_classes - 1, size=len(originals))
    flipped = np.where(offsets < originals, offsets, offsets + 1)
    return shard.with_train_labels(flipped.astype(np.int64))


def salt_poison(model: LayeredParams, salt_fraction: float, seed: int) -> LayeredParams:
    """Replace a Bernoulli(salt_fraction) subset of parameters with the
    model's maximum absolute value (the positive "salt" extreme)."""
    rng = make_rng(seed, "salt")
    amplitude = max(float(np.abs(block).max()) for block in model.layers)
    if amplitude == 0.0:
        logger.warning("all-zero model, salting with +1.0")
        amplitude = 1.0
    blocks = []
    for block in model.layers:
        mask = rng.random(block.shape) < salt_fraction
        blocks.append(np.where(mask, amplitude, block))
    return LayeredParams(tuple(blocks))
