"""Robust aggregation rules: FedAvg, Krum, TrimmedMean, Median, and a
reputation-weighted rule anchored to the node's own model.

All rules are pure functions over an AggregationInput. Inside an input the
node's own model carries the implicit id -1, so it wins ties against peers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import IncompatibleModelsError, InsufficientCandidatesError
from .params import LayeredParams, cosine_similarity_layerwise, linear_combine

OWN_ID = -1

DEFAULT_TRIM_FRACTION = 0.2


@dataclass(frozen=True)
class AggregationInput:
    own: LayeredParams
    peers: tuple[tuple[int, LayeredParams], ...] = field(default=())
    f_estimate: int = 0

    def __post_init__(self):
        object.__setattr__(self, "peers", tuple(self.peers))
        if self.f_estimate < 0:
            raise ValueError(f"f_estimate must be >= 0, got {self.f_estimate}")
        for peer_id, model in self.peers:
            if not self.own.compatible_with(model):
                raise IncompatibleModelsError(f"peer {peer_id} has mismatched layer shapes")

    @property
    def candidate_count(self) -> int:
        return 1 + len(self.peers)

    def candidates(self) -> list[tuple[int, LayeredParams]]:
        """Own model first (id -1), then peers in given order."""
        return [(OWN_ID, self.own)] + list(self.peers)


def _stack(inp: AggregationInput) -> tuple[np.ndarray, list[int], list[LayeredParams]]:
    ids, models = zip(*inp.candidates())
    matrix = np.stack([m.flat() for m in models])
    return matrix, list(ids), list(models)


def fed_avg(inp: AggregationInput) -> LayeredParams:
    """Unweighted mean of the own model and all peer models."""
    models = [inp.own] + [m for _, m in inp.peers]
    return linear_combine(models, [1.0] * len(models))


def _krum_scores(matrix: np.ndarray, f: int) -> np.ndarray:
    n_c = matrix.shape[0]
    diffs = matrix[:, None, :] - matrix[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diffs, diffs)
    k = max(0, n_c - f - 2)
    scores = np.empty(n_c)
    for i in range(n_c):
        others = np.sort(np.delete(d2[i], i))
        scores[i] = float(others[:k].sum())
    return scores


def krum(inp: AggregationInput) -> tuple[LayeredParams, int]:
    """Select the candidate with the smallest sum of squared distances to its
    n_c - f - 2 closest candidates. Ties break toward the lowest id.

    Raises InsufficientCandidatesError when n_c < f_estimate + 3; the MTD
    protocol reacts by expanding neighbors, static Krum falls back via
    krum_static.
    """
    n_c = inp.candidate_count
    if n_c < inp.f_estimate + 3:
        raise InsufficientCandidatesError(
            f"krum needs at least f + 3 = {inp.f_estimate + 3} candidates, got {n_c}"
        )
    matrix, ids, models = _stack(inp)
    scores = _krum_scores(matrix, inp.f_estimate)
    best = min(range(n_c), key=lambda i: (scores[i], ids[i]))
    return models[best], ids[best]


def krum_static(inp: AggregationInput) -> tuple[LayeredParams, int]:
    """Krum with the static fallback: when candidates are scarce the assumed
    Byzantine count is reduced to max(0, n_c - 3) instead of erroring."""
    n_c = inp.candidate_count
    f = inp.f_estimate
    if n_c < f + 3:
        f = max(0, n_c - 3)
    matrix, ids, models = _stack(inp)
    scores = _krum_scores(matrix, f)
    best = min(range(n_c), key=lambda i: (scores[i], ids[i]))
    return models[best], ids[best]


def trimmed_mean(inp: AggregationInput, trim_fraction: float = DEFAULT_TRIM_FRACTION) -> LayeredParams:
    """Per coordinate, drop the floor(trim_fraction * n_c) largest and smallest
    values and average the rest."""
    if not 0.0 <= trim_fraction < 0.5:
        raise ValueError(f"trim_fraction must be in [0, 0.5), got {trim_fraction}")
    matrix, _, models = _stack(inp)
    n_c = matrix.shape[0]
    t = int(trim_fraction * n_c)
    if n_c - 2 * t < 1:
        raise ValueError(f"trimming {t} from each side of {n_c} candidates leaves nothing")
    ordered = np.sort(matrix, axis=0)
    kept = ordered[t:n_c - t] if t else ordered
    return LayeredParams.from_flat(kept.mean(axis=0), inp.own.shape_signature())


def coordinate_median(inp: AggregationInput) -> LayeredParams:
    """Per-coordinate median; even counts average the two middle values."""
    matrix, _, _ = _stack(inp)
    return LayeredParams.from_flat(np.median(matrix, axis=0), inp.own.shape_signature())


def fltrust_local_anchor(inp: AggregationInput) -> LayeredParams:
    """Reputation-weighted averaging with the node's own model as the trust
    anchor: peer weight is the clipped cosine to the anchor, and each peer
    layer is rescaled to the anchor layer's norm before averaging."""
    weights = [max(0.0, cosine_similarity_layerwise(inp.own, m).value) for _, m in inp.peers]
    if not any(w > 0.0 for w in weights):
        return inp.own
    own_norms = [float(np.linalg.norm(block)) for block in inp.own.layers]
    scaled_peers = []
    for _, model in inp.peers:
        blocks = []
        for block, anchor_norm in zip(model.layers, own_norms):
            norm = float(np.linalg.norm(block))
            blocks.append(block * (anchor_norm / norm) if norm > 0.0 else block)
        scaled_peers.append(LayeredParams(tuple(blocks)))
    return linear_combine([inp.own] + scaled_peers, [1.0] + weights)
