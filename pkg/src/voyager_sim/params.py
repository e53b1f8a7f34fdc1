"""Layered model parameters and the arithmetic every aggregator needs.

A model is an ordered tuple of layer blocks (2-D weight matrices and 1-D bias
vectors). Blocks are stored as read-only float64 arrays; all operations here
are pure functions, safe to call concurrently.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateLayerError, IncompatibleModelsError

logger = logging.getLogger(__name__)

LAYER_HEADER_BYTES = 16
BYTES_PER_PARAM = 4


@dataclass(frozen=True, eq=False)
class LayeredParams:
    """Ordered layer parameter blocks; the unit shared, poisoned, and aggregated."""

    layers: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.layers) == 0:
            raise ValueError("a model needs at least one layer")
        frozen = []
        for idx, block in enumerate(self.layers):
            arr = np.array(block, dtype=np.float64, copy=True)
            if arr.size == 0:
                raise ValueError(f"layer {idx} is empty")
            if arr.ndim not in (1, 2):
                raise ValueError(f"layer {idx} must be a vector or matrix, got ndim={arr.ndim}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"layer {idx} contains non-finite values")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "layers", tuple(frozen))

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def num_params(self) -> int:
        return sum(block.size for block in self.layers)

    def shape_signature(self) -> tuple[tuple[int, ...], ...]:
        return tuple(block.shape for block in self.layers)

    def compatible_with(self, other: "LayeredParams") -> bool:
        return self.shape_signature() == other.shape_signature()

    def flat(self) -> np.ndarray:
        """All parameters concatenated in layer order."""
        return np.concatenate([block.ravel() for block in self.layers])

    @classmethod
    def from_flat(cls, values: np.ndarray, signature: tuple[tuple[int, ...], ...]) -> "LayeredParams":
        blocks = []
        offset = 0
        for shape in signature:
            size = int(np.prod(shape))
            blocks.append(np.asarray(values[offset:offset + size]).reshape(shape))
            offset += size
        if offset != len(values):
            raise ValueError("flat vector length does not match signature")
        return cls(tuple(blocks))

    @classmethod
    def from_lists(cls, *blocks) -> "LayeredParams":
        """Convenience constructor for tests and examples."""
        return cls(tuple(np.asarray(b, dtype=np.float64) for b in blocks))

    def __eq__(self, other) -> bool:
        if not isinstance(other, LayeredParams):
            return NotImplemented
        return self.shape_signature() == other.shape_signature() and all(
            np.array_equal(a, b) for a, b in zip(self.layers, other.layers)
        )

    __hash__ = None  # array payloads are not hashable

    def __repr__(self) -> str:
        return f"LayeredParams(shapes={self.shape_signature()}, params={self.num_params})"


@dataclass(frozen=True)
class SimilarityScore:
    """Layer-averaged cosine similarity, always within [-1, 1]."""

    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("similarity must be finite")
        if abs(self.value) > 1.0 + 1e-9:
            raise ValueError(f"similarity {self.value} outside [-1, 1]")
        object.__setattr__(self, "value", float(min(1.0, max(-1.0, self.value))))

    def __float__(self) -> float:
        return self.value


def _require_compatible(a: LayeredParams, b: LayeredParams) -> None:
    if not a.compatible_with(b):
        raise IncompatibleModelsError(
            f"layer shapes differ: {a.shape_signature()} vs {b.shape_signature()}"
        )


def layer_cosines(a: LayeredParams, b: LayeredParams, on_degenerate: str = "zero") -> list[float]:
    """Per-layer cosine similarities.

    A zero-norm layer either contributes 0.0 (``on_degenerate="zero"``, the
    simulator default, with a warning) or raises DegenerateLayerError
    (``on_degenerate="raise"``).
    """
    _require_compatible(a, b)
    cosines = []
    for idx, (la, lb) in enumerate(zip(a.layers, b.layers)):
        va, vb = la.ravel(), lb.ravel()
        na, nb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
        if na == 0.0 or nb == 0.0:
            if on_degenerate == "raise":
                raise DegenerateLayerError(f"layer {idx} has zero norm")
            logger.warning("zero-norm layer %d, treating its cosine as 0", idx)
            cosines.append(0.0)
            continue
        c = float(np.dot(va, vb) / (na * nb))
        cosines.append(min(1.0, max(-1.0, c)))
    return cosines


def cosine_similarity_layerwise(
    a: LayeredParams, b: LayeredParams, on_degenerate: str = "zero"
) -> SimilarityScore:
    """Mean of per-layer cosines, giving a score in [-1, 1].

    Symmetric in its arguments. The unnormalized per-layer sum is exposed at
    debug level for comparison against the raw accumulation.
    """
    cosines = layer_cosines(a, b, on_degenerate=on_degenerate)
    raw_sum = sum(cosines)
    logger.debug("layer cosine raw sum %.6f over %d layers", raw_sum, len(cosines))
    return SimilarityScore(raw_sum / len(cosines))


def linear_combine(models: list[LayeredParams], weights: list[float]) -> LayeredParams:
    """Element-wise weighted average with weights normalized to sum 1."""
    if len(models) == 0:
        raise ValueError("no models to combine")
    if len(weights) != len(models):
        raise ValueError(f"{len(models)} models but {len(weights)} weights")
    w = np.asarray(weights, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    total = float(w.sum())
    if total <= 0.0:
        raise ValueError(f"weights must sum to a positive value, got {total}")
    base = models[0]
    for m in models[1:]:
        _require_compatible(base, m)
    w = w / total
    blocks = []
    for layer_idx in range(base.num_layers):
        acc = np.zeros_like(base.layers[layer_idx])
        for model, weight in zip(models, w):
            acc = acc + weight * model.layers[layer_idx]
        blocks.append(acc)
    return LayeredParams(tuple(blocks))


def pairwise_sq_distance(a: LayeredParams, b: LayeredParams) -> float:
    """Sum over all parameters of the squared difference."""
    _require_compatible(a, b)
    total = 0.0
    for la, lb in zip(a.layers, b.layers):
        diff = la - lb
        total += float(np.dot(diff.ravel(), diff.ravel()))
    return total


def serialized_size_bytes(m: LayeredParams) -> int:
    """Wire size: 4 bytes per parameter plus a 16-byte header per layer."""
    return m.num_params * BYTES_PER_PARAM + m.num_layers * LAYER_HEADER_BYTES


def save_checkpoint(m: LayeredParams, path) -> None:
    """Binary dump: per layer, two little-endian uint64 (rows, cols) then
    float32 little-endian values; a 1-D block stores (length, 0)."""
    with open(path, "wb") as fh:
        for block in m.layers:
            if block.ndim == 2:
                rows, cols = block.shape
            else:
                rows, cols = block.shape[0], 0
            fh.write(struct.pack("<QQ", rows, cols))
            fh.write(block.astype("<f4").tobytes())


def load_checkpoint(path) -> LayeredParams:
    blocks = []
    with open(path, "rb") as fh:
        while True:
            header = fh.read(16)
            if not header:
                break
            if len(header) != 16:
                raise ValueError("truncated layer header")
            rows, cols = struct.unpack("<QQ", header)
            count = rows * cols if cols else rows
            payload = fh.read(count * 4)
            if len(payload) != count * 4:
                raise ValueError("truncated layer payload")
            values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
            blocks.append(values.reshape(rows, cols) if cols else values)
    return LayeredParams(tuple(blocks))
