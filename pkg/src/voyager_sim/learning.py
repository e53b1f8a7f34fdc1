"""Synthetic classification task, IID partitioning, local SGD training of a
small MLP, and macro-F1 evaluation.

Gaussian blobs stand in for image datasets: the defense logic operates on
model vectors, and blobs let a full federated run converge in seconds. All
operations are pure functions of their inputs and seeds.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import DivergenceError, InsufficientDataError
from .params import LayeredParams
from .rng import make_rng

logger = logging.getLogger(__name__)

TRAIN_FRACTION = 0.8


def _default_centers(feature_dim: int, num_classes: int, scale: float = 3.0) -> tuple[tuple[float, ...], ...]:
    """Axis-aligned centers: class c sits at scale * e_c."""
    centers = np.zeros((num_classes, feature_dim))
    for c in range(num_classes):
        centers[c, c % feature_dim] = scale
    return tuple(tuple(row) for row in centers)


@dataclass(frozen=True)
class SyntheticTask:
    feature_dim: int = 8
    num_classes: int = 4
    samples_per_class: int = 250
    noise_std: float = 0.5
    seed: int = 7
    class_centers: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.num_classes}")
        if self.feature_dim < 2:
            raise ValueError(f"need feature_dim >= 2, got {self.feature_dim}")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be positive")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.class_centers is not None:
            centers = tuple(tuple(float(v) for v in row) for row in self.class_centers)
            if len(centers) != self.num_classes:
                raise ValueError("one center per class required")
            if any(len(row) != self.feature_dim for row in centers):
                raise ValueError("center dimensionality must match feature_dim")
            object.__setattr__(self, "class_centers", centers)

    def centers(self) -> np.ndarray:
        if self.class_centers is not None:
            arr = np.asarray(self.class_centers, dtype=np.float64)
        else:
            arr = np.asarray(_default_centers(self.feature_dim, self.num_classes), dtype=np.float64)
        for a in range(self.num_classes):
            for b in range(a + 1, self.num_classes):
                if np.array_equal(arr[a], arr[b]):
                    raise ValueError(f"class centers {a} and {b} coincide")
        return arr


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, D)
    labels: np.ndarray  # (N,)
    example_ids: np.ndarray  # (N,) stable identity for partition checks
    num_classes: int

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class DataShard:
    """One node's slice of the dataset with its 80/20 train/validation split."""

    owner: int
    features: np.ndarray
    labels: np.ndarray
    example_ids: np.ndarray
    train_mask: np.ndarray  # True = train split
    num_classes: int

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def train_features(self) -> np.ndarray:
        return self.features[self.train_mask]

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[self.train_mask]

    @property
    def val_features(self) -> np.ndarray:
        return self.features[~self.train_mask]

    @property
    def val_labels(self) -> np.ndarray:
        return self.labels[~self.train_mask]

    def with_train_labels(self, new_labels: np.ndarray) -> "DataShard":
        labels = self.labels.copy()
        labels[self.train_mask] = new_labels
        return DataShard(
            owner=self.owner,
            features=self.features,
            labels=labels,
            example_ids=self.example_ids,
            train_mask=self.train_mask,
            num_classes=self.num_classes,
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs_per_round: int = 3
    learning_rate: float = 0.2
    batch_size: int = 16
    hidden_layers: tuple[int, ...] = (32, 16)
    max_grad_norm: float = 5.0  # keeps SGD finite when resuming from corrupted weights

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.epochs_per_round < 0:
            raise ValueError("epochs_per_round must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if len(self.hidden_layers) < 1:
            raise ValueError("at least one hidden layer required")


@dataclass(frozen=True)
class EvalMetrics:
    macro_f1: float
    per_class_precision: tuple[float, ...]
    per_class_recall: tuple[float, ...]


def generate_task(spec: SyntheticTask) -> Dataset:
    """samples_per_class points per class at center + Gaussian noise,
    deterministically shuffled."""
    centers = spec.centers()
    min_sep = min(
        float(np.linalg.norm(centers[a] - centers[b]))
        for a in range(spec.num_classes)
        for b in range(a + 1, spec.num_classes)
    )
    if spec.noise_std > 0 and min_sep < 2.0 * spec.noise_std:
        logger.warning(
            "class centers only %.3f apart with noise_std %.3f; classes will overlap heavily",
            min_sep,
            spec.noise_std,
        )
    rng = make_rng(spec.seed, "task")
    n_total = spec.num_classes * spec.samples_per_class
    features = np.empty((n_total, spec.feature_dim))
    labels = np.empty(n_total, dtype=np.int64)
    row = 0
    for c in range(spec.num_classes):
        noise = rng.normal(0.0, spec.noise_std, size=(spec.samples_per_class, spec.feature_dim))
        features[row:row + spec.samples_per_class] = centers[c] + noise
        labels[row:row + spec.samples_per_class] = c
        row += spec.samples_per_class
    order = rng.permutation(n_total)
    return Dataset(
        features=features[order],
        labels=labels[order],
        example_ids=np.arange(n_total, dtype=np.int64)[order],
        num_classes=spec.num_classes,
    )


def partition_iid(dataset: Dataset, n_nodes: int, seed: int) -> list[DataShard]:
    """Stratified IID partition into n_nodes disjoint shards of equal size +-1,
    each with a deterministic stratified 80/20 train/validation split."""
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    if len(dataset) < n_nodes:
        raise InsufficientDataError(f"{len(dataset)} examples cannot feed {n_nodes} nodes")
    rng = make_rng(seed, "partition")
    assigned: list[list[int]] = [[] for _ in range(n_nodes)]
    extra_cursor = 0
    for c in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labels == c)
        idx = idx[rng.permutation(len(idx))]
        base, extra = divmod(len(idx), n_nodes)
        pos = 0
        for offset in range(n_nodes):
            node = (extra_cursor + offset) % n_nodes
            take = base + (1 if offset < extra else 0)
            assigned[node].extend(idx[pos:pos + take].tolist())
            pos += take
        extra_cursor += extra
    shards = []
    for node in range(n_nodes):
        rows = np.asarray(sorted(assigned[node]), dtype=np.int64)
        shards.append(
            DataShard(
                owner=node,
                features=dataset.features[rows],
                labels=dataset.labels[rows],
                example_ids=dataset.example_ids[rows],
                train_mask=_stratified_train_mask(dataset.labels[rows], make_rng(seed, "split", node)),
                num_classes=dataset.num_classes,
            )
        )
    return shards


def _stratified_train_mask(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """80% train per class (rounded down, at least 1 when the class has >= 2
    examples), the rest validation."""
    mask = np.zeros(len(labels), dtype=bool)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_train = int(TRAIN_FRACTION * len(idx))
        if n_train == 0 and len(idx) >= 2:
            n_train = 1
        mask[idx[:n_train]] = True
    return mask


def init_params(feature_dim: int, hidden_layers: tuple[int, ...], num_classes: int, seed: int) -> LayeredParams:
    """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] for each layer."""
    rng = make_rng(seed, "init")
    dims = [feature_dim, *hidden_layers, num_classes]
    blocks = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        blocks.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        blocks.append(rng.uniform(-bound, bound, size=fan_out))
    return LayeredParams(tuple(blocks))


def _unpack(model: LayeredParams) -> list[tuple[np.ndarray, np.ndarray]]:
    if model.num_layers % 2 != 0:
        raise ValueError("expected alternating weight/bias blocks")
    return [(model.layers[i], model.layers[i + 1]) for i in range(0, model.num_layers, 2)]


def _forward(pairs, x: np.ndarray):
    """Returns (logits, activations) with activations[0] = x."""
    acts = [x]
    h = x
    for w, b in pairs[:-1]:
        h = np.maximum(0.0, h @ w + b)
        acts.append(h)
    w, b = pairs[-1]
    return h @ w + b, acts


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _loss_and_grads(pairs, x: np.ndarray, y: np.ndarray):
    logits, acts = _forward(pairs, x)
    log_probs = _log_softmax(logits)
    n = len(y)
    loss = -float(log_probs[np.arange(n), y].mean())
    delta = np.exp(log_probs)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = []
    for layer in range(len(pairs) - 1, -1, -1):
        w, _ = pairs[layer]
        grads.append((acts[layer].T @ delta, delta.sum(axis=0)))
        if layer > 0:
            delta = (delta @ w.T) * (acts[layer] > 0)
    grads.reverse()
    return loss, grads


def _mean_loss(pairs, x: np.ndarray, y: np.ndarray) -> float:
    logits, _ = _forward(pairs, x)
    log_probs = _log_softmax(logits)
    return -float(log_probs[np.arange(len(y)), y].mean())


def local_train(start: LayeredParams, shard: DataShard, cfg: TrainConfig, seed: int) -> LayeredParams:
    """Mini-batch SGD on cross-entropy over the shard's train split.

    Deterministic per (start, shard, seed). Gradients are clipped to
    cfg.max_grad_norm globally per batch so resuming from extreme parameters
    stays finite; a non-finite loss still raises DivergenceError.
    """
    x, y = shard.train_features, shard.train_labels
    if x.shape[1] != start.layers[0].shape[0]:
        raise ValueError(
            f"model expects {start.layers[0].shape[0]} features, shard has {x.shape[1]}"
        )
    if shard.num_classes != start.layers[-1].shape[0]:
        raise ValueError(
            f"model has {start.layers[-1].shape[0]} outputs, task has {shard.num_classes} classes"
        )
    if cfg.epochs_per_round == 0:
        return start
    rng = make_rng(seed, "sgd")
    pairs = [(w.copy(), b.copy()) for w, b in _unpack(start)]
    initial_loss = _mean_loss(pairs, x, y)
    for _ in range(cfg.epochs_per_round):
        order = rng.permutation(len(y))
        for lo in range(0, len(y), cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = _loss_and_grads(pairs, x[batch], y[batch])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss on node {shard.owner}; reduce learning_rate")
            if cfg.max_grad_norm:
                total = np.sqrt(sum(float((gw * gw).sum() + (gb * gb).sum()) for gw, gb in grads))
                if total > cfg.max_grad_norm:
                    scale = cfg.max_grad_norm / total
                    grads = [(gw * scale, gb * scale) for gw, gb in grads]
            pairs = [
                (w - cfg.learning_rate * gw, b - cfg.learning_rate * gb)
                for (w, b), (gw, gb) in zip(pairs, grads)
            ]
    final_loss = _mean_loss(pairs, x, y)
    if not np.isfinite(final_loss):
        raise DivergenceError(f"non-finite loss on node {shard.owner}; reduce learning_rate")
    if final_loss > 1.1 * initial_loss:
        logger.warning(
            "training loss rose from %.4f to %.4f on node %d", initial_loss, final_loss, shard.owner
        )
    blocks = []
    for w, b in pairs:
        blocks.extend([w, b])
    return LayeredParams(tuple(blocks))


def predict(model: LayeredParams, features: np.ndarray) -> np.ndarray:
    logits, _ = _forward(_unpack(model), features)
    return logits.argmax(axis=1)


def evaluate(model: LayeredParams, shard: DataShard) -> EvalMetrics:
    """Macro-F1 over the validation split.

    A class with P + R = 0 contributes F1 = 0 (conservative; logged), never 1.
    """
    return evaluate_arrays(model, shard.val_features, shard.val_labels, shard.num_classes)


def evaluate_arrays(model: LayeredParams, features: np.ndarray, labels: np.ndarray, num_classes: int) -> EvalMetrics:
    if len(labels) == 0:
        raise ValueError("empty validation split")
    preds = predict(model, features)
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    precision, recall, f1 = [], [], []
    for c in range(num_classes):
        tp = confusion[c, c]
        predicted = confusion[:, c].sum()
        actual = confusion[c, :].sum()
        p = tp / predicted if predicted else 0.0
        r = tp / actual if actual else 0.0
        precision.append(float(p))
        recall.append(float(r))
        if p + r == 0.0:
            logger.debug("class %d has zero precision and recall, contributing F1=0", c)
            f1.append(0.0)
        else:
            f1.append(2.0 * p * r / (p + r))
    return EvalMetrics(
        macro_f1=float(np.mean(f1)),
        per_class_precision=tuple(precision),
        per_class_recall=tuple(recall),
    )
