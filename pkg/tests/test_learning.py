import numpy as np
import pytest
from sklearn.metrics import f1_score

from voyager_sim.exceptions import DivergenceError, InsufficientDataError
from voyager_sim.learning import (
    DataShard,
    SyntheticTask,
    TrainConfig,
    evaluate,
    evaluate_arrays,
    generate_task,
    init_params,
    local_train,
    partition_iid,
    predict,
    _loss_and_grads,
    _mean_loss,
    _unpack,
)
from voyager_sim.params import LayeredParams


ZERO_NOISE = SyntheticTask(num_classes=3, samples_per_class=100, noise_std=0.0, seed=3)


def make_shard(features, labels, train_mask, num_classes, owner=0):
    n = len(labels)
    return DataShard(
        owner=owner,
        features=np.asarray(features, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        example_ids=np.arange(n, dtype=np.int64),
        train_mask=np.asarray(train_mask, dtype=bool),
        num_classes=num_classes,
    )


class TestGenerateTask:
    def test_zero_noise_points_sit_on_centers(self):
        dataset = generate_task(ZERO_NOISE)
        centers = ZERO_NOISE.centers()
        for row in range(len(dataset)):
            np.testing.assert_array_equal(dataset.features[row], centers[dataset.labels[row]])
        # so a 1-nearest-center rule is perfect
        distances = np.linalg.norm(dataset.features[:, None, :] - centers[None], axis=2)
        preds = distances.argmin(axis=1)
        assert f1_score(dataset.labels, preds, average="macro") == 1.0

    def test_deterministic(self):
        a = generate_task(ZERO_NOISE)
        b = generate_task(ZERO_NOISE)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.example_ids, b.example_ids)

    def test_counts_per_class(self):
        dataset = generate_task(SyntheticTask(num_classes=3, samples_per_class=100, seed=1))
        assert len(dataset) == 300
        assert all((dataset.labels == c).sum() == 100 for c in range(3))

    def test_overlapping_centers_warn(self, caplog):
        task = SyntheticTask(
            num_classes=2,
            samples_per_class=5,
            noise_std=2.0,
            class_centers=((0.0, 0.0), (1.0, 0.0)),
            feature_dim=2,
        )
        with caplog.at_level("WARNING"):
            generate_task(task)
        assert any("overlap" in r.message for r in caplog.records)

    def test_coincident_centers_rejected(self):
        task = SyntheticTask(
            num_classes=2, samples_per_class=5, feature_dim=2,
            class_centers=((1.0, 0.0), (1.0, 0.0)),
        )
        with pytest.raises(ValueError):
            generate_task(task)

    def test_validation(self):
        with pytest.raises(ValueError):
            SyntheticTask(num_classes=1)
        with pytest.raises(ValueError):
            SyntheticTask(feature_dim=1)
        with pytest.raises(ValueError):
            SyntheticTask(noise_std=-0.1)


class TestPartition:
    def test_single_node_gets_everything(self):
        dataset = generate_task(ZERO_NOISE)
        shards = partition_iid(dataset, 1, seed=5)
        assert len(shards) == 1
        assert sorted(shards[0].example_ids) == sorted(dataset.example_ids)

    def test_equal_sizes(self):
        dataset = generate_task(ZERO_NOISE)  # 300 examples
        shards = partition_iid(dataset, 10, seed=5)
        assert [len(s) for s in shards] == [30] * 10

    def test_true_partition(self):
        dataset = generate_task(SyntheticTask(num_classes=4, samples_per_class=77, seed=2))
        shards = partition_iid(dataset, 7, seed=9)
        sizes = [len(s) for s in shards]
        assert max(sizes) - min(sizes) <= 1
        all_ids = np.concatenate([s.example_ids for s in shards])
        assert len(all_ids) == len(dataset)
        assert len(np.unique(all_ids)) == len(dataset)  # disjoint
        assert sorted(all_ids) == sorted(dataset.example_ids)  # union

    def test_stratified_within_ten_points(self):
        dataset = generate_task(SyntheticTask(num_classes=4, samples_per_class=250, seed=2))
        shards = partition_iid(dataset, 10, seed=9)
        global_props = np.bincount(dataset.labels, minlength=4) / len(dataset)
        for shard in shards:
            props = np.bincount(shard.labels, minlength=4) / len(shard)
            assert np.all(np.abs(props - global_props) <= 0.10)

    def test_split_is_80_20_and_stratified(self):
        dataset = generate_task(SyntheticTask(num_classes=4, samples_per_class=250, seed=2))
        shards = partition_iid(dataset, 10, seed=9)
        for shard in shards:
            assert shard.train_mask.sum() == 80
            assert (~shard.train_mask).sum() == 20
            assert set(np.unique(shard.val_labels)) == {0, 1, 2, 3}

    def test_insufficient_data(self):
        dataset = generate_task(SyntheticTask(num_classes=2, samples_per_class=2, seed=1))
        with pytest.raises(InsufficientDataError):
            partition_iid(dataset, 5, seed=1)

    def test_deterministic(self):
        dataset = generate_task(ZERO_NOISE)
        a = partition_iid(dataset, 10, seed=5)
        b = partition_iid(dataset, 10, seed=5)
        for sa, sb in zip(a, b):
            np.testing.assert_array_equal(sa.example_ids, sb.example_ids)
            np.testing.assert_array_equal(sa.train_mask, sb.train_mask)


class TestTraining:
    def setup_method(self):
        dataset = generate_task(ZERO_NOISE)
        self.shard = partition_iid(dataset, 2, seed=4)[0]
        self.start = init_params(ZERO_NOISE.feature_dim, (32, 16), ZERO_NOISE.num_classes, seed=1)

    def test_zero_epochs_returns_start(self):
        cfg = TrainConfig(epochs_per_round=0)
        assert local_train(self.start, self.shard, cfg, seed=1) is self.start

    def test_deterministic(self):
        cfg = TrainConfig()
        a = local_train(self.start, self.shard, cfg, seed=7)
        b = local_train(self.start, self.shard, cfg, seed=7)
        assert a == b

    def test_seed_changes_result(self):
        cfg = TrainConfig()
        a = local_train(self.start, self.shard, cfg, seed=7)
        b = local_train(self.start, self.shard, cfg, seed=8)
        assert a != b

    def test_zero_noise_three_epochs_accuracy(self):
        cfg = TrainConfig(epochs_per_round=3, learning_rate=0.1, batch_size=16)
        trained = local_train(self.start, self.shard, cfg, seed=2)
        preds = predict(trained, self.shard.train_features)
        accuracy = (preds == self.shard.train_labels).mean()
        assert accuracy >= 0.95

    def test_training_reduces_loss(self):
        cfg = TrainConfig()
        trained = local_train(self.start, self.shard, cfg, seed=2)
        x, y = self.shard.train_features, self.shard.train_labels
        assert _mean_loss(_unpack(trained), x, y) < _mean_loss(_unpack(self.start), x, y)

    def test_dimension_mismatch(self):
        bad = init_params(5, (8,), 3, seed=1)
        with pytest.raises(ValueError):
            local_train(bad, self.shard, TrainConfig(), seed=1)

    def test_class_count_mismatch(self):
        bad = init_params(ZERO_NOISE.feature_dim, (8,), 7, seed=1)
        with pytest.raises(ValueError):
            local_train(bad, self.shard, TrainConfig(), seed=1)

    def test_divergence_raises(self):
        cfg = TrainConfig(learning_rate=1e12, max_grad_norm=0.0)
        with pytest.raises(DivergenceError):
            local_train(self.start, self.shard, cfg, seed=1)

    def test_gradients_match_finite_differences(self):
        rng = np.random.Generator(np.random.PCG64(3))
        x = rng.normal(size=(5, 4))
        y = np.array([0, 1, 2, 0, 1])
        model = init_params(4, (6, 5), 3, seed=9)
        pairs = _unpack(model)
        _, grads = _loss_and_grads(pairs, x, y)
        eps = 1e-6
        for layer in range(len(pairs)):
            w, b = pairs[layer]
            for arr, grad, pick in ((w, grads[layer][0], (0, 0)), (b, grads[layer][1], (0,))):
                bumped = [(_w.copy(), _b.copy()) for _w, _b in pairs]
                target = bumped[layer][0] if arr is w else bumped[layer][1]
                target[pick] += eps
                up = _mean_loss(bumped, x, y)
                target[pick] -= 2 * eps
                down = _mean_loss(bumped, x, y)
                numeric = (up - down) / (2 * eps)
                assert grad[pick] == pytest.approx(numeric, abs=1e-5)


class TestEvaluate:
    def test_perfect_predictions(self):
        task = ZERO_NOISE
        dataset = generate_task(task)
        shard = partition_iid(dataset, 2, seed=4)[1]
        model = local_train(
            init_params(task.feature_dim, (32, 16), task.num_classes, seed=1),
            shard,
            TrainConfig(epochs_per_round=5),
            seed=2,
        )
        metrics = evaluate(model, shard)
        assert metrics.macro_f1 == 1.0

    def test_constant_predictor_two_balanced_classes(self):
        # the bias forces class 0 always: F1 = (2/3 + 0) / 2
        labels = np.array([0, 0, 1, 1])
        model = LayeredParams((np.zeros((2, 2)), np.array([1.0, 0.0])))
        metrics = evaluate_arrays(model, np.zeros((4, 2)), labels, 2)
        assert metrics.macro_f1 == pytest.approx(1 / 3, abs=1e-9)

    def test_all_wrong_two_classes(self):
        # weights route each one-hot feature to the other class
        model = LayeredParams((np.array([[0.0, 1.0], [1.0, 0.0]]), np.zeros(2)))
        features = np.array([[1.0, 0.0], [0.0, 1.0]])
        labels = np.array([0, 1])
        metrics = evaluate_arrays(model, features, labels, 2)
        assert metrics.macro_f1 == 0.0

    def test_permutation_invariant(self):
        rng = np.random.Generator(np.random.PCG64(5))
        features = rng.normal(size=(40, 3))
        labels = rng.integers(0, 3, size=40)
        model = init_params(3, (8,), 3, seed=2)
        base = evaluate_arrays(model, features, labels, 3)
        order = rng.permutation(40)
        shuffled = evaluate_arrays(model, features[order], labels[order], 3)
        assert base == shuffled

    def test_matches_sklearn(self):
        rng = np.random.Generator(np.random.PCG64(6))
        model = init_params(4, (8, 6), 5, seed=3)
        features = rng.normal(size=(60, 4))
        labels = rng.integers(0, 5, size=60)
        preds = predict(model, features)
        mine = evaluate_arrays(model, features, labels, 5).macro_f1
        theirs = f1_score(labels, preds, labels=list(range(5)), average="macro", zero_division=0)
        assert mine == pytest.approx(theirs, abs=1e-12)

    def test_empty_validation_split(self):
        model = init_params(2, (4,), 2, seed=1)
        with pytest.raises(ValueError):
            evaluate_arrays(model, np.zeros((0, 2)), np.zeros(0, dtype=np.int64), 2)

    def test_absent_class_contributes_zero_not_one(self):
        # class 2 never appears in truth or predictions: macro includes a 0
        model = LayeredParams((np.array([[5.0, 0.0, 0.0], [0.0, 5.0, 0.0]]), np.zeros(3)))
        features = np.array([[1.0, 0.0], [0.0, 1.0]])
        labels = np.array([0, 1])
        metrics = evaluate_arrays(model, features, labels, 3)
        assert metrics.macro_f1 == pytest.approx(2 / 3, abs=1e-9)


class TestInitParams:
    def test_bounds_follow_fan_in(self):
        model = init_params(16, (4,), 3, seed=1)
        w1, b1, w2, b2 = model.layers
        assert w1.shape == (16, 4) and b1.shape == (4,)
        assert w2.shape == (4, 3) and b2.shape == (3,)
        assert np.abs(w1).max() <= 1 / 4
        assert np.abs(w2).max() <= 1 / 2

    def test_deterministic(self):
        assert init_params(8, (4, 4), 3, seed=5) == init_params(8, (4, 4), 3, seed=5)
        assert init_params(8, (4, 4), 3, seed=5) != init_params(8, (4, 4), 3, seed=6)
