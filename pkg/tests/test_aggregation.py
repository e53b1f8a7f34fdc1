import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voyager_sim.aggregation import (
    AggregationInput,
    coordinate_median,
    fed_avg,
    fltrust_local_anchor,
    krum,
    krum_static,
    trimmed_mean,
)
from voyager_sim.exceptions import InsufficientCandidatesError
from voyager_sim.params import LayeredParams


def lp(*blocks):
    return LayeredParams.from_lists(*blocks)


def scalar_input(own, peers, f=0):
    return AggregationInput(lp([own]), tuple((i, lp([p])) for i, p in enumerate(peers)), f)


def krum_oracle(values: list[list[float]], ids: list[int], f: int) -> int:
    """Pure-python reference: full pairwise distances, per-candidate sorted sums."""
    n = len(values)
    k = max(0, n - f - 2)
    scores = []
    for i in range(n):
        dists = []
        for j in range(n):
            if i == j:
                continue
            dists.append(sum((a - b) ** 2 for a, b in zip(values[i], values[j])))
        scores.append(sum(sorted(dists)[:k]))
    return min(range(n), key=lambda i: (scores[i], ids[i]))


def _instances(min_candidates: int = 2):
    """(n_c, dim) then an n_c x dim value matrix; returns the list of vectors."""
    value = st.floats(min_value=-50, max_value=50, allow_nan=False, width=32)

    def rows(shape):
        n_c, dim = shape
        row = st.lists(value, min_size=dim, max_size=dim)
        return st.lists(row, min_size=n_c, max_size=n_c)

    return st.tuples(st.integers(min_candidates, 8), st.integers(1, 20)).flatmap(rows)


instance_strategy = _instances(2)
krum_instance_strategy = _instances(3)


class TestFedAvg:
    def test_no_peers_returns_own(self):
        m = lp([1.0, 2.0])
        assert fed_avg(AggregationInput(m, ())) == m

    def test_midpoint(self):
        out = fed_avg(scalar_input(0.0, [2.0]))
        assert out.layers[0][0] == pytest.approx(1.0)

    def test_mean_of_three(self):
        out = fed_avg(scalar_input(1.0, [2.0, 3.0]))
        assert out.layers[0][0] == pytest.approx(2.0)


class TestKrum:
    def test_spec_example(self):
        # scores with f=1, k=2: 0.0125, 0.005, 0.0125, 0.0325, huge
        inp = scalar_input(0.0, [0.05, 0.1, -0.1, 0.9], f=1)
        model, selected = krum(inp)
        assert selected == 0  # the peer holding 0.05
        assert model.layers[0][0] == pytest.approx(0.05)

    def test_all_identical_picks_lowest_id(self):
        inp = scalar_input(1.0, [1.0, 1.0, 1.0])
        _, selected = krum(inp)
        assert selected == -1  # own id sorts first

    def test_insufficient_candidates_raises(self):
        with pytest.raises(InsufficientCandidatesError):
            krum(scalar_input(0.0, [1.0], f=1))

    def test_static_fallback_single_candidate(self):
        model, selected = krum_static(AggregationInput(lp([7.0]), (), 2))
        assert selected == -1
        assert model.layers[0][0] == 7.0

    def test_static_fallback_reduces_f(self):
        # n_c = 3 < f + 3 with f=2; fallback uses f=0 and still answers
        _, selected = krum_static(scalar_input(0.0, [0.1, 5.0], f=2))
        assert selected in (-1, 0)

    @settings(max_examples=120, deadline=None)
    @given(krum_instance_strategy, st.data())
    def test_matches_brute_force(self, vectors, data):
        f = data.draw(st.integers(0, len(vectors) - 3))
        own, *peers = vectors
        inp = AggregationInput(
            lp(own), tuple((i, lp(p)) for i, p in enumerate(peers)), f
        )
        _, selected = krum(inp)
        ids = [-1] + list(range(len(peers)))
        expected = krum_oracle(vectors, ids, f)
        assert selected == ids[expected]

    @settings(max_examples=40, deadline=None)
    @given(krum_instance_strategy, st.floats(min_value=-20, max_value=20, allow_nan=False))
    def test_translation_invariant(self, vectors, shift):
        own, *peers = vectors
        base = AggregationInput(lp(own), tuple((i, lp(p)) for i, p in enumerate(peers)), 0)
        shifted = AggregationInput(
            lp([v + shift for v in own]),
            tuple((i, lp([v + shift for v in p])) for i, p in enumerate(peers)),
            0,
        )
        assert krum(base)[1] == krum(shifted)[1]


class TestTrimmedMean:
    def test_spec_example(self):
        out = trimmed_mean(scalar_input(1.0, [2.0, 3.0, 4.0, 100.0]), trim_fraction=0.2)
        assert out.layers[0][0] == pytest.approx(3.0)

    def test_zero_trim_is_mean(self):
        out = trimmed_mean(scalar_input(1.0, [2.0, 3.0]), trim_fraction=0.0)
        assert out.layers[0][0] == pytest.approx(2.0)

    def test_all_equal(self):
        out = trimmed_mean(scalar_input(5.0, [5.0, 5.0, 5.0, 5.0]), trim_fraction=0.2)
        assert out.layers[0][0] == pytest.approx(5.0)

    def test_invalid_fraction(self):
        with pytest.raises(ValueError):
            trimmed_mean(scalar_input(1.0, [2.0]), trim_fraction=0.5)

    @settings(max_examples=40)
    @given(instance_strategy, st.integers(0, 1000))
    def test_permutation_invariant(self, vectors, perm_seed):
        own, *peers = vectors
        rng = np.random.Generator(np.random.PCG64(perm_seed))
        order = rng.permutation(len(peers))
        a = trimmed_mean(
            AggregationInput(lp(own), tuple((i, lp(p)) for i, p in enumerate(peers))), 0.2
        )
        b = trimmed_mean(
            AggregationInput(lp(own), tuple((int(i), lp(peers[i])) for i in order)), 0.2
        )
        np.testing.assert_allclose(a.layers[0], b.layers[0], atol=1e-12)

    @settings(max_examples=40)
    @given(instance_strategy)
    def test_matches_python_oracle(self, vectors):
        own, *peers = vectors
        out = trimmed_mean(
            AggregationInput(lp(own), tuple((i, lp(p)) for i, p in enumerate(peers))), 0.2
        )
        n_c = len(vectors)
        t = int(0.2 * n_c)
        for coord in range(len(own)):
            column = sorted(v[coord] for v in vectors)
            kept = column[t : n_c - t] if t else column
            assert out.layers[0][coord] == pytest.approx(
                sum(kept) / len(kept), abs=1e-9
            )


class TestMedian:
    def test_odd_count(self):
        out = coordinate_median(scalar_input(1.0, [2.0, 100.0]))
        assert out.layers[0][0] == 2.0

    def test_even_count_averages_middles(self):
        out = coordinate_median(scalar_input(1.0, [3.0]))
        assert out.layers[0][0] == 2.0

    def test_identical_models(self):
        out = coordinate_median(scalar_input(4.0, [4.0, 4.0]))
        assert out.layers[0][0] == 4.0

    @settings(max_examples=40)
    @given(instance_strategy)
    def test_matches_statistics_median(self, vectors):
        own, *peers = vectors
        out = coordinate_median(
            AggregationInput(lp(own), tuple((i, lp(p)) for i, p in enumerate(peers)))
        )
        for coord in range(len(own)):
            expected = statistics.median(v[coord] for v in vectors)
            assert out.layers[0][coord] == pytest.approx(expected, abs=1e-12)


class TestFltrust:
    def test_identical_peer_returns_own(self):
        m = lp([1.0, 2.0])
        out = fltrust_local_anchor(AggregationInput(m, ((0, m),)))
        assert out == m

    def test_negative_similarity_clipped(self):
        own = lp([1.0, 0.0])
        peer = lp([-1.0, 0.0])
        assert fltrust_local_anchor(AggregationInput(own, ((0, peer),))) == own

    def test_orthogonal_peer_weight_zero(self):
        own = lp([1.0, 0.0])
        peer = lp([0.0, 1.0])
        assert fltrust_local_anchor(AggregationInput(own, ((0, peer),))) == own

    def test_peer_rescaled_to_anchor_norm(self):
        own = lp([2.0, 0.0])
        peer = lp([20.0, 0.0])  # same direction, 10x magnitude
        out = fltrust_local_anchor(AggregationInput(own, ((0, peer),)))
        np.testing.assert_allclose(out.layers[0], own.layers[0], atol=1e-12)


class TestBreakdown:
    def test_robust_rules_survive_outliers_fedavg_does_not(self):
        own = lp([0.01])
        peers = [0.02, -0.01, 0.03, -0.02, 0.01, 0.0] + [1000.0, 1000.0, 1000.0]
        inp = AggregationInput(own, tuple((i, lp([p])) for i, p in enumerate(peers)), 3)
        krum_model, _ = krum(inp)
        assert abs(krum_model.layers[0][0]) <= 1.0
        assert abs(trimmed_mean(inp, 0.3).layers[0][0]) <= 1.0
        assert abs(coordinate_median(inp).layers[0][0]) <= 1.0
        assert abs(fed_avg(inp).layers[0][0]) >= 299.0
