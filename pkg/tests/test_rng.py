"""Random streams: determinism, substream independence, sampling laws."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recdrop.errors import InputError
from recdrop.numerics import MAX_SEED, Rng, derive_seed, sample_categorical


class TestUniformInt:
    def test_degenerate_range(self):
        rng = Rng(1)
        assert all(rng.uniform_int(5, 5) == 5 for _ in range(20))

    def test_rejects_empty_range(self):
        with pytest.raises(InputError):
            Rng(1).uniform_int(3, 2)

    def test_frequencies_within_five_sigma(self):
        draws = Rng(99).substream("freq").uniform_int_array(0, 9, 10**6)
        counts = np.bincount(draws, minlength=10)
        expected = 10**5
        sigma = np.sqrt(10**6 * 0.1 * 0.9)
        assert np.abs(counts - expected).max() <= 5 * sigma

    def test_determinism(self):
        a = [Rng(42).uniform_int(0, 1000) for _ in range(5)]
        b = [Rng(42).uniform_int(0, 1000) for _ in range(5)]
        seq_a = Rng(42)
        seq_b = Rng(42)
        assert a == b
        assert [seq_a.uniform_int(0, 9) for _ in range(64)] == [
            seq_b.uniform_int(0, 9) for _ in range(64)
        ]


class TestCategorical:
    def test_point_mass(self):
        weights = np.zeros(10)
        weights[3] = 1.0
        rng = Rng(0)
        assert all(sample_categorical(rng, weights) == 3 for _ in range(50))

    def test_uniform_frequencies_within_five_sigma(self):
        weights = np.full(100, 0.01)
        rng = Rng(7).substream("cat")
        n = 10**6
        counts = np.bincount(
            [sample_categorical(rng, weights) for _ in range(n)], minlength=100
        )
        sigma = np.sqrt(n * 0.01 * 0.99)
        assert np.abs(counts - n * 0.01).max() <= 5 * sigma

    def test_clustered_weights_concentrate(self):
        # ten entries of 0.07 in one block, the rest spread evenly
        weights = np.full(100, 0.3 / 90)
        weights[40:50] = 0.07
        rng = Rng(11).substream("cluster")
        n = 20000
        hits = sum(40 <= sample_categorical(rng, weights) < 50 for _ in range(n))
        sigma = np.sqrt(n * 0.7 * 0.3)
        assert abs(hits - 0.7 * n) <= 5 * sigma

    def test_zero_weight_entries_never_drawn(self):
        weights = np.array([0.5, 0.0, 0.5, 0.0])
        rng = Rng(3)
        assert {sample_categorical(rng, weights) for _ in range(200)} == {0, 2}

    def test_bad_weights_rejected(self):
        rng = Rng(0)
        with pytest.raises(InputError):
            sample_categorical(rng, [0.5, -0.1, 0.6])
        with pytest.raises(InputError):
            sample_categorical(rng, [0.5, 0.4])  # sums to 0.9


class TestSubstreams:
    def test_seed_validation(self):
        with pytest.raises(InputError):
            Rng(-1)
        with pytest.raises(InputError):
            Rng(MAX_SEED + 1)
        Rng(MAX_SEED)  # boundary is valid

    def test_same_path_same_stream(self):
        a = Rng(5).substream("simulation", 3)
        b = Rng(5).substream("simulation", 3)
        assert np.array_equal(a.random(32), b.random(32))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=MAX_SEED))
    def test_distinct_labels_distinct_streams(self, seed):
        labels = ("simulation", "initialization", "dropout", "batching")
        outputs = {
            label: tuple(Rng(seed).substream(label).uniform_int_array(0, 2**32, 64))
            for label in labels
        }
        values = list(outputs.values())
        for i in range(len(values)):
            for j in range(i + 1, len(values)):
                assert values[i] != values[j]

    def test_nested_paths_differ(self):
        root = Rng(8)
        a = root.substream("a").substream("b")
        b = root.substream("a", "b")
        # same canonical path -> same stream
        assert np.array_equal(a.random(8), b.random(8))
        assert not np.array_equal(root.substream("ab").random(8), a.random(8))

    def test_substream_requires_label(self):
        with pytest.raises(InputError):
            Rng(1).substream()


class TestDeriveSeed:
    def test_deterministic_and_distinct(self):
        s1 = derive_seed(123, "sweep", 0, 0)
        assert s1 == derive_seed(123, "sweep", 0, 0)
        assert s1 != derive_seed(123, "sweep", 0, 1)
        assert s1 != derive_seed(124, "sweep", 0, 0)
        assert 0 <= s1 <= MAX_SEED
