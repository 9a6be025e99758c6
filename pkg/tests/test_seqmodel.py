"""Model forward semantics, the loss, batching, and checkpoints."""

import numpy as np
import pytest

from recdrop.errors import InputError
from recdrop.numerics import Rng
from recdrop.seqmodel import (
    ModelConfig,
    ModelParams,
    forward,
    forward_batch,
    init_params,
    load_checkpoint,
    loss_nll,
    predict_batch,
    save_checkpoint,
)

SMALL = ModelConfig(vocab_size=20, embed_dim=5, hidden_dim=8, head_dims=(8, 7))


def small_params(seed=3):
    return init_params(SMALL, Rng(seed).substream("init"))


class TestInit:
    def test_determinism(self):
        a = init_params(SMALL, Rng(11).substream("init"))
        b = init_params(SMALL, Rng(11).substream("init"))
        for (_, ta), (_, tb) in zip(a.tensors(), b.tensors()):
            assert np.array_equal(ta, tb)

    def test_biases_exactly_zero(self):
        params = small_params()
        for name in ("b_z", "b_r", "b_c", "b1", "b2"):
            assert np.all(getattr(params, name) == 0.0)

    def test_matrix_std_matches_uniform_moment(self):
        # std of U(-s, s) is s/sqrt(3); check on a >=10^4-entry tensor
        config = ModelConfig(vocab_size=500, embed_dim=25, hidden_dim=4, head_dims=(4, 4))
        params = init_params(config, Rng(5).substream("init"))
        assert params.embed.size >= 10**4
        scale = 1.0 / np.sqrt(25)
        expected_std = scale / np.sqrt(3)
        assert abs(params.embed.std() - expected_std) <= 0.2 * expected_std
        assert np.abs(params.embed).max() <= scale

    def test_invalid_config_rejected(self):
        with pytest.raises(InputError):
            ModelConfig(vocab_size=0)
        with pytest.raises(InputError):
            ModelConfig(vocab_size=10, temperature=0.0)


class TestForward:
    def test_zero_weights_give_uniform(self):
        params = ModelParams.zeros(SMALL)
        _, dist = forward(params, np.array([1, 2, 3]))
        np.testing.assert_allclose(dist, 1.0 / SMALL.vocab_size, atol=1e-15)

    def test_distribution_normalized(self):
        params = small_params()
        trace = forward_batch(params, [np.array([4, 5]), np.array([1, 2, 3, 4, 5, 6])])
        sums = trace.probs.sum(axis=1)
        assert np.abs(sums - 1.0).max() <= 1e-9
        assert trace.probs.min() >= 0.0

    def test_temperature_monotonicity(self):
        params = small_params()
        seq = np.array([7, 3, 9, 1])
        hot = ModelParams(
            ModelConfig(
                SMALL.vocab_size, SMALL.embed_dim, SMALL.hidden_dim, SMALL.head_dims,
                temperature=2.0,
            ),
            **{n: t for n, t in params.tensors()},
        )
        _, cold_dist = forward(params, seq)
        _, hot_dist = forward(hot, seq)
        assert np.argmax(cold_dist) == np.argmax(hot_dist)

        def entropy(p):
            return float(-(p * np.log(p)).sum())

        assert entropy(hot_dist) > entropy(cold_dist)

    def test_out_of_range_items_rejected(self):
        params = small_params()
        with pytest.raises(InputError):
            forward(params, np.array([0, SMALL.vocab_size]))
        with pytest.raises(InputError):
            forward(params, np.array([-1, 0]))

    def test_h0_is_zero_and_lengths_tracked(self):
        params = small_params()
        trace, _ = forward(params, np.array([1, 2, 3, 4]))
        states = trace.hidden_states()
        assert states.shape == (5, SMALL.hidden_dim)
        assert np.all(trace.hs[0] == 0.0)

    def test_batched_matches_single(self):
        params = small_params()
        seqs = [np.array([3, 1, 4, 1, 5]), np.array([9, 2]), np.array([6, 5, 3, 5, 8, 9, 7])]
        batched = forward_batch(params, seqs)
        for i, seq in enumerate(seqs):
            _, single = forward(params, seq)
            np.testing.assert_allclose(batched.probs[i], single, atol=1e-14)

    def test_predict_batch_matches_forward(self):
        params = small_params()
        seqs = [np.array([3, 1, 4]), np.array([1, 5, 9, 2]), np.array([6])]
        probs = predict_batch(params, seqs, chunk=2)
        full = forward_batch(params, seqs)
        np.testing.assert_allclose(probs, full.probs, atol=1e-14)

    def test_bit_reproducible(self):
        params = small_params()
        seq = np.array([2, 7, 1, 8, 2, 8])
        _, a = forward(params, seq)
        _, b = forward(params, seq)
        assert np.array_equal(a, b)


class TestLoss:
    def test_point_mass_is_zero(self):
        dist = np.zeros(10)
        dist[4] = 1.0
        assert loss_nll(dist, 4) == 0.0

    def test_uniform_closed_form(self):
        dist = np.full(100, 0.01)
        assert loss_nll(dist, 42) == pytest.approx(np.log(100.0), abs=1e-12)

    def test_matches_direct_evaluation(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            raw = rng.random(16)
            dist = raw / raw.sum()
            target = int(rng.integers(0, 16))
            assert loss_nll(dist, target) == -np.log(dist[target])

    def test_floor_prevents_infinity(self):
        dist = np.zeros(4)
        dist[0] = 1.0
        assert loss_nll(dist, 3) == pytest.approx(-np.log(1e-12))

    def test_bad_target_rejected(self):
        with pytest.raises(InputError):
            loss_nll(np.full(4, 0.25), 4)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        params = small_params()
        meta = {"variant": "fixed", "expected_dropout": 2.0, "seed": 3}
        path = save_checkpoint(tmp_path / "m.ckpt", params, meta=meta)
        loaded, loaded_meta = load_checkpoint(path)
        assert loaded.config == params.config
        assert loaded_meta == meta
        for (_, a), (_, b) in zip(params.tensors(), loaded.tensors()):
            assert np.array_equal(a, b)

    def test_deterministic_bytes(self, tmp_path):
        params = small_params()
        p1 = save_checkpoint(tmp_path / "a.ckpt", params)
        p2 = save_checkpoint(tmp_path / "b.ckpt", params)
        assert p1.read_bytes() == p2.read_bytes()

    def test_payload_corruption_detected(self, tmp_path):
        path = save_checkpoint(tmp_path / "m.ckpt", small_params())
        blob = bytearray(path.read_bytes())
        blob[-5] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(InputError, match="checksum"):
            load_checkpoint(path)

    def test_header_garbage_detected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"\x00\x01binarygarbage\n" + b"\x00" * 64)
        with pytest.raises(InputError):
            load_checkpoint(path)

    def test_shape_mismatch_detected(self, tmp_path):
        import json

        path = save_checkpoint(tmp_path / "m.ckpt", small_params())
        header_line, payload = path.read_bytes().split(b"\n", 1)
        header = json.loads(header_line)
        header["tensors"][0]["shape"] = [1, 1]
        path.write_bytes(json.dumps(header, sort_keys=True).encode() + b"\n" + payload)
        with pytest.raises(InputError, match="shape"):
            load_checkpoint(path)
